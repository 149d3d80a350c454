#include "glyphgen/losses.hpp"

#include <cmath>
#include <sstream>

#include "glyphgen/error.hpp"

namespace glyphgen {

torch::Tensor l1_loss(const torch::Tensor& real, const torch::Tensor& generated) {
  if (real.sizes() != generated.sizes())
    throw ShapeError("l1_loss: shape mismatch " + c10::str(real.sizes()) + " vs " +
                     c10::str(generated.sizes()));
  return (real - generated).abs().mean();
}

double l1_loss(const GrayImage& real, const GrayImage& generated) {
  if (real.height != generated.height || real.width != generated.width)
    throw ShapeError("l1_loss: image sizes differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < real.pixels.size(); ++i)
    sum += std::abs(static_cast<double>(real.pixels[i]) - generated.pixels[i]);
  return sum / static_cast<double>(real.pixels.size());
}

double total_g_loss(double l1, double adv_g, double ccs_g, const TrainConfig& config) {
  if (!std::isfinite(l1) || !std::isfinite(adv_g) || (config.use_ccs && !std::isfinite(ccs_g))) {
    std::ostringstream msg;
    msg << "non-finite generator loss component (l1=" << l1 << ", adv=" << adv_g
        << ", ccs=" << ccs_g << ")";
    throw DivergenceError(msg.str());
  }
  double total = config.lambda1 * l1 + config.lambda2 * adv_g;
  if (config.use_ccs) total += config.lambda3 * ccs_g;
  return total;
}

torch::Tensor total_g_loss(const torch::Tensor& l1, const torch::Tensor& adv_g,
                           const torch::Tensor& ccs_g, const TrainConfig& config) {
  const double ccs_value = config.use_ccs ? ccs_g.item<double>() : 0.0;
  // validates finiteness
  total_g_loss(l1.item<double>(), adv_g.item<double>(), ccs_value, config);
  auto total = config.lambda1 * l1 + config.lambda2 * adv_g;
  if (config.use_ccs) total = total + config.lambda3 * ccs_g;
  return total;
}

}  // namespace glyphgen
