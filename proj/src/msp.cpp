#include "glyphgen/msp.hpp"

#include "glyphgen/error.hpp"
#include "glyphgen/nn_util.hpp"
#include "glyphgen/tensor_image.hpp"

namespace glyphgen {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

StyleCode StyleCode::row(int64_t n) const {
  StyleCode out;
  for (int i = 0; i < kNumScales; ++i) out.z[i] = z[i].slice(0, n, n + 1);
  return out;
}

StyleCode StyleCode::detach() const {
  StyleCode out;
  for (int i = 0; i < kNumScales; ++i) out.z[i] = z[i].detach();
  return out;
}

nlohmann::json MspOptions::to_json() const {
  return {{"image_size", image_size}, {"widths", widths}, {"hidden", hidden}, {"code_dim", code_dim}};
}

MspOptions MspOptions::from_json(const nlohmann::json& j) {
  MspOptions o;
  o.image_size = j.value("image_size", o.image_size);
  o.widths = j.value("widths", o.widths);
  o.hidden = j.value("hidden", o.hidden);
  o.code_dim = j.value("code_dim", o.code_dim);
  return o;
}

MultiLayerStyleProjectorImpl::MultiLayerStyleProjectorImpl(MspOptions options)
    : options_(options) {
  if (options_.image_size % 4 != 0) throw ConfigError("MSP image_size must be divisible by 4");
  int in = 1;
  for (int i = 0; i < kNumScales; ++i) {
    const int out = options_.widths[i];
    const int stride = i == 0 ? 1 : 2;
    convs_[i] = register_module("conv" + std::to_string(i),
                                nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)));
    norms_[i] = register_module("norm" + std::to_string(i), nn::BatchNorm2d(out));
    proj_in_[i] = register_module("proj_in" + std::to_string(i),
                                  nn::Linear(2 * out, options_.hidden));
    proj_out_[i] = register_module("proj_out" + std::to_string(i),
                                   nn::Linear(options_.hidden, options_.code_dim));
    in = out;
  }
}

std::array<torch::Tensor, kNumScales> MultiLayerStyleProjectorImpl::feature_maps(
    const torch::Tensor& images) {
  check_image_batch(images, options_.image_size, "MSP");
  std::array<torch::Tensor, kNumScales> maps;
  torch::Tensor h = images;
  for (int i = 0; i < kNumScales; ++i) {
    h = F::leaky_relu(norms_[i]->forward(convs_[i]->forward(h)),
                      F::LeakyReLUFuncOptions().negative_slope(0.2));
    maps[i] = h;
  }
  return maps;
}

std::array<torch::Tensor, kNumScales> MultiLayerStyleProjectorImpl::pooled_stats(
    const torch::Tensor& images) {
  auto maps = feature_maps(images);
  std::array<torch::Tensor, kNumScales> stats;
  for (int i = 0; i < kNumScales; ++i) {
    auto flat = maps[i].flatten(2);
    stats[i] = torch::cat({flat.mean(2), std::get<0>(flat.max(2))}, 1);
  }
  return stats;
}

StyleCode MultiLayerStyleProjectorImpl::forward(const torch::Tensor& images) {
  auto stats = pooled_stats(images);
  StyleCode code;
  for (int i = 0; i < kNumScales; ++i) {
    auto h = F::leaky_relu(proj_in_[i]->forward(stats[i]),
                           F::LeakyReLUFuncOptions().negative_slope(0.2));
    code.z[i] = l2_normalize_rows(proj_out_[i]->forward(h));
  }
  return code;
}

StyleCode msp_forward(MultiLayerStyleProjector& msp, const GrayImage& image) {
  EvalModeGuard eval(*msp);
  return msp->forward(to_model_input(image));
}

std::vector<StyleCode> batch_encode(MultiLayerStyleProjector& msp,
                                    std::span<const GrayImage* const> images) {
  if (images.empty()) throw ConfigError("batch_encode: empty image list");
  EvalModeGuard eval(*msp);
  torch::NoGradGuard no_grad;
  constexpr std::size_t kChunk = 128;
  std::vector<StyleCode> out;
  out.reserve(images.size());
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    const auto n = std::min(kChunk, images.size() - start);
    auto codes = msp->forward(to_model_input(images.subspan(start, n)));
    for (std::size_t r = 0; r < n; ++r) out.push_back(codes.row(static_cast<int64_t>(r)));
  }
  return out;
}

}  // namespace glyphgen
