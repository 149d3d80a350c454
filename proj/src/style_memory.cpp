#include "glyphgen/style_memory.hpp"

#include <cmath>
#include <string>

#include "glyphgen/error.hpp"
#include "glyphgen/nn_util.hpp"

namespace glyphgen {

StyleMemory::StyleMemory(int num_styles, int code_dim, double momentum, double tau,
                         torch::Dtype dtype)
    : StyleMemory(torch::ones({kNumScales, num_styles, code_dim}, torch::dtype(dtype)), momentum,
                  tau, true) {}

StyleMemory::StyleMemory(torch::Tensor centers, double momentum, double tau, bool normalize)
    : centers_(std::move(centers)), momentum_(momentum), tau_(tau) {
  if (centers_.dim() != 3 || centers_.size(0) != kNumScales)
    throw ShapeError("memory centers must be 3 x S x K");
  if (centers_.size(1) < 1) throw ConfigError("memory needs at least one style");
  if (!(momentum_ >= 0.0 && momentum_ <= 1.0)) throw ConfigError("momentum must lie in [0,1]");
  if (!(tau_ > 0.0)) throw ConfigError("tau must be positive");
  centers_ = centers_.detach().clone();
  if (normalize)
    for (int i = 0; i < kNumScales; ++i) centers_[i].copy_(l2_normalize_rows(centers_[i]));
}

StyleMemory StyleMemory::from_centers(torch::Tensor centers, double momentum, double tau) {
  return StyleMemory(std::move(centers), momentum, tau, true);
}

StyleMemory StyleMemory::restore(torch::Tensor centers, double momentum, double tau) {
  return StyleMemory(std::move(centers), momentum, tau, false);
}

StyleMemory StyleMemory::from_codes(const std::vector<StyleCode>& codes,
                                    std::span<const int> styles, int num_styles, double momentum,
                                    double tau) {
  if (codes.size() != styles.size()) throw ConfigError("codes and styles differ in length");
  if (codes.empty()) throw IntegrityError("no codes to build the memory from");
  const auto dim = codes[0].z[0].size(1);
  auto sums = torch::zeros({kNumScales, num_styles, dim}, codes[0].z[0].options());
  std::vector<int> counts(num_styles, 0);
  for (std::size_t n = 0; n < codes.size(); ++n) {
    const int s = styles[n];
    if (s < 0 || s >= num_styles) throw IndexError("style " + std::to_string(s) + " out of range");
    ++counts[s];
    for (int i = 0; i < kNumScales; ++i) sums[i][s] += codes[n].z[i].detach().reshape({dim});
  }
  for (int s = 0; s < num_styles; ++s)
    if (counts[s] == 0)
      throw IntegrityError("style " + std::to_string(s) + " has no glyphs to form a center");
  return StyleMemory(sums, momentum, tau, true);
}

void StyleMemory::check_style(int style) const {
  if (style < 0 || style >= num_styles())
    throw IndexError("style " + std::to_string(style) + " not in memory of " +
                     std::to_string(num_styles()) + " styles");
}

void StyleMemory::momentum_update(const StyleCode& query, int style) {
  check_style(style);
  torch::NoGradGuard no_grad;
  if (momentum_ == 1.0) return;
  for (int i = 0; i < kNumScales; ++i) {
    auto q = query.z[i].detach().reshape({1, code_dim()}).to(centers_.dtype());
    if (momentum_ == 0.0) {
      centers_[i][style].copy_(q.squeeze(0));  // queries are already unit norm
      continue;
    }
    auto c = centers_[i][style].unsqueeze(0);
    centers_[i][style].copy_(l2_normalize_rows(momentum_ * c + (1.0 - momentum_) * q).squeeze(0));
  }
}

void StyleMemory::momentum_update(const StyleCode& query, std::span<const int> styles) {
  if (static_cast<int64_t>(styles.size()) != query.batch_size())
    throw ConfigError("momentum_update: one style per query row required");
  for (std::size_t n = 0; n < styles.size(); ++n)
    momentum_update(query.row(static_cast<int64_t>(n)), styles[n]);
}

StyleMemory init_epoch(MultiLayerStyleProjector& msp, std::span<const GrayImage* const> images,
                       std::span<const int> styles, int num_styles, double momentum, double tau) {
  if (images.size() != styles.size()) throw ConfigError("init_epoch: images/styles mismatch");
  if (images.empty()) throw IntegrityError("init_epoch: no training glyphs");
  return StyleMemory::from_codes(batch_encode(msp, images), styles, num_styles, momentum, tau);
}

CcsResult ccs_loss(const StyleCode& query, int positive_style, const StyleMemory& memory) {
  if (positive_style < 0 || positive_style >= memory.num_styles())
    throw IndexError("positive style " + std::to_string(positive_style) + " not in memory");
  CcsResult out;
  const auto centers = memory.centers().detach().to(torch::kDouble);
  const int S = memory.num_styles();
  for (int i = 0; i < kNumScales; ++i) {
    auto q = query.z[i].detach().to(torch::kDouble).reshape({memory.code_dim()});
    auto c = centers[i];  // S x K
    auto logits = torch::mv(c, q) / memory.tau();
    auto l = logits.accessor<double, 1>();
    double mx = l[0];
    for (int j = 1; j < S; ++j) mx = std::max(mx, l[j]);
    double sum = 0.0;
    std::vector<double> e(S);
    for (int j = 0; j < S; ++j) sum += (e[j] = std::exp(l[j] - mx));
    out.loss += (mx - l[positive_style]) + std::log(sum);
    // d/dq [-l_+ + logsumexp(l)] = (sum_j p_j c_j - c_+) / tau
    auto p = torch::empty({S}, torch::kDouble);
    for (int j = 0; j < S; ++j) p[j] = e[j] / sum;
    out.grad[i] = (torch::mv(c.t(), p) - c[positive_style]) / memory.tau();
  }
  return out;
}

torch::Tensor ccs_loss_batch(const StyleCode& query, const torch::Tensor& styles,
                             const StyleMemory& memory) {
  const auto n = query.batch_size();
  if (styles.numel() != n) throw ConfigError("ccs_loss_batch: one style per query row required");
  if (n == 0) throw ConfigError("ccs_loss_batch: empty batch");
  auto targets = styles.to(torch::kLong).reshape({n});
  if (targets.min().item<int64_t>() < 0 || targets.max().item<int64_t>() >= memory.num_styles())
    throw IndexError("ccs_loss_batch: style id outside memory");
  torch::Tensor total;
  for (int i = 0; i < kNumScales; ++i) {
    auto c = memory.centers()[i].to(query.z[i].dtype());
    auto logits = torch::mm(query.z[i], c.t()) / memory.tau();
    auto term = torch::nll_loss(torch::log_softmax(logits, 1), targets);
    total = i == 0 ? term : total + term;
  }
  return total;
}

}  // namespace glyphgen
