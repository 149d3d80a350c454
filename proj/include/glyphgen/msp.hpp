#pragma once

#include <array>
#include <span>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "glyphgen/png_io.hpp"

namespace glyphgen {

inline constexpr int kNumScales = 3;

/// Three per-scale style codes. Each tensor is N x K with unit-norm rows.
struct StyleCode {
  std::array<torch::Tensor, kNumScales> z;

  int64_t batch_size() const { return z[0].size(0); }
  /// Row `n` of every scale, as a batch of one.
  StyleCode row(int64_t n) const;
  StyleCode detach() const;
};

struct MspOptions {
  int image_size = 64;
  std::array<int, kNumScales> widths{64, 128, 256};
  int hidden = 512;
  int code_dim = 256;  // K

  nlohmann::json to_json() const;
  static MspOptions from_json(const nlohmann::json& j);
};

/// Multi-layer style projector. A three-stage convolutional trunk produces
/// feature maps at 1, 1/2 and 1/4 of the input resolution; each map is
/// summarised by channel-wise [average || max] pooling and projected by its
/// own two-layer MLP to a K-dimensional code, which is L2-normalised.
class MultiLayerStyleProjectorImpl : public torch::nn::Module {
 public:
  explicit MultiLayerStyleProjectorImpl(MspOptions options = {});

  /// Images are N x 1 x H x W in [-1,1]; H = W = options().image_size.
  StyleCode forward(const torch::Tensor& images);

  std::array<torch::Tensor, kNumScales> feature_maps(const torch::Tensor& images);
  /// [avg || max] statistics per scale, before the MLP.
  std::array<torch::Tensor, kNumScales> pooled_stats(const torch::Tensor& images);

  const MspOptions& options() const { return options_; }

  torch::nn::Conv2d conv(int scale) const { return convs_[scale]; }
  torch::nn::BatchNorm2d norm(int scale) const { return norms_[scale]; }
  torch::nn::Linear projector_in(int scale) const { return proj_in_[scale]; }
  torch::nn::Linear projector_out(int scale) const { return proj_out_[scale]; }

 private:
  MspOptions options_;
  std::array<torch::nn::Conv2d, kNumScales> convs_{nullptr, nullptr, nullptr};
  std::array<torch::nn::BatchNorm2d, kNumScales> norms_{nullptr, nullptr, nullptr};
  std::array<torch::nn::Linear, kNumScales> proj_in_{nullptr, nullptr, nullptr};
  std::array<torch::nn::Linear, kNumScales> proj_out_{nullptr, nullptr, nullptr};
};
TORCH_MODULE(MultiLayerStyleProjector);

/// Style code of a single image (batch of one).
StyleCode msp_forward(MultiLayerStyleProjector& msp, const GrayImage& image);

/// Encodes every image (in eval mode, without gradients), returning one code per image.
std::vector<StyleCode> batch_encode(MultiLayerStyleProjector& msp,
                                    std::span<const GrayImage* const> images);

}  // namespace glyphgen
