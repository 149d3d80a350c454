#pragma once

#include <array>
#include <span>

#include <json.hpp>
#include <torch/torch.h>

#include "glyphgen/corpus.hpp"

namespace glyphgen {

struct GeneratorOptions {
  int image_size = 64;
  int base_width = 64;  // encoder widths are base, 2*base, 4*base
  int style_dim = 256;  // D_s, width of the fused style vector
  int k_style = kDefaultStyleRefs;
  int res_blocks = 2;

  int bottleneck_channels() const { return 4 * base_width; }
  nlohmann::json to_json() const;
  static GeneratorOptions from_json(const nlohmann::json& j);
};

/// Three-stage convolutional encoder: full, 1/2 and 1/4 resolution outputs.
class ConvEncoderImpl : public torch::nn::Module {
 public:
  explicit ConvEncoderImpl(int base_width);
  std::array<torch::Tensor, 3> forward(const torch::Tensor& x);
  std::array<int, 3> widths() const { return widths_; }

 private:
  std::array<int, 3> widths_;
  torch::nn::Conv2d conv0_{nullptr}, conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(ConvEncoder);

struct AttentionPooled {
  torch::Tensor vector;     // N x out_dim
  torch::Tensor pooled;     // N x C, attention-weighted sum of location features
  torch::Tensor attention;  // N x (H*W), rows sum to 1
};

/// Scores every location with tanh(W h + b) . u (u a learned context vector),
/// softmaxes over locations and pools the features with those weights.
class ContextAwareAttentionImpl : public torch::nn::Module {
 public:
  ContextAwareAttentionImpl(int channels, int out_dim);
  AttentionPooled forward(const torch::Tensor& features);

  torch::nn::Conv2d score_net() const { return score_; }
  torch::Tensor context() const { return context_; }

 private:
  torch::nn::Conv2d score_{nullptr};
  torch::Tensor context_;
  torch::nn::Linear project_{nullptr};
};
TORCH_MODULE(ContextAwareAttention);

struct StyleSummary {
  torch::Tensor v;                   // N x D_s
  std::array<torch::Tensor, 3> per_layer;  // N x D_s each
  torch::Tensor weights;             // N x 3, rows are probability vectors
};

/// Weights the three per-layer style vectors by softmax(score(content)).
class LayerAttentionImpl : public torch::nn::Module {
 public:
  explicit LayerAttentionImpl(int content_channels);
  StyleSummary forward(const torch::Tensor& content_features,
                       const std::array<torch::Tensor, 3>& per_layer);
  torch::nn::Linear scorer() const { return score_; }

 private:
  torch::nn::Linear score_{nullptr};
};
TORCH_MODULE(LayerAttention);

/// Non-local self-attention over spatial positions with a zero-initialised gate.
class SelfAttentionImpl : public torch::nn::Module {
 public:
  explicit SelfAttentionImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d query_{nullptr}, key_{nullptr}, value_{nullptr};
  torch::Tensor gamma_;
};
TORCH_MODULE(SelfAttention);

class ResidualBlockImpl : public torch::nn::Module {
 public:
  explicit ResidualBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(ResidualBlock);

struct GeneratorOutput {
  torch::Tensor image;  // N x 1 x H x W in [-1,1]
  StyleSummary style;
};

/// Encoder / attention transformation / decoder generator.
///
/// The content image goes through the content encoder to a 1/4-resolution
/// bottleneck. Each style image goes through the style encoder; a
/// context-aware attention block pools each of its three stage outputs to a
/// vector. The per-layer vectors are averaged over the k style images, fused
/// by layer attention conditioned on the pooled content bottleneck, tiled and
/// concatenated with the bottleneck, refined by self-attention and decoded
/// (decoder convolutions are instance-normalised).
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorOptions options = {});

  /// content: N x 1 x H x W, styles: N x k x 1 x H x W (both in [-1,1]).
  GeneratorOutput forward_detailed(const torch::Tensor& content, const torch::Tensor& styles);
  torch::Tensor forward(const torch::Tensor& content, const torch::Tensor& styles) {
    return forward_detailed(content, styles).image;
  }

  torch::Tensor encode_content(const torch::Tensor& content);
  /// Per-layer style vectors averaged over the k images: 3 x (N x D_s).
  std::array<torch::Tensor, 3> encode_style(const torch::Tensor& styles);

  const GeneratorOptions& options() const { return options_; }
  ContextAwareAttention attention(int layer) const { return attention_[layer]; }

 private:
  GeneratorOptions options_;
  ConvEncoder content_encoder_{nullptr};
  ConvEncoder style_encoder_{nullptr};
  std::array<ContextAwareAttention, 3> attention_{nullptr, nullptr, nullptr};
  LayerAttention layer_attention_{nullptr};
  SelfAttention self_attention_{nullptr};
  torch::nn::Conv2d fuse_{nullptr};
  torch::nn::Sequential residual_{nullptr};
  torch::nn::ConvTranspose2d up1_{nullptr}, up2_{nullptr};
  torch::nn::Conv2d to_image_{nullptr};
};
TORCH_MODULE(Generator);

/// Canonical (content-defined) order of the k style images of every sample,
/// so that aggregation does not depend on the order the caller supplied.
torch::Tensor canonical_style_order(const torch::Tensor& styles);

/// Generates one glyph from a content glyph and exactly k same-style glyphs.
GrayImage generate(Generator& generator, const GrayImage& content,
                   std::span<const GrayImage* const> style_images);
GrayImage generate(Generator& generator, const Glyph& content,
                   std::span<const Glyph* const> style_images);

/// Stacks per-sample style references into N x k x 1 x H x W.
torch::Tensor stack_style_refs(const std::vector<std::vector<const Glyph*>>& refs);

}  // namespace glyphgen
