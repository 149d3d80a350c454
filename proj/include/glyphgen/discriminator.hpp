#pragma once

#include <string>
#include <string_view>

#include <json.hpp>
#include <torch/torch.h>

namespace glyphgen {

/// Ablation switch:
///  - patch: two unconditional patch discriminators (one "content", one "style")
///  - multitask: label-conditioned heads scored on the whole image
///    (patch scores averaged before the hinge)
///  - multitask_patch: label-conditioned heads scored per patch
enum class DiscriminatorVariant { patch, multitask, multitask_patch };

std::string_view to_string(DiscriminatorVariant v);
DiscriminatorVariant parse_discriminator_variant(std::string_view s);

struct DiscriminatorOptions {
  int image_size = 64;
  int base_width = 32;
  int patch_grid = 4;  // N of the N x N score map
  int num_chars = 2;   // content embedding rows
  int num_styles = 2;  // style embedding rows
  DiscriminatorVariant variant = DiscriminatorVariant::multitask_patch;

  /// Channels of the trunk output (and of every embedding row).
  int feature_channels() const;
  int downsample_blocks() const;
  nlohmann::json to_json() const;
  static DiscriminatorOptions from_json(const nlohmann::json& j);
};

/// Residual block; `downsample` halves the resolution with average pooling.
class DiscResBlockImpl : public torch::nn::Module {
 public:
  DiscResBlockImpl(int in, int out, bool downsample);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  bool downsample_;
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
};
TORCH_MODULE(DiscResBlock);

/// Shared encoder: stride-2 conv block, residual blocks halving the
/// resolution down to patch_grid, then two more residual blocks.
/// 64 x 64 x 1 -> 32x32x32 -> 16x16x64 -> 8x8x128 -> 4x4x256 (x2) at the defaults.
class PatchTrunkImpl : public torch::nn::Module {
 public:
  explicit PatchTrunkImpl(const DiscriminatorOptions& options);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::Sequential blocks_{nullptr};
};
TORCH_MODULE(PatchTrunk);

/// Score maps for one image batch: N x G x G each (G = 1 for the whole-image variant).
struct PatchScores {
  torch::Tensor content;
  torch::Tensor style;
};

/// Multi-task patch discriminator. The trunk features F (N x C x G x G) are
/// correlated with the embedding of each label: map[p] = <F[p], e(y)>.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorOptions options);

  /// `image` N x 1 x H x W in [-1,1]; labels are dense int64 indices.
  PatchScores forward(const torch::Tensor& image, const torch::Tensor& y_c,
                      const torch::Tensor& y_s);

  /// Trunk features (conditioned variants only).
  torch::Tensor features(const torch::Tensor& image);

  const DiscriminatorOptions& options() const { return options_; }
  torch::nn::Embedding content_embedding() const { return content_embed_; }
  torch::nn::Embedding style_embedding() const { return style_embed_; }

 private:
  void check_labels(const torch::Tensor& labels, int64_t rows, const char* which) const;

  DiscriminatorOptions options_;
  PatchTrunk trunk_{nullptr};
  torch::nn::Embedding content_embed_{nullptr};
  torch::nn::Embedding style_embed_{nullptr};
  // patch variant only
  PatchTrunk content_trunk_{nullptr}, style_trunk_{nullptr};
  torch::nn::Conv2d content_head_{nullptr}, style_head_{nullptr};
};
TORCH_MODULE(Discriminator);

/// Correspondence layer: per-patch dot product of features (N x C x G x G)
/// with one embedding row per image (N x C), giving N x G x G.
torch::Tensor patch_correspondence(const torch::Tensor& features, const torch::Tensor& rows);

/// Hinge loss for D: mean over batch, heads and patches of max(0, 1 - D(real))
/// plus the same mean of max(0, 1 + D(fake)).
torch::Tensor adv_loss_d(const PatchScores& real, const PatchScores& fake);

/// Generator adversarial loss: -mean(D(fake, y_s)) - mean(D(fake, y_c)).
torch::Tensor adv_loss_g(const PatchScores& fake);

}  // namespace glyphgen
