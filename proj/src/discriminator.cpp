#include "glyphgen/discriminator.hpp"

#include <cmath>

#include "glyphgen/error.hpp"
#include "glyphgen/tensor_image.hpp"

namespace glyphgen {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

torch::Tensor lrelu(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2));
}

}  // namespace

std::string_view to_string(DiscriminatorVariant v) {
  switch (v) {
    case DiscriminatorVariant::patch: return "patch";
    case DiscriminatorVariant::multitask: return "multitask";
    case DiscriminatorVariant::multitask_patch: return "multitask_patch";
  }
  return "multitask_patch";
}

DiscriminatorVariant parse_discriminator_variant(std::string_view s) {
  if (s == "patch") return DiscriminatorVariant::patch;
  if (s == "multitask") return DiscriminatorVariant::multitask;
  if (s == "multitask_patch") return DiscriminatorVariant::multitask_patch;
  throw ConfigError("unknown discriminator_variant '" + std::string(s) +
                    "' (expected patch | multitask | multitask_patch)");
}

int DiscriminatorOptions::downsample_blocks() const {
  // the stem already halves the input
  int n = 0;
  for (int s = image_size / 2; s > patch_grid; s /= 2) ++n;
  return n;
}

int DiscriminatorOptions::feature_channels() const {
  return base_width << downsample_blocks();
}

nlohmann::json DiscriminatorOptions::to_json() const {
  return {{"image_size", image_size}, {"base_width", base_width}, {"patch_grid", patch_grid},
          {"num_chars", num_chars},   {"num_styles", num_styles},
          {"variant", std::string(to_string(variant))}};
}

DiscriminatorOptions DiscriminatorOptions::from_json(const nlohmann::json& j) {
  DiscriminatorOptions o;
  o.image_size = j.value("image_size", o.image_size);
  o.base_width = j.value("base_width", o.base_width);
  o.patch_grid = j.value("patch_grid", o.patch_grid);
  o.num_chars = j.value("num_chars", o.num_chars);
  o.num_styles = j.value("num_styles", o.num_styles);
  o.variant = parse_discriminator_variant(j.value("variant", std::string("multitask_patch")));
  return o;
}

DiscResBlockImpl::DiscResBlockImpl(int in, int out, bool downsample) : downsample_(downsample) {
  conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)));
  conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1)));
  if (in != out || downsample)
    shortcut_ = register_module("shortcut", nn::Conv2d(nn::Conv2dOptions(in, out, 1)));
}

torch::Tensor DiscResBlockImpl::forward(const torch::Tensor& x) {
  auto h = conv2_->forward(lrelu(conv1_->forward(lrelu(x))));
  auto s = shortcut_ ? shortcut_->forward(x) : x;
  if (downsample_) {
    h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(2));
    s = F::avg_pool2d(s, F::AvgPool2dFuncOptions(2));
  }
  return h + s;
}

PatchTrunkImpl::PatchTrunkImpl(const DiscriminatorOptions& o) {
  if (o.image_size < 2 * o.patch_grid || (o.image_size / 2) % o.patch_grid != 0)
    throw ConfigError("discriminator image_size must be patch_grid * 2^n");
  stem_ = register_module(
      "stem", nn::Conv2d(nn::Conv2dOptions(1, o.base_width, 4).stride(2).padding(1)));
  blocks_ = register_module("blocks", nn::Sequential());
  int ch = o.base_width;
  for (int i = 0; i < o.downsample_blocks(); ++i, ch *= 2)
    blocks_->push_back(DiscResBlock(ch, 2 * ch, true));
  blocks_->push_back(DiscResBlock(ch, ch, false));
  blocks_->push_back(DiscResBlock(ch, ch, false));
}

torch::Tensor PatchTrunkImpl::forward(const torch::Tensor& x) {
  return lrelu(blocks_->forward(lrelu(stem_->forward(x))));
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorOptions options) : options_(options) {
  if (options_.num_chars < 1 || options_.num_styles < 1)
    throw ConfigError("discriminator needs at least one content and one style label");
  const int c = options_.feature_channels();
  if (options_.variant == DiscriminatorVariant::patch) {
    content_trunk_ = register_module("content_trunk", PatchTrunk(options_));
    style_trunk_ = register_module("style_trunk", PatchTrunk(options_));
    content_head_ = register_module("content_head", nn::Conv2d(nn::Conv2dOptions(c, 1, 1)));
    style_head_ = register_module("style_head", nn::Conv2d(nn::Conv2dOptions(c, 1, 1)));
    return;
  }
  trunk_ = register_module("trunk", PatchTrunk(options_));
  content_embed_ = register_module("content_embed", nn::Embedding(options_.num_chars, c));
  style_embed_ = register_module("style_embed", nn::Embedding(options_.num_styles, c));
  torch::NoGradGuard no_grad;
  nn::init::xavier_uniform_(content_embed_->weight);
  nn::init::xavier_uniform_(style_embed_->weight);
}

void DiscriminatorImpl::check_labels(const torch::Tensor& labels, int64_t rows,
                                     const char* which) const {
  if (labels.numel() == 0) return;
  const auto lo = labels.min().item<int64_t>(), hi = labels.max().item<int64_t>();
  if (lo < 0 || hi >= rows)
    throw IndexError(std::string(which) + " label outside embedding table of " +
                     std::to_string(rows) + " rows");
}

torch::Tensor DiscriminatorImpl::features(const torch::Tensor& image) {
  if (!trunk_) throw ConfigError("the unconditional patch variant has no shared trunk");
  check_image_batch(image, options_.image_size, "discriminator");
  return trunk_->forward(image);
}

PatchScores DiscriminatorImpl::forward(const torch::Tensor& image, const torch::Tensor& y_c,
                                       const torch::Tensor& y_s) {
  check_image_batch(image, options_.image_size, "discriminator");
  if (y_c.numel() != image.size(0) || y_s.numel() != image.size(0))
    throw ShapeError("discriminator: one content and one style label per image");
  if (options_.variant == DiscriminatorVariant::patch) {
    return {content_head_->forward(content_trunk_->forward(image)).squeeze(1),
            style_head_->forward(style_trunk_->forward(image)).squeeze(1)};
  }
  check_labels(y_c, options_.num_chars, "content");
  check_labels(y_s, options_.num_styles, "style");
  auto f = trunk_->forward(image);  // N x C x G x G
  auto ec = content_embed_->forward(y_c.to(torch::kLong).view({-1}));
  auto es = style_embed_->forward(y_s.to(torch::kLong).view({-1}));
  auto content = patch_correspondence(f, ec);
  auto style = patch_correspondence(f, es);
  if (options_.variant == DiscriminatorVariant::multitask) {
    content = content.mean({1, 2}, true);
    style = style.mean({1, 2}, true);
  }
  return {content, style};
}

torch::Tensor patch_correspondence(const torch::Tensor& features, const torch::Tensor& rows) {
  if (features.dim() != 4 || rows.dim() != 2 || rows.size(0) != features.size(0) ||
      rows.size(1) != features.size(1))
    throw ShapeError("patch_correspondence: features N x C x G x G and rows N x C required");
  return (features * rows.unsqueeze(2).unsqueeze(3)).sum(1);
}

torch::Tensor adv_loss_d(const PatchScores& real, const PatchScores& fake) {
  auto real_term = 0.5 * (torch::relu(1.0 - real.content).mean() + torch::relu(1.0 - real.style).mean());
  auto fake_term = 0.5 * (torch::relu(1.0 + fake.content).mean() + torch::relu(1.0 + fake.style).mean());
  return real_term + fake_term;
}

torch::Tensor adv_loss_g(const PatchScores& fake) {
  return -fake.style.mean() - fake.content.mean();
}

}  // namespace glyphgen
