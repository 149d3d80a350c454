#include "glyphgen/generator.hpp"

#include <algorithm>
#include <numeric>

#include "glyphgen/error.hpp"
#include "glyphgen/nn_util.hpp"
#include "glyphgen/tensor_image.hpp"

namespace glyphgen {
namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

torch::Tensor lrelu(const torch::Tensor& x) {
  return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2));
}

// Parameter-free per-sample normalisation. Without it the decoder scale
// grows under Adam until the tanh output saturates.
torch::Tensor inorm(const torch::Tensor& x) { return F::instance_norm(x); }

}  // namespace

nlohmann::json GeneratorOptions::to_json() const {
  return {{"image_size", image_size},
          {"base_width", base_width},
          {"style_dim", style_dim},
          {"k_style", k_style},
          {"res_blocks", res_blocks}};
}

GeneratorOptions GeneratorOptions::from_json(const nlohmann::json& j) {
  GeneratorOptions o;
  o.image_size = j.value("image_size", o.image_size);
  o.base_width = j.value("base_width", o.base_width);
  o.style_dim = j.value("style_dim", o.style_dim);
  o.k_style = j.value("k_style", o.k_style);
  o.res_blocks = j.value("res_blocks", o.res_blocks);
  return o;
}

ConvEncoderImpl::ConvEncoderImpl(int base_width)
    : widths_{base_width, 2 * base_width, 4 * base_width} {
  conv0_ = register_module("conv0", nn::Conv2d(nn::Conv2dOptions(1, widths_[0], 3).padding(1)));
  conv1_ = register_module(
      "conv1", nn::Conv2d(nn::Conv2dOptions(widths_[0], widths_[1], 4).stride(2).padding(1)));
  conv2_ = register_module(
      "conv2", nn::Conv2d(nn::Conv2dOptions(widths_[1], widths_[2], 4).stride(2).padding(1)));
}

std::array<torch::Tensor, 3> ConvEncoderImpl::forward(const torch::Tensor& x) {
  auto h0 = lrelu(conv0_->forward(x));
  auto h1 = lrelu(conv1_->forward(h0));
  auto h2 = lrelu(conv2_->forward(h1));
  return {h0, h1, h2};
}

ContextAwareAttentionImpl::ContextAwareAttentionImpl(int channels, int out_dim) {
  score_ = register_module("score", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)));
  context_ = register_parameter("context", torch::randn({channels}) / std::sqrt(channels));
  project_ = register_module("project", nn::Linear(channels, out_dim));
}

AttentionPooled ContextAwareAttentionImpl::forward(const torch::Tensor& features) {
  const auto n = features.size(0), c = features.size(1);
  auto hidden = torch::tanh(score_->forward(features)).flatten(2);  // N x C x HW
  auto scores = torch::einsum("nch,c->nh", {hidden, context_});
  auto attention = torch::softmax(scores, 1);
  auto pooled = torch::bmm(features.flatten(2), attention.unsqueeze(2)).view({n, c});
  return {project_->forward(pooled), pooled, attention};
}

LayerAttentionImpl::LayerAttentionImpl(int content_channels) {
  score_ = register_module("score", nn::Linear(content_channels, 3));
}

StyleSummary LayerAttentionImpl::forward(const torch::Tensor& content_features,
                                         const std::array<torch::Tensor, 3>& per_layer) {
  auto pooled = content_features.mean({2, 3});
  auto weights = torch::softmax(score_->forward(pooled), 1);  // N x 3
  auto stacked = torch::stack({per_layer[0], per_layer[1], per_layer[2]}, 1);  // N x 3 x D
  auto v = (weights.unsqueeze(2) * stacked).sum(1);
  return {v, per_layer, weights};
}

SelfAttentionImpl::SelfAttentionImpl(int channels) {
  const int inner = std::max(1, channels / 8);
  query_ = register_module("query", nn::Conv2d(nn::Conv2dOptions(channels, inner, 1)));
  key_ = register_module("key", nn::Conv2d(nn::Conv2dOptions(channels, inner, 1)));
  value_ = register_module("value", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)));
  gamma_ = register_parameter("gamma", torch::zeros({1}));
}

torch::Tensor SelfAttentionImpl::forward(const torch::Tensor& x) {
  const auto n = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  auto q = query_->forward(x).flatten(2).transpose(1, 2);  // N x HW x C'
  auto k = key_->forward(x).flatten(2);                    // N x C' x HW
  auto attn = torch::softmax(torch::bmm(q, k), 2);         // N x HW x HW
  auto v = value_->forward(x).flatten(2);                  // N x C x HW
  auto out = torch::bmm(v, attn.transpose(1, 2)).view({n, c, h, w});
  return x + gamma_ * out;
}

ResidualBlockImpl::ResidualBlockImpl(int channels) {
  conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1)));
  conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(channels, channels, 3).padding(1)));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  return x + conv2_->forward(lrelu(conv1_->forward(x)));
}

GeneratorImpl::GeneratorImpl(GeneratorOptions options) : options_(options) {
  if (options_.image_size % 4 != 0) throw ConfigError("generator image_size must be divisible by 4");
  if (options_.k_style < 1) throw ConfigError("k_style must be >= 1");
  const int g = options_.base_width;
  const int cb = options_.bottleneck_channels();
  content_encoder_ = register_module("content_encoder", ConvEncoder(g));
  style_encoder_ = register_module("style_encoder", ConvEncoder(g));
  const auto widths = style_encoder_->widths();
  for (int l = 0; l < 3; ++l)
    attention_[l] = register_module("attention" + std::to_string(l),
                                    ContextAwareAttention(widths[l], options_.style_dim));
  layer_attention_ = register_module("layer_attention", LayerAttention(cb));
  self_attention_ = register_module("self_attention", SelfAttention(cb + options_.style_dim));
  fuse_ = register_module(
      "fuse", nn::Conv2d(nn::Conv2dOptions(cb + options_.style_dim, cb, 3).padding(1)));
  residual_ = register_module("residual", nn::Sequential());
  for (int i = 0; i < options_.res_blocks; ++i) residual_->push_back(ResidualBlock(cb));
  up1_ = register_module(
      "up1", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(cb, 2 * g, 4).stride(2).padding(1)));
  up2_ = register_module(
      "up2", nn::ConvTranspose2d(nn::ConvTranspose2dOptions(2 * g, g, 4).stride(2).padding(1)));
  to_image_ = register_module("to_image", nn::Conv2d(nn::Conv2dOptions(g, 1, 3).padding(1)));
}

torch::Tensor GeneratorImpl::encode_content(const torch::Tensor& content) {
  check_image_batch(content, options_.image_size, "generator content");
  return content_encoder_->forward(content)[2];
}

std::array<torch::Tensor, 3> GeneratorImpl::encode_style(const torch::Tensor& styles) {
  if (styles.dim() != 5 || styles.size(1) != options_.k_style)
    throw ConfigError("generator expects exactly k=" + std::to_string(options_.k_style) +
                      " style images per sample");
  const auto n = styles.size(0), k = styles.size(1);
  auto ordered = canonical_style_order(styles);
  auto flat = ordered.reshape({n * k, 1, styles.size(3), styles.size(4)});
  check_image_batch(flat, options_.image_size, "generator style");
  auto maps = style_encoder_->forward(flat);
  std::array<torch::Tensor, 3> per_layer;
  for (int l = 0; l < 3; ++l)
    per_layer[l] = attention_[l]->forward(maps[l]).vector.view({n, k, -1}).mean(1);
  return per_layer;
}

GeneratorOutput GeneratorImpl::forward_detailed(const torch::Tensor& content,
                                                const torch::Tensor& styles) {
  if (styles.size(0) != content.size(0)) throw ShapeError("content/style batch sizes differ");
  auto c = encode_content(content);
  auto summary = layer_attention_->forward(c, encode_style(styles));
  auto tiled = summary.v.view({c.size(0), options_.style_dim, 1, 1})
                   .expand({c.size(0), options_.style_dim, c.size(2), c.size(3)});
  auto x = self_attention_->forward(torch::cat({c, tiled}, 1));
  x = lrelu(inorm(fuse_->forward(x)));
  x = residual_->forward(x);
  x = lrelu(inorm(up1_->forward(x)));
  x = lrelu(inorm(up2_->forward(x)));
  return {torch::tanh(to_image_->forward(x)), summary};
}

torch::Tensor canonical_style_order(const torch::Tensor& styles) {
  const auto n = styles.size(0), k = styles.size(1);
  auto data = styles.detach().to(torch::kFloat).contiguous().view({n, k, -1});
  const auto len = data.size(2);
  auto index = torch::empty({n, k}, torch::kLong);
  for (int64_t b = 0; b < n; ++b) {
    const float* base = data[b].data_ptr<float>();
    std::vector<int64_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t c) {
      return std::lexicographical_compare(base + a * len, base + (a + 1) * len, base + c * len,
                                          base + (c + 1) * len);
    });
    for (int64_t i = 0; i < k; ++i) index[b][i] = order[i];
  }
  auto gather_index = index.view({n, k, 1, 1, 1}).expand_as(styles).to(styles.device());
  return styles.gather(1, gather_index);
}

torch::Tensor stack_style_refs(const std::vector<std::vector<const Glyph*>>& refs) {
  std::vector<torch::Tensor> per_sample;
  per_sample.reserve(refs.size());
  for (const auto& r : refs) per_sample.push_back(to_model_input(std::span<const Glyph* const>(r)));
  return torch::stack(per_sample, 0);
}

GrayImage generate(Generator& generator, const GrayImage& content,
                   std::span<const GrayImage* const> style_images) {
  if (static_cast<int>(style_images.size()) != generator->options().k_style)
    throw ConfigError("generate: expected k=" + std::to_string(generator->options().k_style) +
                      " style images, got " + std::to_string(style_images.size()));
  EvalModeGuard eval(*generator);
  torch::NoGradGuard no_grad;
  auto styles = to_model_input(style_images).unsqueeze(0);
  auto out = generator->forward(to_model_input(content), styles);
  return from_model_output(out[0]);
}

GrayImage generate(Generator& generator, const Glyph& content,
                   std::span<const Glyph* const> style_images) {
  std::vector<const GrayImage*> images;
  for (const auto* g : style_images) {
    if (g->style_id != style_images.front()->style_id)
      throw ConfigError("generate: style images must share one style");
    images.push_back(&g->image);
  }
  return generate(generator, content.image, std::span<const GrayImage* const>(images));
}

}  // namespace glyphgen
