#include "glyphgen/evalkit.hpp"

#include <cmath>
#include <cstdio>
#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "glyphgen/error.hpp"
#include "glyphgen/fid.hpp"
#include "glyphgen/nn_util.hpp"
#include "glyphgen/random.hpp"
#include "glyphgen/tensor_image.hpp"

namespace glyphgen {
namespace F = torch::nn::functional;

PixelMetrics pixel_metrics(std::span<const GrayImage> generated, std::span<const GrayImage> truth) {
  if (generated.size() != truth.size())
    throw ShapeError("pixel_metrics: unpaired sets (" + std::to_string(generated.size()) + " vs " +
                     std::to_string(truth.size()) + " images)");
  if (generated.empty()) throw ShapeError("pixel_metrics: empty image sets");
  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    const auto& g = generated[i];
    const auto& t = truth[i];
    if (g.height != t.height || g.width != t.width)
      throw ShapeError("pixel_metrics: pair " + std::to_string(i) + " differs in shape");
    for (std::size_t p = 0; p < g.pixels.size(); ++p) {
      const double d = static_cast<double>(g.pixels[p]) - t.pixels[p];
      abs_sum += std::abs(d);
      sq_sum += d * d;
    }
    count += g.pixels.size();
  }
  return {abs_sum / count, std::sqrt(sq_sum / count)};
}

std::optional<double> perceptual_distance(const GrayImage& a, const GrayImage& b,
                                          PerceptualBackbone* plugin) {
  if (!plugin) return std::nullopt;
  if (a.height != b.height || a.width != b.width)
    throw ShapeError("perceptual_distance: image sizes differ");
  torch::NoGradGuard no_grad;
  const GrayImage* pair[] = {&a, &b};
  const auto maps = plugin->features(to_model_input(std::span<const GrayImage* const>(pair)));
  if (maps.empty()) throw ConfigError("perceptual backbone '" + plugin->name() + "' returned no layers");
  double total = 0.0;
  for (const auto& m : maps) {
    auto unit = F::normalize(m.to(torch::kDouble), F::NormalizeFuncOptions().dim(1).eps(1e-10));
    total += (unit[0] - unit[1]).pow(2).sum(0).mean().item<double>();
  }
  return total / static_cast<double>(maps.size());
}

std::string_view to_string(ClassifierTarget t) {
  return t == ClassifierTarget::content ? "content" : "style";
}

EvalClassifierNetImpl::EvalClassifierNetImpl(int image_size, int num_labels, int width,
                                             int feature_dim) {
  if (image_size % 8 != 0) throw ConfigError("classifier image size must be a multiple of 8");
  namespace nn = torch::nn;
  auto lrelu = nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2));
  trunk_ = register_module(
      "trunk", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(1, width, 3).padding(1)), lrelu,
                              nn::MaxPool2d(2),
                              nn::Conv2d(nn::Conv2dOptions(width, 2 * width, 3).padding(1)), lrelu,
                              nn::MaxPool2d(2),
                              nn::Conv2d(nn::Conv2dOptions(2 * width, 4 * width, 3).padding(1)),
                              lrelu, nn::MaxPool2d(2), nn::Flatten()));
  const int cells = (image_size / 8) * (image_size / 8);
  embed_ = register_module("embed", nn::Linear(4 * width * cells, feature_dim));
  head_ = register_module("head", nn::Linear(feature_dim, num_labels));
}

torch::Tensor EvalClassifierNetImpl::features(const torch::Tensor& x) {
  return F::leaky_relu(embed_->forward(trunk_->forward(x)), F::LeakyReLUFuncOptions().negative_slope(0.2));
}

namespace {

constexpr int64_t kChunk = 256;

std::vector<const GrayImage*> pointers(std::span<const GrayImage> images) {
  std::vector<const GrayImage*> out;
  out.reserve(images.size());
  for (const auto& im : images) out.push_back(&im);
  return out;
}

void check_images(std::span<const GrayImage> images, int size) {
  for (const auto& im : images)
    if (im.height != size || im.width != size)
      throw ShapeError("classifier expects " + std::to_string(size) + "x" + std::to_string(size) +
                       " images");
}

torch::Tensor run_chunked(EvalClassifierNet& net, std::span<const GrayImage> images, bool feats) {
  torch::NoGradGuard no_grad;
  EvalModeGuard eval(*net);
  auto ptrs = pointers(images);
  std::vector<torch::Tensor> parts;
  for (std::size_t i = 0; i < ptrs.size(); i += kChunk) {
    const auto n = std::min<std::size_t>(kChunk, ptrs.size() - i);
    auto x = to_model_input(std::span<const GrayImage* const>(ptrs.data() + i, n));
    parts.push_back(feats ? net->features(x) : net->forward(x));
  }
  return torch::cat(parts, 0);
}

int label_of(const GlyphKey& k, ClassifierTarget t) {
  return t == ClassifierTarget::content ? k.content_id : k.style_id;
}

/// Pads with background and crops back at a random offset per image.
torch::Tensor random_shift(const torch::Tensor& x, int max_shift, std::mt19937_64& rng) {
  if (max_shift <= 0) return x;
  const auto h = x.size(2), w = x.size(3);
  auto padded = F::pad(x, F::PadFuncOptions({max_shift, max_shift, max_shift, max_shift}).value(1.0));
  std::vector<torch::Tensor> rows;
  for (int64_t n = 0; n < x.size(0); ++n) {
    const auto dy = static_cast<int64_t>(uniform_index(rng, 2 * max_shift + 1));
    const auto dx = static_cast<int64_t>(uniform_index(rng, 2 * max_shift + 1));
    rows.push_back(padded[n].narrow(1, dy, h).narrow(2, dx, w));
  }
  return torch::stack(rows);
}

torch::Tensor random_half_turn(const torch::Tensor& x, std::mt19937_64& rng) {
  std::vector<torch::Tensor> rows;
  for (int64_t n = 0; n < x.size(0); ++n)
    rows.push_back(uniform_index(rng, 2) == 1 ? x[n].flip({1, 2}) : x[n]);
  return torch::stack(rows);
}

/// Replaces each image, with probability p, by its pixel-wise minimum with a
/// random training image of the same label.
torch::Tensor random_overlay(const torch::Tensor& x, const torch::Tensor& labels,
                             const torch::Tensor& pool, const std::vector<std::vector<int64_t>>& by_label,
                             double p, std::mt19937_64& rng) {
  if (p <= 0) return x;
  std::vector<torch::Tensor> rows;
  for (int64_t n = 0; n < x.size(0); ++n) {
    const auto& same = by_label[static_cast<std::size_t>(labels[n].item<int64_t>())];
    if (uniform_unit(rng) < p)
      rows.push_back(torch::minimum(x[n], pool[same[uniform_index(rng, same.size())]]));
    else
      rows.push_back(x[n]);
  }
  return torch::stack(rows);
}

std::vector<torch::Tensor> snapshot(torch::nn::Module& net) {
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> out;
  for (const auto& p : net.parameters()) out.push_back(p.detach().clone());
  return out;
}

void restore(torch::nn::Module& net, const std::vector<torch::Tensor>& saved) {
  torch::NoGradGuard guard;
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i].copy_(saved[i]);
}

double fraction_correct(const std::vector<int>& predicted, std::span<const int> labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace

std::vector<int> EvalClassifier::predict(std::span<const GrayImage> images) const {
  if (images.empty()) return {};
  check_images(images, image_size);
  auto idx = run_chunked(net, images, false).argmax(1);
  std::vector<int> out;
  for (int64_t i = 0; i < idx.size(0); ++i) out.push_back(labels.id(idx[i].item<int>()));
  return out;
}

Eigen::MatrixXd EvalClassifier::features(std::span<const GrayImage> images) const {
  if (images.empty()) return {};
  check_images(images, image_size);
  auto f = run_chunked(net, images, true).to(torch::kDouble).contiguous();
  Eigen::MatrixXd out(f.size(0), f.size(1));
  auto acc = f.accessor<double, 2>();
  for (int64_t i = 0; i < f.size(0); ++i)
    for (int64_t j = 0; j < f.size(1); ++j) out(i, j) = acc[i][j];
  return out;
}

EvalClassifier train_eval_classifier(const GlyphSet& data, ClassifierTarget target,
                                     const ClassifierOptions& options) {
  EvalClassifier clf;
  clf.target = target;
  clf.labels = LabelMap(target == ClassifierTarget::content ? data.char_ids() : data.style_ids());
  if (clf.labels.size() < 2)
    throw ConfigError(std::string("a ") + std::string(to_string(target)) +
                      " classifier needs at least 2 labels, got " + std::to_string(clf.labels.size()));
  clf.image_size = data.corpus->image_size();

  // Stratified, seeded validation slice.
  std::mt19937_64 rng(options.seed);
  std::map<int, std::vector<GlyphKey>> by_label;
  for (const auto& k : data.keys) by_label[label_of(k, target)].push_back(k);
  for (auto& [label, keys] : by_label) {
    for (std::size_t i = keys.size(); i > 1; --i) std::swap(keys[i - 1], keys[uniform_index(rng, i)]);
    auto n_val = static_cast<std::size_t>(std::lround(options.val_fraction * keys.size()));
    if (keys.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, keys.size() - 1);
    else n_val = 0;
    clf.val_keys.insert(clf.val_keys.end(), keys.begin(), keys.begin() + n_val);
    clf.train_keys.insert(clf.train_keys.end(), keys.begin() + n_val, keys.end());
  }
  if (clf.val_keys.empty()) throw ConfigError("classifier validation slice is empty");

  auto images_of = [&](const std::vector<GlyphKey>& keys) {
    std::vector<GrayImage> out;
    for (const auto& k : keys) out.push_back(data.corpus->at(k.style_id, k.content_id).image);
    return out;
  };
  auto labels_of = [&](const std::vector<GlyphKey>& keys) {
    std::vector<int> out;
    for (const auto& k : keys) out.push_back(label_of(k, target));
    return out;
  };
  const auto train_images = images_of(clf.train_keys);
  const auto train_labels = labels_of(clf.train_keys);
  const auto val_images = images_of(clf.val_keys);
  const auto val_labels = labels_of(clf.val_keys);

  auto train_x = to_model_input(std::span<const GrayImage* const>(pointers(train_images)));
  std::vector<int64_t> dense;
  for (int l : train_labels) dense.push_back(clf.labels.dense(l));
  auto train_y = torch::tensor(dense, torch::kLong);
  std::vector<std::vector<int64_t>> members(static_cast<std::size_t>(clf.labels.size()));
  for (std::size_t i = 0; i < dense.size(); ++i) members[static_cast<std::size_t>(dense[i])].push_back(static_cast<int64_t>(i));

  torch::manual_seed(options.seed);
  clf.net = EvalClassifierNet(clf.image_size, clf.labels.size(), options.width, options.feature_dim);
  torch::optim::Adam opt(clf.net->parameters(), torch::optim::AdamOptions(options.learning_rate));

  const auto n = static_cast<std::size_t>(train_x.size(0));
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  int streak = 0;
  double best = -1.0;
  std::vector<torch::Tensor> best_weights;
  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    clf.net->train();
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const auto len = std::min<std::size_t>(options.batch_size, n - start);
      auto idx = torch::tensor(std::vector<int64_t>(order.begin() + start, order.begin() + start + len),
                               torch::kLong);
      auto x = train_x.index_select(0, idx);
      const auto y = train_y.index_select(0, idx);
      if (target == ClassifierTarget::style)
        x = random_overlay(x, y, train_x, members, options.overlay_probability, rng);
      x = random_shift(x, options.max_shift, rng);
      if (options.rotate_style && target == ClassifierTarget::style) x = random_half_turn(x, rng);
      auto loss = F::cross_entropy(clf.net->forward(x), y);
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
    const double acc = fraction_correct(clf.predict(val_images), val_labels);
    clf.val_curve.push_back(acc);
    if (acc > best || best < 0) {
      best = acc;
      best_weights = snapshot(*clf.net);
    }
    streak = acc >= options.gate ? streak + 1 : 0;
    if (streak >= 3) break;
  }
  restore(*clf.net, best_weights);
  clf.val_accuracy = best;
  clf.train_accuracy = fraction_correct(clf.predict(train_images), train_labels);
  if (clf.val_accuracy < options.gate) {
    std::ostringstream msg;
    msg << to_string(target) << " classifier reached validation accuracy " << clf.val_accuracy
        << " < gate " << options.gate << "; curve:";
    for (double a : clf.val_curve) msg << ' ' << a;
    throw TrainingFailure(msg.str());
  }
  return clf;
}

double accuracy(std::span<const GrayImage> images, std::span<const int> labels,
                const EvalClassifier& classifier, ClassifierTarget kind) {
  if (kind != classifier.target)
    throw ConfigError(std::string("accuracy: ") + std::string(to_string(kind)) +
                      " labels given to a " + std::string(to_string(classifier.target)) +
                      " classifier");
  if (images.size() != labels.size()) throw ShapeError("accuracy: images and labels differ in length");
  if (images.empty()) throw ShapeError("accuracy: no images");
  for (int l : labels) classifier.labels.dense(l);  // IndexError for unknown labels
  return fraction_correct(classifier.predict(images), labels);
}

std::string_view to_string(SplitKind s) { return s == SplitKind::ucsf ? "ucsf" : "ufsc"; }

SplitKind parse_split_kind(std::string_view s) {
  if (s == "ucsf" || s == "UCSF") return SplitKind::ucsf;
  if (s == "ufsc" || s == "UFSC") return SplitKind::ufsc;
  throw ConfigError("unknown split '" + std::string(s) + "' (expected ucsf or ufsc)");
}

namespace {

nlohmann::json or_na(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json("n/a");
}

std::string csv_cell(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", *v);
  return buf;
}

}  // namespace

nlohmann::json MetricReport::to_json() const {
  return {{"split", std::string(to_string(split))},
          {"samples", samples},
          {"l1", or_na(l1)},
          {"rmse", or_na(rmse)},
          {"lpips", or_na(lpips)},
          {"acc_c", or_na(acc_c)},
          {"acc_s", or_na(acc_s)},
          {"fid_c", or_na(fid_c)},
          {"fid_s", or_na(fid_s)}};
}

std::string MetricReport::csv_header() { return "split,samples,l1,rmse,lpips,acc_c,acc_s,fid_c,fid_s"; }

std::string MetricReport::csv_row() const {
  std::ostringstream out;
  out << to_string(split) << ',' << samples;
  for (const auto* v : {&l1, &rmse, &lpips, &acc_c, &acc_s, &fid_c, &fid_s}) out << ',' << csv_cell(*v);
  return out.str();
}

MetricReport compute_report(SplitKind split, std::span<const GrayImage> generated,
                            std::span<const GrayImage> truth, std::span<const int> content_ids,
                            std::span<const int> style_ids, const EvalClassifiers& classifiers,
                            PerceptualBackbone* perceptual) {
  if (!classifiers.content) throw ConfigError("evaluation needs a content classifier");
  if (!classifiers.style) throw ConfigError("evaluation needs a style classifier");
  if (content_ids.size() != generated.size() || style_ids.size() != generated.size())
    throw ShapeError("compute_report: labels and images differ in length");
  MetricReport r;
  r.split = split;
  r.samples = generated.size();
  const auto px = pixel_metrics(generated, truth);
  r.l1 = px.l1;
  r.rmse = px.rmse;
  if (perceptual) {
    double sum = 0.0;
    for (std::size_t i = 0; i < generated.size(); ++i)
      sum += *perceptual_distance(generated[i], truth[i], perceptual);
    r.lpips = sum / static_cast<double>(generated.size());
  }
  auto in_space = [](const EvalClassifier& c, std::span<const int> ids) {
    for (int id : ids)
      if (!c.labels.contains(id)) return false;
    return true;
  };
  if (in_space(*classifiers.content, content_ids))
    r.acc_c = accuracy(generated, content_ids, *classifiers.content, ClassifierTarget::content);
  if (in_space(*classifiers.style, style_ids))
    r.acc_s = accuracy(generated, style_ids, *classifiers.style, ClassifierTarget::style);
  if (generated.size() >= 2) {
    r.fid_c = fid(classifiers.content->features(generated), classifiers.content->features(truth));
    r.fid_s = fid(classifiers.style->features(generated), classifiers.style->features(truth));
  }
  return r;
}

std::vector<GrayImage> generate_set(TrainingState& state, const GlyphSet& targets,
                                    const std::vector<int>& reference_pool, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GrayImage> out;
  out.reserve(targets.size());
  for (const auto& key : targets.keys) {
    const auto refs = pick_style_refs(*targets.corpus, key.style_id, key.content_id, reference_pool,
                                      state.config.k_style, rng);
    std::vector<const GrayImage*> images;
    for (const auto* g : refs) images.push_back(&g->image);
    out.push_back(generate_glyph(state, key.content_id, images));
  }
  return out;
}

MetricReport evaluate_suite(TrainingState& state, const Split& split, SplitKind kind,
                            const EvalClassifiers& classifiers, const EvalOptions& options) {
  if (!classifiers.content || !classifiers.style)
    throw ConfigError("evaluate_suite: both evaluation classifiers are required");
  const GlyphSet& targets = kind == SplitKind::ucsf ? split.ucsf : split.ufsc;
  const auto generated = generate_set(state, targets, split.train.char_ids(), options.seed);
  std::vector<GrayImage> truth;
  std::vector<int> content_ids, style_ids;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    truth.push_back(targets.glyph(i).image);
    content_ids.push_back(targets.keys[i].content_id);
    style_ids.push_back(targets.keys[i].style_id);
  }
  return compute_report(kind, generated, truth, content_ids, style_ids, classifiers,
                        options.perceptual.get());
}

}  // namespace glyphgen
