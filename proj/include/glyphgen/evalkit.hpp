#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>
#include <torch/torch.h>

#include "glyphgen/corpus.hpp"
#include "glyphgen/trainer.hpp"

namespace glyphgen {

struct PixelMetrics {
  double l1 = 0.0;
  double rmse = 0.0;
};

/// Mean absolute error and root mean squared error over paired image sets.
/// Sets of different length or mismatched image shapes raise ShapeError.
PixelMetrics pixel_metrics(std::span<const GrayImage> generated, std::span<const GrayImage> truth);

/// Feature extractor for the perceptual distance: images (N x 1 x H x W in
/// [-1,1]) to a list of N x C x h x w feature maps.
class PerceptualBackbone {
 public:
  virtual ~PerceptualBackbone() = default;
  virtual std::vector<torch::Tensor> features(const torch::Tensor& images) = 0;
  virtual std::string name() const = 0;
};

/// Per layer: unit-normalise every spatial feature vector along channels,
/// take the squared difference, average over positions and sum over
/// channels; layers are averaged. Returns nullopt when no plugin is given.
std::optional<double> perceptual_distance(const GrayImage& a, const GrayImage& b,
                                          PerceptualBackbone* plugin);

enum class ClassifierTarget { content, style };
std::string_view to_string(ClassifierTarget t);

struct ClassifierOptions {
  int width = 16;          // first conv width; doubled per stage
  int feature_dim = 64;    // penultimate layer, used for FID
  int max_epochs = 150;
  int batch_size = 32;
  double learning_rate = 2e-3;
  double val_fraction = 0.2;
  double gate = 0.90;
  int max_shift = 6;       // random translation augmentation, pixels
  // Style targets only: a half turn keeps slant, weight, contrast and corners, and
  // the pixel-wise min of two glyphs of one font is another glyph of that font.
  bool rotate_style = true;
  double overlay_probability = 0.5;
  std::uint64_t seed = 7;
};

class EvalClassifierNetImpl : public torch::nn::Module {
 public:
  EvalClassifierNetImpl(int image_size, int num_labels, int width, int feature_dim);
  torch::Tensor forward(const torch::Tensor& x) { return head_->forward(features(x)); }
  /// Penultimate activations, N x feature_dim.
  torch::Tensor features(const torch::Tensor& x);

 private:
  torch::nn::Sequential trunk_{nullptr};
  torch::nn::Linear embed_{nullptr}, head_{nullptr};
};
TORCH_MODULE(EvalClassifierNet);

/// Small conv-net classifier over character or font labels.
struct EvalClassifier {
  ClassifierTarget target = ClassifierTarget::content;
  LabelMap labels;
  mutable EvalClassifierNet net{nullptr};
  int image_size = 0;
  std::vector<GlyphKey> train_keys;  // glyphs the net was fitted on
  std::vector<GlyphKey> val_keys;    // held-in validation slice
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::vector<double> val_curve;  // per epoch

  int num_labels() const { return labels.size(); }
  /// Predicted corpus label ids.
  std::vector<int> predict(std::span<const GrayImage> images) const;
  /// Penultimate features, one row per image.
  Eigen::MatrixXd features(std::span<const GrayImage> images) const;
};

/// Fits a classifier on `data` with a seeded validation slice and keeps the
/// weights of the best validation epoch. Fewer than two labels raise
/// ConfigError; missing the validation gate raises TrainingFailure carrying
/// the accuracy curve.
EvalClassifier train_eval_classifier(const GlyphSet& data, ClassifierTarget target,
                                     const ClassifierOptions& options = {});

/// Fraction of argmax-correct predictions. `kind` must match the classifier's
/// target (ConfigError otherwise); labels outside its label space raise IndexError.
double accuracy(std::span<const GrayImage> images, std::span<const int> labels,
                const EvalClassifier& classifier, ClassifierTarget kind);

enum class SplitKind { ucsf, ufsc };
std::string_view to_string(SplitKind s);
SplitKind parse_split_kind(std::string_view s);

/// One table row. Absent values serialise as "n/a".
struct MetricReport {
  SplitKind split = SplitKind::ucsf;
  std::size_t samples = 0;
  std::optional<double> l1, rmse, lpips, acc_c, acc_s, fid_c, fid_s;

  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

struct EvalClassifiers {
  const EvalClassifier* content = nullptr;
  const EvalClassifier* style = nullptr;
};

struct EvalOptions {
  std::uint64_t seed = 0;  // style reference sampling
  std::shared_ptr<PerceptualBackbone> perceptual;
};

/// Metrics of generated glyphs against their ground truth. Accuracies are
/// "n/a" when a label falls outside the classifier's label space; FIDs are
/// "n/a" with fewer than two samples.
MetricReport compute_report(SplitKind split, std::span<const GrayImage> generated,
                            std::span<const GrayImage> truth, std::span<const int> content_ids,
                            std::span<const int> style_ids, const EvalClassifiers& classifiers,
                            PerceptualBackbone* perceptual = nullptr);

/// Generates every glyph of the requested split slice, each from the
/// reference-style content glyph and k references of its font drawn from the
/// training characters, and scores the result.
MetricReport evaluate_suite(TrainingState& state, const Split& split, SplitKind kind,
                            const EvalClassifiers& classifiers, const EvalOptions& options = {});

/// One generated glyph per key of `targets`, in key order; references come
/// from `reference_pool` (corpus char ids) in the target's font.
std::vector<GrayImage> generate_set(TrainingState& state, const GlyphSet& targets,
                                    const std::vector<int>& reference_pool, std::uint64_t seed);

}  // namespace glyphgen
