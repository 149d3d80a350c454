#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "glyphgen/corpus.hpp"
#include "glyphgen/discriminator.hpp"
#include "glyphgen/generator.hpp"
#include "glyphgen/msp.hpp"
#include "glyphgen/style_memory.hpp"
#include "glyphgen/train_config.hpp"

namespace glyphgen {

/// Dense relabelling of the corpus ids seen in training (embedding rows,
/// memory rows and classifier outputs are indexed densely).
class LabelMap {
 public:
  LabelMap() = default;
  explicit LabelMap(std::vector<int> ids);

  int size() const { return static_cast<int>(ids_.size()); }
  const std::vector<int>& ids() const { return ids_; }
  bool contains(int id) const;
  /// Throws IndexError for ids outside the map.
  int dense(int id) const;
  int id(int dense_index) const { return ids_.at(dense_index); }

 private:
  std::vector<int> ids_;  // sorted
};

/// Per-iteration losses, in the column order of the metrics log.
struct LossRecord {
  std::int64_t iteration = 0;
  double l_d = 0;
  double l_ccs_msp = 0;
  double l1 = 0;
  double l_adv_g = 0;
  double l_ccs_g = 0;
  double l_g_total = 0;
};

inline constexpr const char* kMetricsHeader = "iter,L_D,L_ccs_MSP,L1,L_adv_G,L_ccs_G,L_G_total";
std::string to_csv_row(const LossRecord& r);

/// Instrumentation points, reported in execution order.
enum class Phase { memory_init, generate, d_update, msp_update, memory_update, g_update };
std::string_view to_string(Phase p);
using PhaseObserver = std::function<void(Phase, std::int64_t iteration)>;

/// Everything the training loop mutates, plus what inference needs without
/// the corpus (label maps and the reference-style glyphs).
struct TrainingState {
  TrainConfig config;
  int image_size = 64;
  int reference_style = 0;
  LabelMap chars;
  LabelMap styles;
  std::vector<GrayImage> reference_glyphs;  // indexed by corpus char id

  Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  MultiLayerStyleProjector msp{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g, opt_d, opt_msp;
  std::optional<StyleMemory> memory;

  int epoch = 0;
  std::int64_t iteration = 0;
  std::mt19937_64 rng;
  std::string last_checkpoint;  // for divergence diagnostics
  PhaseObserver observer;

  /// Fresh networks and optimizers, seeded from config.seed.
  static TrainingState create(const TrainConfig& config, const Corpus& corpus,
                              const GlyphSet& train);

  GeneratorOptions generator_options() const;
  DiscriminatorOptions discriminator_options() const;
  MspOptions msp_options() const;

  /// Builds unseeded networks with this state's shapes and fresh optimizers.
  void build_networks();
};

/// Training set selected by the config's held-out lists (whole corpus if none).
GlyphSet training_set(const TrainConfig& config, const CorpusPtr& corpus);

/// Rebuilds the memory from the current projector; run at every epoch start.
void begin_epoch(TrainingState& state, const GlyphSet& train);

/// One iteration: generate, update D, update MSP, momentum-update the
/// memory, update G. Non-finite losses raise DivergenceError.
LossRecord train_step(TrainingState& state, const std::vector<TrainingSample>& batch);

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints + metrics.csv
  PhaseObserver observer;
  /// Called after every iteration; returning false stops training.
  std::function<bool(const TrainingState&, const LossRecord&)> on_iteration;
  bool verbose = false;
};

struct TrainResult {
  TrainingState state;
  std::vector<LossRecord> log;
};

TrainResult train(const TrainConfig& config, const CorpusPtr& corpus, const TrainOptions& options = {});

/// Generated glyph for a (corpus char, style refs) request through a trained state.
GrayImage generate_glyph(TrainingState& state, int content_char,
                         std::span<const GrayImage* const> style_images);

}  // namespace glyphgen
