#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "glyphgen/discriminator.hpp"

namespace glyphgen {

/// Network sizes. Defaults are the full-size architecture; desk experiments
/// shrink the widths through the config file.
struct ModelConfig {
  int gen_base_width = 64;
  int style_dim = 256;
  std::array<int, 3> msp_widths{64, 128, 256};
  int msp_hidden = 512;
  int code_dim = 256;
  int disc_base_width = 32;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct TrainConfig {
  double lambda1 = 100.0;  // L1
  double lambda2 = 1.0;    // adversarial
  double lambda3 = 0.5;    // contrastive style
  double tau = 0.05;
  double momentum_m = 0.1;
  int k_style = 6;
  int batch_size = 16;
  int epochs = 20;
  std::int64_t max_iterations = 0;  // 0: no cap beyond `epochs`
  double learning_rate = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  DiscriminatorVariant discriminator_variant = DiscriminatorVariant::multitask_patch;
  bool use_ccs = true;
  std::int64_t checkpoint_every = 0;  // iterations; 0 writes one checkpoint per epoch
  std::vector<int> held_out_chars;    // both empty: train on the whole corpus
  std::vector<int> held_out_styles;
  ModelConfig model;

  /// Throws ConfigError on any out-of-range field.
  void validate() const;

  nlohmann::json to_json() const;
  /// Unknown keys are rejected so typos do not silently fall back to defaults.
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load(const std::string& path);

  /// Full-scale reference settings: 20 epochs, batch 256.
  static TrainConfig full_scale();
};

}  // namespace glyphgen
