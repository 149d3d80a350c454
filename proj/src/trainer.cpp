#include "glyphgen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "glyphgen/checkpoint.hpp"
#include "glyphgen/error.hpp"
#include "glyphgen/losses.hpp"
#include "glyphgen/nn_util.hpp"
#include "glyphgen/tensor_image.hpp"

namespace glyphgen {
namespace fs = std::filesystem;

LabelMap::LabelMap(std::vector<int> ids) : ids_(std::move(ids)) {
  std::sort(ids_.begin(), ids_.end());
  ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
}

bool LabelMap::contains(int id) const { return std::binary_search(ids_.begin(), ids_.end(), id); }

int LabelMap::dense(int id) const {
  auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
  if (it == ids_.end() || *it != id)
    throw IndexError("label " + std::to_string(id) + " was not seen in training");
  return static_cast<int>(it - ids_.begin());
}

std::string to_csv_row(const LossRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(r.iteration), r.l_d, r.l_ccs_msp, r.l1, r.l_adv_g, r.l_ccs_g,
                r.l_g_total);
  return buf;
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::memory_init: return "memory_init";
    case Phase::generate: return "generate";
    case Phase::d_update: return "d_update";
    case Phase::msp_update: return "msp_update";
    case Phase::memory_update: return "memory_update";
    case Phase::g_update: return "g_update";
  }
  return "?";
}

GeneratorOptions TrainingState::generator_options() const {
  GeneratorOptions o;
  o.image_size = image_size;
  o.base_width = config.model.gen_base_width;
  o.style_dim = config.model.style_dim;
  o.k_style = config.k_style;
  return o;
}

DiscriminatorOptions TrainingState::discriminator_options() const {
  DiscriminatorOptions o;
  o.image_size = image_size;
  o.base_width = config.model.disc_base_width;
  o.num_chars = chars.size();
  o.num_styles = styles.size();
  o.variant = config.discriminator_variant;
  return o;
}

MspOptions TrainingState::msp_options() const {
  MspOptions o;
  o.image_size = image_size;
  o.widths = config.model.msp_widths;
  o.hidden = config.model.msp_hidden;
  o.code_dim = config.model.code_dim;
  return o;
}

void TrainingState::build_networks() {
  generator = Generator(generator_options());
  discriminator = Discriminator(discriminator_options());
  msp = MultiLayerStyleProjector(msp_options());
  auto adam = [this](const std::vector<torch::Tensor>& params) {
    return std::make_unique<torch::optim::Adam>(
        params, torch::optim::AdamOptions(config.learning_rate).betas({config.beta1, config.beta2}));
  };
  opt_g = adam(generator->parameters());
  opt_d = adam(discriminator->parameters());
  opt_msp = adam(msp->parameters());
}

TrainingState TrainingState::create(const TrainConfig& config, const Corpus& corpus,
                                    const GlyphSet& train) {
  config.validate();
  TrainingState s;
  s.config = config;
  s.image_size = corpus.image_size();
  s.reference_style = corpus.reference_style();
  s.chars = LabelMap(train.char_ids());
  s.styles = LabelMap(train.style_ids());
  if (s.styles.size() < 2) throw ConfigError("training needs at least two styles");
  if (!s.styles.contains(s.reference_style))
    throw ConfigError("the reference style must be part of the training set");
  if (config.k_style > s.chars.size() - 1)
    throw ConfigError("k_style=" + std::to_string(config.k_style) + " exceeds the " +
                      std::to_string(s.chars.size() - 1) + " available references per style");
  for (int c = 0; c < corpus.num_chars(); ++c)
    s.reference_glyphs.push_back(corpus.at(s.reference_style, c).image);
  torch::manual_seed(config.seed);
  s.build_networks();
  s.rng.seed(config.seed);
  return s;
}

GlyphSet training_set(const TrainConfig& config, const CorpusPtr& corpus) {
  if (config.held_out_chars.empty() && config.held_out_styles.empty()) return full_set(corpus);
  SplitSpec spec;
  spec.held_out_chars = {config.held_out_chars.begin(), config.held_out_chars.end()};
  spec.held_out_styles = {config.held_out_styles.begin(), config.held_out_styles.end()};
  return split(corpus, spec).train;
}

void begin_epoch(TrainingState& state, const GlyphSet& train) {
  if (!state.config.use_ccs) return;
  if (state.observer) state.observer(Phase::memory_init, state.iteration);
  std::vector<const GrayImage*> images;
  std::vector<int> styles;
  for (std::size_t i = 0; i < train.size(); ++i) {
    images.push_back(&train.glyph(i).image);
    styles.push_back(state.styles.dense(train.keys[i].style_id));
  }
  state.memory = init_epoch(state.msp, images, styles, state.styles.size(),
                            state.config.momentum_m, state.config.tau);
}

namespace {

void check_finite(const TrainingState& state, const char* what, double v) {
  if (std::isfinite(v)) return;
  std::string msg = std::string("non-finite ") + what + " at iteration " +
                    std::to_string(state.iteration);
  msg += state.last_checkpoint.empty() ? " (no checkpoint written yet)"
                                       : " (last good checkpoint: " + state.last_checkpoint + ")";
  throw DivergenceError(msg);
}

}  // namespace

LossRecord train_step(TrainingState& state, const std::vector<TrainingSample>& batch) {
  if (batch.empty()) throw ConfigError("train_step: empty batch");
  const auto& cfg = state.config;
  if (cfg.use_ccs && !state.memory)
    throw ConfigError("train_step: memory not initialised for this epoch");
  auto note = [&state](Phase p) {
    if (state.observer) state.observer(p, state.iteration);
  };

  std::vector<const Glyph*> content, truth;
  std::vector<std::vector<const Glyph*>> refs;
  std::vector<int64_t> yc, ys;
  std::vector<int> ys_int;
  for (const auto& s : batch) {
    content.push_back(s.content_image);
    truth.push_back(s.ground_truth);
    refs.push_back(s.style_images);
    yc.push_back(state.chars.dense(s.y_c));
    ys.push_back(state.styles.dense(s.y_s));
    ys_int.push_back(static_cast<int>(ys.back()));
  }
  auto content_t = to_model_input(std::span<const Glyph* const>(content));
  auto truth_t = to_model_input(std::span<const Glyph* const>(truth));
  auto styles_t = stack_style_refs(refs);
  auto yc_t = torch::tensor(yc, torch::kLong);
  auto ys_t = torch::tensor(ys, torch::kLong);

  LossRecord rec;
  rec.iteration = state.iteration;
  state.generator->train();
  state.discriminator->train();

  note(Phase::generate);
  auto fake = state.generator->forward(content_t, styles_t);

  note(Phase::d_update);
  {
    state.opt_d->zero_grad();
    auto real_scores = state.discriminator->forward(truth_t, yc_t, ys_t);
    auto fake_scores = state.discriminator->forward(fake.detach(), yc_t, ys_t);
    auto l_d = adv_loss_d(real_scores, fake_scores);
    rec.l_d = l_d.item<double>();
    check_finite(state, "discriminator loss", rec.l_d);
    l_d.backward();
    state.opt_d->step();
  }

  if (cfg.use_ccs) {
    note(Phase::msp_update);
    state.msp->train();
    state.opt_msp->zero_grad();
    auto query = state.msp->forward(truth_t);
    auto l_msp = ccs_loss_batch(query, ys_t, *state.memory);
    rec.l_ccs_msp = l_msp.item<double>();
    check_finite(state, "MSP contrastive loss", rec.l_ccs_msp);
    l_msp.backward();
    state.opt_msp->step();

    note(Phase::memory_update);
    state.memory->momentum_update(query.detach(), ys_int);
  }

  note(Phase::g_update);
  {
    state.opt_g->zero_grad();
    FreezeGuard freeze_d(*state.discriminator);
    FreezeGuard freeze_msp(*state.msp);
    EvalModeGuard msp_eval(*state.msp);
    auto l1 = glyphgen::l1_loss(truth_t, fake);
    auto adv = adv_loss_g(state.discriminator->forward(fake, yc_t, ys_t));
    torch::Tensor ccs;
    if (cfg.use_ccs) ccs = ccs_loss_batch(state.msp->forward(fake), ys_t, *state.memory);
    rec.l1 = l1.item<double>();
    rec.l_adv_g = adv.item<double>();
    rec.l_ccs_g = cfg.use_ccs ? ccs.item<double>() : 0.0;
    check_finite(state, "L1 loss", rec.l1);
    check_finite(state, "generator adversarial loss", rec.l_adv_g);
    check_finite(state, "generator contrastive loss", rec.l_ccs_g);
    auto total = total_g_loss(l1, adv, ccs, cfg);
    rec.l_g_total = total.item<double>();
    check_finite(state, "generator total loss", rec.l_g_total);
    total.backward();
    state.opt_g->step();
  }

  ++state.iteration;
  return rec;
}

TrainResult train(const TrainConfig& config, const CorpusPtr& corpus, const TrainOptions& options) {
  const GlyphSet train_set = training_set(config, corpus);
  TrainResult result{TrainingState::create(config, *corpus, train_set), {}};
  auto& state = result.state;
  state.observer = options.observer;

  std::ofstream metrics;
  if (options.out_dir) {
    std::error_code ec;
    fs::create_directories(*options.out_dir, ec);
    if (ec) throw IoError("cannot create " + options.out_dir->string() + ": " + ec.message());
    metrics.open(*options.out_dir / "metrics.csv");
    if (!metrics) throw IoError("cannot write metrics log in " + options.out_dir->string());
    metrics << kMetricsHeader << '\n';
  }
  auto write_checkpoint = [&](const std::string& name) {
    if (!options.out_dir) return;
    const auto path = *options.out_dir / name;
    save_checkpoint(state, path);
    state.last_checkpoint = path.string();
  };

  const auto per_epoch = static_cast<std::int64_t>(
      (train_set.size() + static_cast<std::size_t>(config.batch_size) - 1) / config.batch_size);
  bool stop = false;
  for (state.epoch = 0; state.epoch < config.epochs && !stop; ++state.epoch) {
    begin_epoch(state, train_set);
    for (std::int64_t i = 0; i < per_epoch && !stop; ++i) {
      auto batch = sample_batch(train_set, config.batch_size, config.k_style, state.rng);
      const auto rec = train_step(state, batch);
      result.log.push_back(rec);
      if (metrics.is_open()) metrics << to_csv_row(rec) << std::endl;
      if (options.verbose && state.iteration % 50 == 0)
        std::cerr << "[train] " << to_csv_row(rec) << '\n';
      if (config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0)
        write_checkpoint("last.ckpt");
      if (config.max_iterations > 0 && state.iteration >= config.max_iterations) stop = true;
      if (options.on_iteration && !options.on_iteration(state, rec)) stop = true;
    }
    if (config.checkpoint_every == 0 && !stop) write_checkpoint("last.ckpt");
  }
  write_checkpoint("final.ckpt");
  return result;
}

GrayImage generate_glyph(TrainingState& state, int content_char,
                         std::span<const GrayImage* const> style_images) {
  if (content_char < 0 || content_char >= static_cast<int>(state.reference_glyphs.size()))
    throw IndexError("content char " + std::to_string(content_char) + " not in the reference font");
  return generate(state.generator, state.reference_glyphs[content_char], style_images);
}

}  // namespace glyphgen
