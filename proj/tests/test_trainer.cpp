#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "glyphgen/error.hpp"
#include "glyphgen/losses.hpp"
#include "glyphgen/nn_util.hpp"
#include "glyphgen/tensor_image.hpp"
#include "glyphgen/trainer.hpp"
#include "test_support.hpp"

using namespace glyphgen;
using namespace glyphgen::testing;

namespace {

struct Rig {
  CorpusPtr corpus;
  GlyphSet train;
  TrainingState state;
};

TrainConfig small_config(std::uint64_t seed = 3) {
  auto c = tiny_config(seed);
  c.k_style = 3;
  return c;
}

Rig make_rig(const TrainConfig& config, int styles = 4, int chars = 6) {
  auto corpus = make_corpus(styles, chars, 32);
  auto train = training_set(config, corpus);
  auto state = TrainingState::create(config, *corpus, train);
  return {corpus, train, std::move(state)};
}

std::vector<TrainingSample> next_batch(Rig& rig) {
  return sample_batch(rig.train, rig.state.config.batch_size, rig.state.config.k_style,
                      rig.state.rng);
}

bool same_record(const LossRecord& a, const LossRecord& b) {
  return a.iteration == b.iteration && a.l_d == b.l_d && a.l_ccs_msp == b.l_ccs_msp &&
         a.l1 == b.l1 && a.l_adv_g == b.l_adv_g && a.l_ccs_g == b.l_ccs_g &&
         a.l_g_total == b.l_g_total;
}

}  // namespace

TEST(Losses, L1Cases) {
  auto a = torch::rand({2, 1, 8, 8});
  EXPECT_EQ(glyphgen::l1_loss(a, a).item<float>(), 0.0f);
  EXPECT_NEAR(glyphgen::l1_loss(a, a + 0.5).item<float>(), 0.5f, 1e-6);
  EXPECT_THROW(glyphgen::l1_loss(a, torch::rand({2, 1, 8, 4})), ShapeError);
  GrayImage x(4, 4), y(4, 4, 0.5f);
  EXPECT_DOUBLE_EQ(glyphgen::l1_loss(x, y), 0.5);
  EXPECT_THROW(glyphgen::l1_loss(x, GrayImage(4, 3)), ShapeError);
}

TEST(Losses, TotalObjectiveArithmetic) {
  TrainConfig c;  // lambdas 100 / 1 / 0.5
  EXPECT_NEAR(total_g_loss(0.1, 0.5, 2.0, c), 11.5, 1e-12);
  EXPECT_EQ(total_g_loss(0.0, 0.0, 0.0, c), 0.0);
  c.use_ccs = false;
  EXPECT_EQ(total_g_loss(0.1, 0.5, 2.0, c), total_g_loss(0.1, 0.5, 1e6, c));
  EXPECT_EQ(total_g_loss(0.1, 0.5, std::numeric_limits<double>::quiet_NaN(), c),
            total_g_loss(0.1, 0.5, 0.0, c));
  auto t = total_g_loss(torch::tensor(0.1, torch::kDouble), torch::tensor(0.5, torch::kDouble),
                        torch::tensor(2.0, torch::kDouble), TrainConfig{});
  EXPECT_NEAR(t.item<double>(), 11.5, 1e-12);
}

TEST(Losses, NanComponentIsDivergenceError) {
  TrainConfig c;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(total_g_loss(nan, 0.0, 0.0, c), DivergenceError);
  EXPECT_THROW(total_g_loss(0.0, std::numeric_limits<double>::infinity(), 0.0, c), DivergenceError);
  EXPECT_THROW(total_g_loss(0.0, 0.0, nan, c), DivergenceError);
}

TEST(TrainStep, OneStepRecordsFiniteLosses) {
  auto rig = make_rig(small_config());
  begin_epoch(rig.state, rig.train);
  const auto rec = train_step(rig.state, next_batch(rig));
  for (double v : {rec.l_d, rec.l_ccs_msp, rec.l1, rec.l_adv_g, rec.l_ccs_g, rec.l_g_total})
    EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(rec.iteration, 0);
  EXPECT_EQ(rig.state.iteration, 1);
}

TEST(TrainStep, RequiresInitialisedMemory) {
  auto rig = make_rig(small_config());
  EXPECT_THROW(train_step(rig.state, next_batch(rig)), ConfigError);
}

TEST(TrainStep, IdenticalSeedsGiveIdenticalRecords) {
  std::vector<LossRecord> runs[2];
  for (auto& log : runs) {
    auto rig = make_rig(small_config(17));
    begin_epoch(rig.state, rig.train);
    for (int i = 0; i < 3; ++i) log.push_back(train_step(rig.state, next_batch(rig)));
  }
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(same_record(runs[0][i], runs[1][i])) << i;
}

TEST(TrainStep, GeneratorStepDoesNotIncreaseL1OnTheSameBatch) {
  int increases = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto config = small_config(100 + trial);
    config.learning_rate = 1e-4;
    auto rig = make_rig(config);
    begin_epoch(rig.state, rig.train);
    const auto batch = next_batch(rig);
    const auto rec = train_step(rig.state, batch);
    std::vector<const Glyph*> content, truth;
    std::vector<std::vector<const Glyph*>> refs;
    for (const auto& s : batch) {
      content.push_back(s.content_image);
      truth.push_back(s.ground_truth);
      refs.push_back(s.style_images);
    }
    torch::NoGradGuard ng;
    const auto after =
        glyphgen::l1_loss(to_model_input(std::span<const Glyph* const>(truth)),
                          rig.state.generator->forward(
                              to_model_input(std::span<const Glyph* const>(content)),
                              stack_style_refs(refs)))
            .item<double>();
    if (after > rec.l1) ++increases;
  }
  EXPECT_EQ(increases, 0);
}

TEST(TrainStep, EachSubStepOnlyTouchesItsOwnNetwork) {
  auto rig = make_rig(small_config());
  auto& st = rig.state;
  std::map<Phase, std::array<std::uint64_t, 3>> seen;
  st.observer = [&](Phase p, std::int64_t) {
    seen[p] = {parameter_hash(*st.generator), parameter_hash(*st.discriminator),
               parameter_hash(*st.msp)};
  };
  begin_epoch(st, rig.train);
  train_step(st, next_batch(rig));
  const std::array<std::uint64_t, 3> end{parameter_hash(*st.generator),
                                         parameter_hash(*st.discriminator),
                                         parameter_hash(*st.msp)};
  const auto& d = seen.at(Phase::d_update);
  const auto& m = seen.at(Phase::msp_update);
  const auto& mem = seen.at(Phase::memory_update);
  const auto& g = seen.at(Phase::g_update);
  // D update: between d_update and msp_update
  EXPECT_NE(d[1], m[1]);
  EXPECT_EQ(d[0], m[0]);
  EXPECT_EQ(d[2], m[2]);
  // MSP update: between msp_update and memory_update
  EXPECT_NE(m[2], mem[2]);
  EXPECT_EQ(m[0], mem[0]);
  EXPECT_EQ(m[1], mem[1]);
  // memory update touches no network
  EXPECT_EQ(mem, g);
  // G update
  EXPECT_NE(g[0], end[0]);
  EXPECT_EQ(g[1], end[1]);
  EXPECT_EQ(g[2], end[2]);
}

TEST(TrainStep, GeneratorContrastiveTermLeavesNoGradientOnTheProjector) {
  auto rig = make_rig(small_config());
  auto& st = rig.state;
  std::vector<torch::Tensor> before;
  st.observer = [&](Phase p, std::int64_t) {
    if (p != Phase::g_update) return;
    for (const auto& q : st.msp->parameters())
      before.push_back(q.grad().defined() ? q.grad().clone() : torch::Tensor());
  };
  begin_epoch(st, rig.train);
  train_step(st, next_batch(rig));
  const auto params = st.msp->parameters();
  ASSERT_EQ(before.size(), params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    EXPECT_TRUE(params[i].requires_grad()) << "freeze restored";
    ASSERT_EQ(before[i].defined(), params[i].grad().defined());
    if (before[i].defined()) {
      EXPECT_TRUE(torch::equal(before[i], params[i].grad())) << i;
    }
  }
  for (const auto& q : st.discriminator->parameters()) EXPECT_TRUE(q.requires_grad());
}

TEST(TrainStep, LoggedTotalIsTheWeightedSumOfComponents) {
  for (bool use_ccs : {true, false}) {
    auto config = small_config();
    config.use_ccs = use_ccs;
    config.lambda1 = 37.0;
    config.lambda2 = 0.7;
    config.lambda3 = 2.5;
    auto rig = make_rig(config);
    begin_epoch(rig.state, rig.train);
    for (int i = 0; i < 3; ++i) {
      const auto r = train_step(rig.state, next_batch(rig));
      const double expected =
          37.0 * r.l1 + 0.7 * r.l_adv_g + (use_ccs ? 2.5 * r.l_ccs_g : 0.0);
      EXPECT_NEAR(r.l_g_total, expected, 1e-6 * std::max(1.0, std::abs(expected)));
      if (!use_ccs) {
        EXPECT_EQ(r.l_ccs_g, 0.0);
      }
    }
  }
}

TEST(TrainStep, NonFiniteLossIsDivergenceErrorNamingTheIteration) {
  auto rig = make_rig(small_config());
  begin_epoch(rig.state, rig.train);
  train_step(rig.state, next_batch(rig));
  {
    torch::NoGradGuard ng;
    for (auto& p : rig.state.discriminator->parameters())
      p.fill_(std::numeric_limits<float>::quiet_NaN());
  }
  rig.state.last_checkpoint = "/tmp/ckpt_marker";
  try {
    train_step(rig.state, next_batch(rig));
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("iteration 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("/tmp/ckpt_marker"), std::string::npos) << msg;
  }
}

TEST(Train, EpochStartMemoryEqualsFreshClassCenters) {
  auto rig = make_rig(small_config());
  auto& st = rig.state;
  begin_epoch(st, rig.train);
  for (int i = 0; i < 3; ++i) train_step(st, next_batch(rig));
  begin_epoch(st, rig.train);
  // oracle: per style, normalised mean of single-image codes
  const int S = st.styles.size();
  for (int scale = 0; scale < kNumScales; ++scale) {
    std::vector<torch::Tensor> sums(S);
    for (std::size_t i = 0; i < rig.train.size(); ++i) {
      torch::NoGradGuard ng;
      const int s = st.styles.dense(rig.train.keys[i].style_id);
      auto z = msp_forward(st.msp, rig.train.glyph(i).image).z[scale][0].to(torch::kDouble);
      sums[s] = sums[s].defined() ? sums[s] + z : z;
    }
    for (int s = 0; s < S; ++s) {
      auto expected = sums[s] / sums[s].norm();
      auto got = st.memory->center(scale, s).to(torch::kDouble);
      EXPECT_TRUE(torch::allclose(got, expected, 1e-4, 1e-5)) << "scale " << scale << " style " << s;
    }
  }
}

TEST(Train, PhasesFollowUpdateOrder) {
  auto config = small_config();
  config.epochs = 2;
  auto corpus = make_corpus(4, 6, 32);
  std::vector<Phase> trace;
  TrainOptions opts;
  opts.observer = [&](Phase p, std::int64_t) { trace.push_back(p); };
  const auto result = train(config, corpus, opts);
  const std::int64_t per_epoch = (24 + 3) / 4;
  ASSERT_EQ(static_cast<std::int64_t>(result.log.size()), 2 * per_epoch);
  const std::vector<Phase> step{Phase::generate, Phase::d_update, Phase::msp_update,
                                Phase::memory_update, Phase::g_update};
  std::vector<Phase> expected;
  for (int e = 0; e < 2; ++e) {
    expected.push_back(Phase::memory_init);
    for (std::int64_t i = 0; i < per_epoch; ++i) expected.insert(expected.end(), step.begin(), step.end());
  }
  EXPECT_EQ(trace, expected);
}

TEST(Train, NoCcsAblationSkipsProjectorAndMemory) {
  auto config = small_config();
  config.use_ccs = false;
  std::vector<Phase> trace;
  TrainOptions opts;
  opts.observer = [&](Phase p, std::int64_t) { trace.push_back(p); };
  const auto result = train(config, make_corpus(4, 6, 32), opts);
  for (Phase p : trace) {
    EXPECT_NE(p, Phase::msp_update);
    EXPECT_NE(p, Phase::memory_update);
    EXPECT_NE(p, Phase::memory_init);
  }
  EXPECT_FALSE(result.state.memory.has_value());
}

TEST(Train, TwoEpochsOnTheDeskCorpusAreFinite) {
  auto config = small_config();
  config.epochs = 2;
  config.batch_size = 16;
  config.k_style = 6;
  TempDir dir("train_smoke");
  TrainOptions opts;
  opts.out_dir = dir.path();
  const auto result = train(config, make_corpus(8, 10, 32), opts);
  ASSERT_EQ(result.log.size(), 10u);
  for (const auto& r : result.log)
    for (double v : {r.l_d, r.l_ccs_msp, r.l1, r.l_adv_g, r.l_ccs_g, r.l_g_total})
      ASSERT_TRUE(std::isfinite(v));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "final.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "last.ckpt"));
  std::ifstream metrics(dir.path() / "metrics.csv");
  std::string line;
  int lines = 0;
  std::getline(metrics, line);
  EXPECT_EQ(line, kMetricsHeader);
  while (std::getline(metrics, line)) ++lines;
  EXPECT_EQ(lines, 10);
}

TEST(Train, MaxIterationsAndCallbackStopEarly) {
  auto config = small_config();
  config.epochs = 50;
  config.max_iterations = 4;
  EXPECT_EQ(train(config, make_corpus(4, 6, 32)).log.size(), 4u);
  config.max_iterations = 0;
  TrainOptions opts;
  opts.on_iteration = [](const TrainingState& s, const LossRecord&) { return s.iteration < 2; };
  EXPECT_EQ(train(config, make_corpus(4, 6, 32), opts).log.size(), 2u);
}

TEST(TrainingState, RejectsImpossibleSetups) {
  auto corpus = make_corpus(4, 4, 32);
  auto config = small_config();
  config.k_style = 4;
  EXPECT_THROW(TrainingState::create(config, *corpus, full_set(corpus)), ConfigError);
  config.k_style = 3;
  config.lambda2 = -1;
  EXPECT_THROW(TrainingState::create(config, *corpus, full_set(corpus)), ConfigError);
}

TEST(LabelMap, DenseLookup) {
  LabelMap m({7, 2, 5, 2});
  EXPECT_EQ(m.size(), 3);
  EXPECT_EQ(m.dense(5), 1);
  EXPECT_EQ(m.id(2), 7);
  EXPECT_THROW(m.dense(3), IndexError);
}

TEST(TrainConfig, ShippedConfigsLoad) {
  EXPECT_EQ(TrainConfig::load(GLYPHGEN_CONFIG_DIR "/full_scale.json").to_json(),
            TrainConfig::full_scale().to_json());
  const auto desk = TrainConfig::load(GLYPHGEN_CONFIG_DIR "/desk_overfit.json");
  EXPECT_EQ(desk.batch_size, 16);
  EXPECT_LE(desk.max_iterations, 3000);
}

TEST(TrainConfig, FullScaleValues) {
  const auto c = TrainConfig::full_scale();
  EXPECT_EQ(c.batch_size, 256);
  EXPECT_EQ(c.epochs, 20);
  EXPECT_EQ(c.lambda1, 100.0);
  EXPECT_EQ(c.lambda2, 1.0);
  EXPECT_EQ(c.lambda3, 0.5);
  EXPECT_EQ(c.tau, 0.05);
  EXPECT_EQ(c.momentum_m, 0.1);
  EXPECT_EQ(c.k_style, 6);
  const auto desk = TrainConfig{};
  EXPECT_EQ(desk.batch_size, 16);
  EXPECT_EQ(desk.epochs, 20);
}

TEST(TrainConfig, JsonRoundTripAndValidation) {
  auto c = small_config(9);
  c.discriminator_variant = DiscriminatorVariant::patch;
  c.held_out_chars = {1};
  c.held_out_styles = {2};
  const auto back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());

  auto j = c.to_json();
  j["lambda1"] = -1.0;
  EXPECT_THROW(TrainConfig::from_json(j), ConfigError);
  j = c.to_json();
  j["batch_size"] = 0;
  EXPECT_THROW(TrainConfig::from_json(j), ConfigError);
  j = c.to_json();
  j["learning_rte"] = 1e-3;
  EXPECT_THROW(TrainConfig::from_json(j), ConfigError);
  j = c.to_json();
  j["discriminator_variant"] = "global";
  EXPECT_THROW(TrainConfig::from_json(j), ConfigError);
  j = c.to_json();
  j["tau"] = "hot";
  EXPECT_THROW(TrainConfig::from_json(j), ConfigError);
  j = c.to_json();
  j["held_out_styles"] = nlohmann::json::array();
  EXPECT_THROW(TrainConfig::from_json(j), ConfigError);
}
