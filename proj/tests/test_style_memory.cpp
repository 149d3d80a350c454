#include <gtest/gtest.h>

#include <cmath>

#include "glyphgen/error.hpp"
#include "glyphgen/style_memory.hpp"
#include "test_support.hpp"

using namespace glyphgen;
using namespace glyphgen::testing;

namespace {

/// A batch-of-one code with the same vector at every scale.
StyleCode same_at_all_scales(torch::Tensor v) {
  StyleCode c;
  for (int i = 0; i < kNumScales; ++i) c.z[i] = v.reshape({1, -1}).clone();
  return c;
}

torch::Tensor random_unit(int k, torch::Dtype dtype = torch::kDouble) {
  auto v = torch::randn({k}, dtype);
  return v / v.norm();
}

/// Centers with every similarity to `q` equal: q orthogonal to all centers.
StyleMemory equal_similarity_memory(int S, torch::Tensor& q) {
  const int K = S + 1;
  q = torch::zeros({K}, torch::kDouble);
  q[0] = 1.0;
  auto centers = torch::zeros({kNumScales, S, K}, torch::kDouble);
  for (int i = 0; i < kNumScales; ++i)
    for (int s = 0; s < S; ++s) centers[i][s][s + 1] = 1.0;
  return StyleMemory::from_centers(centers);
}

}  // namespace

TEST(StyleMemory, SingleGlyphCenterEqualsItsCode) {
  torch::manual_seed(0);
  const auto a = same_at_all_scales(random_unit(4, torch::kFloat));
  const auto b = same_at_all_scales(random_unit(4, torch::kFloat));
  const int styles[] = {0, 1};
  auto mem = StyleMemory::from_codes({a, b}, styles, 2);
  for (int i = 0; i < kNumScales; ++i) {
    EXPECT_TRUE(torch::allclose(mem.center(i, 0), a.z[i][0], 1e-6, 1e-7));
    EXPECT_TRUE(torch::allclose(mem.center(i, 1), b.z[i][0], 1e-6, 1e-7));
  }
}

TEST(StyleMemory, TwoOrthogonalCodesGiveDiagonalCenter) {
  const auto a = same_at_all_scales(torch::tensor({1.0, 0.0}, torch::kDouble));
  const auto b = same_at_all_scales(torch::tensor({0.0, 1.0}, torch::kDouble));
  const auto other = same_at_all_scales(torch::tensor({1.0, 0.0}, torch::kDouble));
  const int styles[] = {0, 0, 1};
  auto mem = StyleMemory::from_codes({a, b, other}, styles, 2);
  const double r = 1.0 / std::sqrt(2.0);
  for (int i = 0; i < kNumScales; ++i) {
    EXPECT_NEAR(mem.center(i, 0)[0].item<double>(), r, 1e-12);
    EXPECT_NEAR(mem.center(i, 0)[1].item<double>(), r, 1e-12);
  }
}

TEST(StyleMemory, AllCentersUnitNormAfterInit) {
  torch::manual_seed(1);
  std::vector<StyleCode> codes;
  std::vector<int> styles;
  for (int n = 0; n < 30; ++n) {
    codes.push_back(same_at_all_scales(random_unit(8)));
    styles.push_back(n % 5);
  }
  auto mem = StyleMemory::from_codes(codes, styles, 5);
  auto norms = mem.centers().norm(2, 2);
  EXPECT_TRUE(torch::allclose(norms, torch::ones_like(norms), 0, 1e-12));
}

TEST(StyleMemory, StyleWithoutGlyphsIsIntegrityError) {
  const auto a = same_at_all_scales(torch::tensor({1.0, 0.0}, torch::kDouble));
  const int styles[] = {0};
  EXPECT_THROW(StyleMemory::from_codes({a}, styles, 2), IntegrityError);
}

TEST(StyleMemory, InitEpochBuildsNormalisedClassCentersFromTheProjector) {
  torch::manual_seed(4);
  MspOptions o;
  o.image_size = 32;
  o.widths = {4, 4, 8};
  o.hidden = 8;
  o.code_dim = 6;
  MultiLayerStyleProjector msp(o);
  auto corpus = make_corpus(3, 4, 32);
  std::vector<const GrayImage*> images;
  std::vector<int> styles;
  for (const auto& g : corpus->glyphs()) {
    images.push_back(&g.image);
    styles.push_back(g.style_id);
  }
  auto mem = init_epoch(msp, images, styles, 3);
  const auto codes = batch_encode(msp, images);
  for (int i = 0; i < kNumScales; ++i)
    for (int s = 0; s < 3; ++s) {
      auto sum = torch::zeros({6});
      for (std::size_t n = 0; n < codes.size(); ++n)
        if (styles[n] == s) sum += codes[n].z[i][0];
      EXPECT_TRUE(torch::allclose(mem.center(i, s), sum / sum.norm(), 1e-5, 1e-6));
    }
}

TEST(CcsLoss, UniformSimilarityEqualsThreeLnS) {
  for (int S = 2; S <= 16; ++S) {
    torch::Tensor q;
    auto mem = equal_similarity_memory(S, q);
    for (int pos = 0; pos < S; ++pos) {
      const auto r = ccs_loss(same_at_all_scales(q), pos, mem);
      EXPECT_NEAR(r.loss, 3.0 * std::log(static_cast<double>(S)), 1e-6) << "S=" << S;
    }
  }
  torch::Tensor q;
  auto mem = equal_similarity_memory(4, q);
  EXPECT_NEAR(ccs_loss(same_at_all_scales(q), 0, mem).loss, 4.1588830833596715, 1e-9);
}

TEST(CcsLoss, OrthogonalNegativeCaseMatchesScalarOracle) {
  auto centers = torch::zeros({kNumScales, 2, 2}, torch::kDouble);
  for (int i = 0; i < kNumScales; ++i) {
    centers[i][0][0] = 1.0;
    centers[i][1][1] = 1.0;
  }
  auto mem = StyleMemory::from_centers(centers, 0.1, 0.05);
  const auto r = ccs_loss(same_at_all_scales(torch::tensor({1.0, 0.0}, torch::kDouble)), 0, mem);
  const double per_scale = std::log1p(std::exp(-20.0));
  EXPECT_NEAR(per_scale, 2.06e-9, 1e-11);
  EXPECT_NEAR(r.loss, 3.0 * per_scale, 1e-12);
  EXPECT_NEAR(r.loss, 6.19e-9, 1e-11);
}

TEST(CcsLoss, AnalyticGradientMatchesFiniteDifferences) {
  torch::manual_seed(5);
  const int S = 5, K = 7;
  auto centers = torch::randn({kNumScales, S, K}, torch::kDouble);
  auto mem = StyleMemory::from_centers(centers);
  for (int trial = 0; trial < 10; ++trial) {
    StyleCode q;
    for (int i = 0; i < kNumScales; ++i) q.z[i] = random_unit(K).reshape({1, K});
    const int pos = trial % S;
    const auto r = ccs_loss(q, pos, mem);
    for (int i = 0; i < kNumScales; ++i)
      for (int k = 0; k < K; ++k) {
        auto f = [&] { return ccs_loss(q, pos, mem).loss; };
        const double numeric = numeric_derivative(f, q.z[i], k, 1e-6);
        EXPECT_LT(relative_error(r.grad[i][k].item<double>(), numeric, 1e-8), 1e-4)
            << "trial " << trial << " scale " << i << " coord " << k;
      }
  }
}

TEST(CcsLoss, BatchFormMatchesAnalyticAverage) {
  torch::manual_seed(6);
  const int S = 4, K = 5, N = 3;
  auto mem = StyleMemory::from_centers(torch::randn({kNumScales, S, K}, torch::kDouble));
  StyleCode q;
  for (int i = 0; i < kNumScales; ++i) {
    auto z = torch::randn({N, K}, torch::kDouble);
    q.z[i] = (z / z.norm(2, 1, true)).requires_grad_(true);
  }
  auto styles = torch::tensor({2, 0, 3}, torch::kLong);
  auto batch = ccs_loss_batch(q, styles, mem);
  batch.backward();
  double expected = 0.0;
  for (int n = 0; n < N; ++n) {
    const auto r = ccs_loss(q.row(n), styles[n].item<int>(), mem);
    expected += r.loss / N;
    for (int i = 0; i < kNumScales; ++i)
      EXPECT_TRUE(torch::allclose(q.z[i].grad()[n], r.grad[i] / N, 1e-9, 1e-12));
  }
  EXPECT_NEAR(batch.item<double>(), expected, 1e-10);
}

TEST(CcsLoss, NonNegativeForRandomQueries) {
  torch::manual_seed(11);
  auto mem = StyleMemory::from_centers(torch::randn({kNumScales, 6, 8}, torch::kDouble));
  for (int trial = 0; trial < 200; ++trial) {
    StyleCode q;
    for (int i = 0; i < kNumScales; ++i) q.z[i] = random_unit(8).reshape({1, 8});
    EXPECT_GE(ccs_loss(q, trial % 6, mem).loss, 0.0);
  }
}

TEST(CcsLoss, PositiveSimilarityIncreaseWithNegativesFixedStrictlyDecreasesLoss) {
  // q fixed; only the positive center moves.
  const int K = 4;
  auto q = torch::tensor({1.0, 0.0, 0.0, 0.0}, torch::kDouble);
  double previous = std::numeric_limits<double>::infinity();
  for (double sim = -0.9; sim <= 0.95; sim += 0.15) {
    auto centers = torch::zeros({kNumScales, 3, K}, torch::kDouble);
    for (int i = 0; i < kNumScales; ++i) {
      centers[i][0][0] = sim;
      centers[i][0][1] = std::sqrt(1 - sim * sim);
      centers[i][1][0] = 0.2;
      centers[i][1][2] = std::sqrt(1 - 0.04);
      centers[i][2][0] = -0.4;
      centers[i][2][3] = std::sqrt(1 - 0.16);
    }
    const double loss = ccs_loss(same_at_all_scales(q), 0, StyleMemory::from_centers(centers)).loss;
    EXPECT_LT(loss, previous) << "sim " << sim;
    previous = loss;
  }
}

TEST(CcsLoss, PermutingNegativeRowsLeavesLossUnchanged) {
  torch::manual_seed(7);
  const int S = 6, K = 5;
  auto centers = torch::randn({kNumScales, S, K}, torch::kDouble);
  StyleCode q;
  for (int i = 0; i < kNumScales; ++i) q.z[i] = random_unit(K).reshape({1, K});
  const double base = ccs_loss(q, 0, StyleMemory::from_centers(centers)).loss;
  auto perm = torch::tensor({0, 3, 5, 1, 4, 2}, torch::kLong);
  const double permuted =
      ccs_loss(q, 0, StyleMemory::from_centers(centers.index_select(1, perm))).loss;
  EXPECT_NEAR(base, permuted, 1e-12);
}

TEST(CcsLoss, UnknownStyleIsIndexError) {
  auto mem = StyleMemory(3, 4);
  const auto q = same_at_all_scales(torch::tensor({1.0f, 0.0f, 0.0f, 0.0f}));
  EXPECT_THROW(ccs_loss(q, 3, mem), IndexError);
  EXPECT_THROW(ccs_loss(q, -1, mem), IndexError);
}

TEST(MomentumUpdate, HandOracle) {
  auto centers = torch::zeros({kNumScales, 2, 2}, torch::kDouble);
  for (int i = 0; i < kNumScales; ++i) {
    centers[i][0][0] = 1.0;
    centers[i][1][0] = 1.0;
  }
  auto mem = StyleMemory::from_centers(centers, 0.1);
  mem.momentum_update(same_at_all_scales(torch::tensor({0.0, 1.0}, torch::kDouble)), 0);
  for (int i = 0; i < kNumScales; ++i) {
    EXPECT_NEAR(mem.center(i, 0)[0].item<double>(), 0.11043, 1e-5);
    EXPECT_NEAR(mem.center(i, 0)[1].item<double>(), 0.99388, 1e-5);
    // other rows untouched
    EXPECT_EQ(mem.center(i, 1)[0].item<double>(), 1.0);
    EXPECT_EQ(mem.center(i, 1)[1].item<double>(), 0.0);
  }
}

TEST(MomentumUpdate, FixedPointsAtMomentumZeroAndOne) {
  torch::manual_seed(8);
  auto centers = torch::randn({kNumScales, 3, 6}, torch::kDouble);
  auto keep = StyleMemory::from_centers(centers, 1.0);
  auto replace = StyleMemory::from_centers(centers, 0.0);
  const auto before = keep.centers().clone();
  StyleCode q;
  for (int i = 0; i < kNumScales; ++i) q.z[i] = random_unit(6).reshape({1, 6});
  keep.momentum_update(q, 1);
  replace.momentum_update(q, 1);
  EXPECT_TRUE(torch::equal(keep.centers(), before));
  for (int i = 0; i < kNumScales; ++i) EXPECT_TRUE(torch::equal(replace.center(i, 1), q.z[i][0]));
}

TEST(MomentumUpdate, UnitNormSurvivesTenThousandRandomUpdates) {
  torch::manual_seed(9);
  auto mem = StyleMemory::from_centers(torch::randn({kNumScales, 8, 16}, torch::kDouble));
  std::mt19937_64 rng(3);
  for (int step = 0; step < 10000; ++step) {
    StyleCode q;
    for (int i = 0; i < kNumScales; ++i) q.z[i] = random_unit(16).reshape({1, 16});
    mem.momentum_update(q, static_cast<int>(rng() % 8));
  }
  auto norms = mem.centers().norm(2, 2);
  EXPECT_LT((norms - 1.0).abs().max().item<double>(), 1e-12);
}

TEST(MomentumUpdate, BatchFormAppliesRowsInOrder) {
  torch::manual_seed(10);
  auto centers = torch::randn({kNumScales, 3, 4}, torch::kDouble);
  auto a = StyleMemory::from_centers(centers);
  auto b = StyleMemory::from_centers(centers);
  StyleCode q;
  for (int i = 0; i < kNumScales; ++i) {
    auto z = torch::randn({3, 4}, torch::kDouble);
    q.z[i] = z / z.norm(2, 1, true);
  }
  const int styles[] = {1, 1, 2};
  a.momentum_update(q, styles);
  for (int n = 0; n < 3; ++n) b.momentum_update(q.row(n), styles[n]);
  EXPECT_TRUE(torch::equal(a.centers(), b.centers()));
  EXPECT_THROW(a.momentum_update(q.row(0), 3), IndexError);
}
