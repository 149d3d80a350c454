#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "glyphgen/corpus.hpp"
#include "glyphgen/error.hpp"
#include "test_support.hpp"

using namespace glyphgen;
using glyphgen::testing::TempDir;
namespace fs = std::filesystem;

namespace {

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int count_pngs(const fs::path& dir) {
  int n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.path().extension() == ".png") ++n;
  return n;
}

}  // namespace

TEST(Corpus, SynthWritesEightyGlyphsAndIsBitwiseDeterministic) {
  TempDir a("corpus_a"), b("corpus_b");
  synth_corpus(8, 10, 64, 1, a.path());
  synth_corpus(8, 10, 64, 1, b.path());
  EXPECT_EQ(count_pngs(a.path()), 80);
  EXPECT_TRUE(fs::exists(a.path() / "manifest.json"));
  EXPECT_EQ(file_bytes(a.path() / "manifest.json"), file_bytes(b.path() / "manifest.json"));
  for (int s = 0; s < 8; ++s)
    for (int c = 0; c < 10; ++c)
      ASSERT_EQ(file_bytes(glyph_path(a.path(), s, c)), file_bytes(glyph_path(b.path(), s, c)));
}

TEST(Corpus, SameSeedGivesIdenticalManifests) {
  EXPECT_EQ(make_manifest(8, 10, 64, 5).to_json(), make_manifest(8, 10, 64, 5).to_json());
}

TEST(Corpus, DifferentSeedsDifferInAtLeastOnePixel) {
  const auto a = synth_corpus_in_memory(8, 10, 64, 1);
  const auto b = synth_corpus_in_memory(8, 10, 64, 2);
  bool differs = false;
  for (std::size_t i = 0; i < a.size() && !differs; ++i)
    differs = a.glyphs()[i].image.pixels != b.glyphs()[i].image.pixels;
  EXPECT_TRUE(differs);
}

TEST(Corpus, LoadRoundTripPreservesCountRangeAndPixels) {
  TempDir dir("corpus_load");
  synth_corpus(8, 10, 32, 3, dir.path());
  const Corpus loaded = load_corpus(dir.path());
  const Corpus memory = synth_corpus_in_memory(8, 10, 32, 3);
  ASSERT_EQ(loaded.size(), 80u);
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    const auto& g = loaded.glyphs()[i];
    for (float v : g.image.pixels) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
    EXPECT_EQ(g.image, memory.glyphs()[i].image) << "glyph " << i;
  }
}

TEST(Corpus, MissingPngRaisesIntegrityErrorNamingThePair) {
  TempDir dir("corpus_missing");
  synth_corpus(3, 4, 32, 1, dir.path());
  fs::remove(glyph_path(dir.path(), 2, 3));
  try {
    load_corpus(dir.path());
    FAIL() << "expected IntegrityError";
  } catch (const IntegrityError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("style 2"), std::string::npos) << msg;
    EXPECT_NE(msg.find("char 3"), std::string::npos) << msg;
  }
}

TEST(Corpus, InvalidSizesAreConfigErrors) {
  EXPECT_THROW(synth_corpus_in_memory(1, 10, 64, 1), ConfigError);
  EXPECT_THROW(synth_corpus_in_memory(8, 1, 64, 1), ConfigError);
  EXPECT_THROW(synth_corpus_in_memory(8, 10, 48, 1), ConfigError);
}

TEST(Corpus, UnwritablePathIsIoError) {
  TempDir dir("corpus_io");
  const auto blocker = dir.path() / "file";
  std::ofstream(blocker) << "x";
  EXPECT_THROW(synth_corpus(2, 2, 32, 1, blocker / "sub"), IoError);
}

TEST(Corpus, StylesAreUniformTransformsWithDistinctParameters) {
  const auto m = make_manifest(8, 10, 64, 1);
  ASSERT_EQ(m.styles.size(), 8u);
  for (std::size_t i = 0; i < m.styles.size(); ++i)
    for (std::size_t j = i + 1; j < m.styles.size(); ++j) {
      const auto& a = m.styles[i];
      const auto& b = m.styles[j];
      const int hamming = (a.stroke_radius != b.stroke_radius) + (a.slant != b.slant) +
                          (a.rounded != b.rounded) + (a.contrast != b.contrast);
      EXPECT_GE(hamming, 2) << i << " vs " << j;
    }
  for (const auto& c : m.chars) {
    EXPECT_GE(c.strokes.size(), 3u);
    EXPECT_LE(c.strokes.size(), 6u);
  }
}

TEST(Split, CountsMatchEnumeration) {
  auto corpus = glyphgen::testing::make_corpus(8, 10, 32);
  SplitSpec spec{{3, 7}, {2, 5}};
  const Split sp = split(corpus, spec);
  EXPECT_EQ(sp.train.size(), 48u);
  EXPECT_EQ(sp.ucsf.size(), 12u);
  EXPECT_EQ(sp.ufsc.size(), 16u);
}

TEST(Split, SetsAreDisjointAndCoverExactlyTheAllowedGlyphs) {
  auto corpus = glyphgen::testing::make_corpus(8, 10, 32);
  SplitSpec spec{{0, 9}, {1, 6}};
  const Split sp = split(corpus, spec);
  std::set<GlyphKey> train(sp.train.keys.begin(), sp.train.keys.end());
  std::set<GlyphKey> ucsf(sp.ucsf.keys.begin(), sp.ucsf.keys.end());
  std::set<GlyphKey> ufsc(sp.ufsc.keys.begin(), sp.ufsc.keys.end());
  for (int s = 0; s < 8; ++s)
    for (int c = 0; c < 10; ++c) {
      const GlyphKey k{s, c};
      const bool hc = spec.held_out_chars.count(c), hs = spec.held_out_styles.count(s);
      EXPECT_EQ(train.count(k), static_cast<std::size_t>(!hc && !hs));
      EXPECT_EQ(ucsf.count(k), static_cast<std::size_t>(hc && !hs));
      EXPECT_EQ(ufsc.count(k), static_cast<std::size_t>(!hc && hs));
    }
  // doubly held-out glyph is in none of the three sets
  EXPECT_EQ(train.count({1, 0}) + ucsf.count({1, 0}) + ufsc.count({1, 0}), 0u);
}

TEST(Split, InvalidSpecsAreConfigErrors) {
  auto corpus = glyphgen::testing::make_corpus(4, 5, 32);
  EXPECT_THROW(split(corpus, {}), ConfigError);
  EXPECT_THROW(split(corpus, {{1}, {}}), ConfigError);
  EXPECT_THROW(split(corpus, {{0, 1, 2, 3, 4}, {1}}), ConfigError);
  EXPECT_THROW(split(corpus, {{1}, {0}}), ConfigError);        // reference style
  EXPECT_THROW(split(corpus, {{9}, {1}}), ConfigError);
}

TEST(SampleBatch, SamplesAreStylePureAndExcludeTheTarget) {
  auto corpus = glyphgen::testing::make_corpus(8, 10, 32);
  const auto train = full_set(corpus);
  std::mt19937_64 rng(11);
  for (int round = 0; round < 20; ++round) {
    for (const auto& s : sample_batch(train, 16, kDefaultStyleRefs, rng)) {
      ASSERT_EQ(s.style_images.size(), 6u);
      std::set<int> chars;
      for (const auto* g : s.style_images) {
        EXPECT_EQ(g->style_id, s.y_s);
        EXPECT_NE(g->content_id, s.y_c);
        chars.insert(g->content_id);
      }
      EXPECT_EQ(chars.size(), 6u) << "references drawn without replacement";
      EXPECT_EQ(s.ground_truth->style_id, s.y_s);
      EXPECT_EQ(s.ground_truth->content_id, s.y_c);
      EXPECT_EQ(s.content_image->style_id, corpus->reference_style());
      EXPECT_EQ(s.content_image->content_id, s.y_c);
    }
  }
}

TEST(SampleBatch, KEqualToCharsMinusOneTakesEveryOtherGlyph) {
  auto corpus = glyphgen::testing::make_corpus(3, 5, 32);
  std::mt19937_64 rng(2);
  for (const auto& s : sample_batch(full_set(corpus), 8, 4, rng)) {
    std::set<int> chars;
    for (const auto* g : s.style_images) chars.insert(g->content_id);
    std::set<int> expected;
    for (int c = 0; c < 5; ++c)
      if (c != s.y_c) expected.insert(c);
    EXPECT_EQ(chars, expected);
  }
}

TEST(SampleBatch, IdenticalSeedsGiveIdenticalBatches) {
  auto corpus = glyphgen::testing::make_corpus(8, 10, 32);
  const auto train = full_set(corpus);
  std::mt19937_64 a(99), b(99);
  const auto x = sample_batch(train, 16, 6, a);
  const auto y = sample_batch(train, 16, 6, b);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x[i].ground_truth, y[i].ground_truth);
    EXPECT_EQ(x[i].style_images, y[i].style_images);
  }
}

TEST(SampleBatch, OversizedKAndBadBatchAreConfigErrors) {
  auto corpus = glyphgen::testing::make_corpus(3, 5, 32);
  std::mt19937_64 rng(1);
  EXPECT_THROW(sample_batch(full_set(corpus), 4, 5, rng), ConfigError);
  EXPECT_THROW(sample_batch(full_set(corpus), 0, 2, rng), ConfigError);
}

TEST(Corpus, OutOfRangeLookupIsIndexError) {
  auto corpus = glyphgen::testing::make_corpus(2, 3, 32);
  EXPECT_THROW(corpus->at(2, 0), IndexError);
  EXPECT_THROW(corpus->at(0, -1), IndexError);
}
