#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <set>
#include <vector>

#include <json.hpp>

#include "glyphgen/png_io.hpp"

namespace glyphgen {

/// One rendered glyph with its (character, font) labels.
struct Glyph {
  GrayImage image;
  int content_id = 0;
  int style_id = 0;
};

/// Parametric font transform applied uniformly to every character of a style.
struct StyleParams {
  int style_id = 0;
  double stroke_radius = 0.045;  // half stroke width, fraction of the image side
  double slant = 0.0;            // horizontal shear per unit height
  bool rounded = true;           // disk (rounded) vs square (sharp) structuring element
  double contrast = 1.0;         // ink darkness; pixel = 1 - contrast * coverage
};

/// Line segment on the unit square, y pointing down.
struct Stroke {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

struct CharShape {
  int content_id = 0;
  std::vector<Stroke> strokes;
};

struct CorpusManifest {
  int num_styles = 0;
  int num_chars = 0;
  int image_size = 64;
  std::uint64_t seed = 0;
  int reference_style = 0;
  std::vector<StyleParams> styles;  // empty for user-supplied corpora
  std::vector<CharShape> chars;

  nlohmann::json to_json() const;
  static CorpusManifest from_json(const nlohmann::json& j);
};

/// Immutable in-memory glyph index, one glyph per (style, char) pair.
class Corpus {
 public:
  Corpus(CorpusManifest manifest, std::vector<Glyph> glyphs);

  const CorpusManifest& manifest() const { return manifest_; }
  int num_styles() const { return manifest_.num_styles; }
  int num_chars() const { return manifest_.num_chars; }
  int image_size() const { return manifest_.image_size; }
  int reference_style() const { return manifest_.reference_style; }

  const Glyph& at(int style_id, int content_id) const;
  const std::vector<Glyph>& glyphs() const { return glyphs_; }
  std::size_t size() const { return glyphs_.size(); }

 private:
  CorpusManifest manifest_;
  std::vector<Glyph> glyphs_;  // style-major
};

using CorpusPtr = std::shared_ptr<const Corpus>;

/// Deterministic manifest (stroke layouts and style transforms) for a seed.
CorpusManifest make_manifest(int num_styles, int num_chars, int image_size, std::uint64_t seed);

/// Rasterizes one character in one style at the manifest's resolution.
GrayImage render_glyph(const CharShape& shape, const StyleParams& style, int image_size);

/// Renders the whole corpus in memory without touching the filesystem.
Corpus synth_corpus_in_memory(int num_styles, int num_chars, int image_size, std::uint64_t seed);

/// Renders and writes `manifest.json` + `glyphs/<style>/<char>.png` under `out`.
CorpusManifest synth_corpus(int num_styles, int num_chars, int image_size, std::uint64_t seed,
                            const std::filesystem::path& out);

/// Loads and validates a corpus directory. Missing glyphs raise IntegrityError.
Corpus load_corpus(const std::filesystem::path& dir);

std::filesystem::path glyph_path(const std::filesystem::path& corpus_dir, int style_id,
                                 int content_id);

struct SplitSpec {
  std::set<int> held_out_chars;
  std::set<int> held_out_styles;
};

struct GlyphKey {
  int style_id = 0;
  int content_id = 0;
  friend auto operator<=>(const GlyphKey&, const GlyphKey&) = default;
};

/// A subset of a corpus, addressed by (style, char) keys.
struct GlyphSet {
  CorpusPtr corpus;
  std::vector<GlyphKey> keys;

  std::size_t size() const { return keys.size(); }
  const Glyph& glyph(std::size_t i) const {
    return corpus->at(keys[i].style_id, keys[i].content_id);
  }
  std::vector<int> style_ids() const;  // sorted, unique
  std::vector<int> char_ids() const;   // sorted, unique
};

struct Split {
  SplitSpec spec;
  GlyphSet train;
  GlyphSet ucsf;  // held-out chars x seen styles
  GlyphSet ufsc;  // seen chars x held-out styles
};

/// Partitions the corpus. Held-out sets must be nonempty, strictly smaller
/// than their axis, and may not hold out the reference style.
Split split(const CorpusPtr& corpus, const SplitSpec& spec);

/// The whole corpus as a training set (no held-out labels).
GlyphSet full_set(const CorpusPtr& corpus);

struct TrainingSample {
  const Glyph* content_image = nullptr;  // reference style, same char as ground truth
  std::vector<const Glyph*> style_images;
  const Glyph* ground_truth = nullptr;
  int y_c = 0;
  int y_s = 0;
};

inline constexpr int kDefaultStyleRefs = 6;

/// Draws `batch_size` targets uniformly from `train`, each with `k` style
/// references drawn without replacement from the target's style (excluding
/// the target glyph itself).
std::vector<TrainingSample> sample_batch(const GlyphSet& train, int batch_size, int k,
                                         std::mt19937_64& rng);

/// Style references for an arbitrary (char, style) target, drawn from the
/// chars in `pool_chars` other than the target char.
std::vector<const Glyph*> pick_style_refs(const Corpus& corpus, int style_id, int target_char,
                                          const std::vector<int>& pool_chars, int k,
                                          std::mt19937_64& rng);

}  // namespace glyphgen
