#include "glyphgen/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "glyphgen/error.hpp"
#include "glyphgen/random.hpp"

namespace glyphgen {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kLattice = 5;
constexpr double kLatticeOrigin = 0.2;
constexpr double kLatticeStep = 0.15;
constexpr int kSupersample = 4;

constexpr std::array<double, 3> kRadii = {0.028, 0.045, 0.065};
constexpr std::array<double, 3> kSlants = {-0.22, 0.0, 0.22};
constexpr std::array<bool, 2> kRounding = {false, true};
constexpr std::array<double, 3> kContrasts = {0.55, 0.78, 1.0};

struct StyleCombo {
  int radius, slant, rounded, contrast;
};

int hamming(const StyleCombo& a, const StyleCombo& b) {
  return (a.radius != b.radius) + (a.slant != b.slant) + (a.rounded != b.rounded) +
         (a.contrast != b.contrast);
}

template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

std::vector<StyleParams> make_styles(int num_styles, std::mt19937_64& rng) {
  std::vector<StyleCombo> combos;
  for (int r = 0; r < 3; ++r)
    for (int s = 0; s < 3; ++s)
      for (int o = 0; o < 2; ++o)
        for (int c = 0; c < 3; ++c) combos.push_back({r, s, o, c});
  shuffle(combos, rng);

  // Prefer styles that differ from every earlier style in at least two
  // attributes; fall back to one, then to jittered repeats.
  std::vector<StyleCombo> picked;
  std::vector<bool> used(combos.size(), false);
  for (int min_dist = 2; min_dist >= 1 && static_cast<int>(picked.size()) < num_styles;
       --min_dist) {
    for (std::size_t i = 0; i < combos.size() && static_cast<int>(picked.size()) < num_styles;
         ++i) {
      if (used[i]) continue;
      bool ok = std::all_of(picked.begin(), picked.end(),
                            [&](const StyleCombo& p) { return hamming(p, combos[i]) >= min_dist; });
      if (ok) {
        picked.push_back(combos[i]);
        used[i] = true;
      }
    }
  }

  std::vector<StyleParams> styles;
  for (int s = 0; s < num_styles; ++s) {
    const bool repeat = s >= static_cast<int>(picked.size());
    const StyleCombo& c = picked[static_cast<std::size_t>(s) % picked.size()];
    StyleParams p;
    p.style_id = s;
    p.stroke_radius = kRadii[c.radius];
    p.slant = kSlants[c.slant];
    p.rounded = kRounding[c.rounded];
    p.contrast = kContrasts[c.contrast];
    if (repeat) {
      p.stroke_radius *= 0.85 + 0.3 * uniform_unit(rng);
      p.slant += 0.1 * (uniform_unit(rng) - 0.5);
    }
    styles.push_back(p);
  }
  return styles;
}

std::vector<Stroke> candidate_strokes() {
  std::vector<Stroke> out;
  auto coord = [](int i) { return kLatticeOrigin + kLatticeStep * i; };
  for (int y0 = 0; y0 < kLattice; ++y0)
    for (int x0 = 0; x0 < kLattice; ++x0)
      for (int y1 = 0; y1 < kLattice; ++y1)
        for (int x1 = 0; x1 < kLattice; ++x1) {
          const int dx = x1 - x0, dy = y1 - y0;
          if (std::make_pair(y1, x1) <= std::make_pair(y0, x0)) continue;
          const bool axis = dx == 0 || dy == 0;
          const bool diag = std::abs(dx) == std::abs(dy);
          const int len = std::max(std::abs(dx), std::abs(dy));
          if (!(axis || diag) || len < 1 || len > 4) continue;
          // Short diagonals read as noise at 32 px.
          if (diag && len < 2) continue;
          out.push_back({coord(x0), coord(y0), coord(x1), coord(y1)});
        }
  return out;
}

std::vector<CharShape> make_chars(int num_chars, std::mt19937_64& rng) {
  const auto pool = candidate_strokes();
  std::vector<CharShape> chars;
  std::set<std::vector<std::size_t>> seen;
  while (static_cast<int>(chars.size()) < num_chars) {
    const int n = 3 + static_cast<int>(uniform_index(rng, 4));
    std::vector<std::size_t> picks;
    while (static_cast<int>(picks.size()) < n) {
      const std::size_t i = uniform_index(rng, pool.size());
      if (std::find(picks.begin(), picks.end(), i) == picks.end()) picks.push_back(i);
    }
    std::vector<std::size_t> key = picks;
    std::sort(key.begin(), key.end());
    if (!seen.insert(key).second) continue;
    CharShape shape;
    shape.content_id = static_cast<int>(chars.size());
    for (auto i : picks) shape.strokes.push_back(pool[i]);
    chars.push_back(std::move(shape));
  }
  return chars;
}

double l2_to_segment(double px, double py, const Stroke& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - s.x0 - t * dx, py - s.y0 - t * dy);
}

// max(|a(t)|,|b(t)|) is convex piecewise linear in t, so its minimum over
// [0,1] sits at an endpoint or a breakpoint.
double linf_to_segment(double px, double py, const Stroke& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double ax = px - s.x0, ay = py - s.y0;
  std::array<double, 6> ts{0.0, 1.0, 0.0, 0.0, 0.0, 0.0};
  int n = 2;
  if (dx != 0) ts[n++] = ax / dx;
  if (dy != 0) ts[n++] = ay / dy;
  if (dx != dy) ts[n++] = (ax - ay) / (dx - dy);
  if (dx != -dy) ts[n++] = (ax + ay) / (dx + dy);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double t = std::clamp(ts[i], 0.0, 1.0);
    best = std::min(best, std::max(std::abs(ax - t * dx), std::abs(ay - t * dy)));
  }
  return best;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot read " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IntegrityError("malformed JSON in " + p.string() + ": " + e.what());
  }
}

void validate_sizes(int num_styles, int num_chars, int image_size) {
  if (num_styles < 2) throw ConfigError("num_styles must be >= 2");
  if (num_chars < 2) throw ConfigError("num_chars must be >= 2");
  if (image_size != 32 && image_size != 64) throw ConfigError("image_size must be 32 or 64");
}

}  // namespace

json CorpusManifest::to_json() const {
  json styles_j = json::array();
  for (const auto& s : styles)
    styles_j.push_back({{"style_id", s.style_id},
                        {"stroke_radius", s.stroke_radius},
                        {"slant", s.slant},
                        {"rounded", s.rounded},
                        {"contrast", s.contrast}});
  json chars_j = json::array();
  for (const auto& c : chars) {
    json strokes = json::array();
    for (const auto& s : c.strokes) strokes.push_back({s.x0, s.y0, s.x1, s.y1});
    chars_j.push_back({{"content_id", c.content_id}, {"strokes", strokes}});
  }
  return {{"format", "glyph-corpus/1"},
          {"num_styles", num_styles},
          {"num_chars", num_chars},
          {"image_size", image_size},
          {"seed", seed},
          {"reference_style", reference_style},
          {"styles", styles_j},
          {"chars", chars_j}};
}

CorpusManifest CorpusManifest::from_json(const json& j) {
  CorpusManifest m;
  try {
    m.num_styles = j.at("num_styles").get<int>();
    m.num_chars = j.at("num_chars").get<int>();
    m.image_size = j.at("image_size").get<int>();
    m.seed = j.value("seed", std::uint64_t{0});
    m.reference_style = j.value("reference_style", 0);
    for (const auto& s : j.value("styles", json::array())) {
      StyleParams p;
      p.style_id = s.at("style_id").get<int>();
      p.stroke_radius = s.at("stroke_radius").get<double>();
      p.slant = s.at("slant").get<double>();
      p.rounded = s.at("rounded").get<bool>();
      p.contrast = s.at("contrast").get<double>();
      m.styles.push_back(p);
    }
    for (const auto& c : j.value("chars", json::array())) {
      CharShape shape;
      shape.content_id = c.at("content_id").get<int>();
      for (const auto& s : c.at("strokes"))
        shape.strokes.push_back(
            {s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>(),
             s.at(3).get<double>()});
      m.chars.push_back(std::move(shape));
    }
  } catch (const json::exception& e) {
    throw IntegrityError(std::string("malformed corpus manifest: ") + e.what());
  }
  if (m.num_styles < 2 || m.num_chars < 2 || m.image_size < 8)
    throw IntegrityError("corpus manifest has invalid sizes");
  if (m.reference_style < 0 || m.reference_style >= m.num_styles)
    throw IntegrityError("reference_style out of range");
  return m;
}

Corpus::Corpus(CorpusManifest manifest, std::vector<Glyph> glyphs)
    : manifest_(std::move(manifest)), glyphs_(std::move(glyphs)) {
  const auto expected = static_cast<std::size_t>(manifest_.num_styles) * manifest_.num_chars;
  if (glyphs_.size() != expected) throw IntegrityError("glyph count does not match manifest");
  for (std::size_t i = 0; i < glyphs_.size(); ++i) {
    const auto& g = glyphs_[i];
    const int s = static_cast<int>(i) / manifest_.num_chars;
    const int c = static_cast<int>(i) % manifest_.num_chars;
    if (g.style_id != s || g.content_id != c)
      throw IntegrityError("glyphs are not in style-major order");
    if (g.image.height != manifest_.image_size || g.image.width != manifest_.image_size)
      throw IntegrityError("glyph (style " + std::to_string(s) + ", char " + std::to_string(c) +
                           ") has wrong size");
    for (float v : g.image.pixels)
      if (!(v >= 0.0f && v <= 1.0f))
        throw IntegrityError("glyph pixel outside [0,1]");
  }
}

const Glyph& Corpus::at(int style_id, int content_id) const {
  if (style_id < 0 || style_id >= num_styles() || content_id < 0 || content_id >= num_chars())
    throw IndexError("glyph (style " + std::to_string(style_id) + ", char " +
                     std::to_string(content_id) + ") out of range");
  return glyphs_[static_cast<std::size_t>(style_id) * num_chars() + content_id];
}

CorpusManifest make_manifest(int num_styles, int num_chars, int image_size, std::uint64_t seed) {
  validate_sizes(num_styles, num_chars, image_size);
  std::mt19937_64 rng(seed);
  CorpusManifest m;
  m.num_styles = num_styles;
  m.num_chars = num_chars;
  m.image_size = image_size;
  m.seed = seed;
  m.reference_style = 0;
  m.chars = make_chars(num_chars, rng);
  m.styles = make_styles(num_styles, rng);
  return m;
}

GrayImage render_glyph(const CharShape& shape, const StyleParams& style, int image_size) {
  std::vector<Stroke> strokes;
  for (auto s : shape.strokes) {
    s.x0 += style.slant * (0.5 - s.y0);
    s.x1 += style.slant * (0.5 - s.y1);
    strokes.push_back(s);
  }
  GrayImage img(image_size, image_size, 1.0f);
  const double inv = 1.0 / (image_size * kSupersample);
  for (int y = 0; y < image_size; ++y) {
    for (int x = 0; x < image_size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double px = ((x * kSupersample + sx) + 0.5) * inv;
          const double py = ((y * kSupersample + sy) + 0.5) * inv;
          for (const auto& s : strokes) {
            const double d = style.rounded ? l2_to_segment(px, py, s) : linf_to_segment(px, py, s);
            if (d <= style.stroke_radius) {
              ++hits;
              break;
            }
          }
        }
      }
      const double coverage = static_cast<double>(hits) / (kSupersample * kSupersample);
      // Round through 8 bits so in-memory and on-disk corpora agree exactly.
      img.at(y, x) = quantize(static_cast<float>(1.0 - style.contrast * coverage)) / 255.0f;
    }
  }
  return img;
}

Corpus synth_corpus_in_memory(int num_styles, int num_chars, int image_size, std::uint64_t seed) {
  auto m = make_manifest(num_styles, num_chars, image_size, seed);
  std::vector<Glyph> glyphs;
  glyphs.reserve(static_cast<std::size_t>(num_styles) * num_chars);
  for (int s = 0; s < num_styles; ++s)
    for (int c = 0; c < num_chars; ++c)
      glyphs.push_back({render_glyph(m.chars[c], m.styles[s], image_size), c, s});
  return Corpus(std::move(m), std::move(glyphs));
}

fs::path glyph_path(const fs::path& corpus_dir, int style_id, int content_id) {
  return corpus_dir / "glyphs" / std::to_string(style_id) / (std::to_string(content_id) + ".png");
}

CorpusManifest synth_corpus(int num_styles, int num_chars, int image_size, std::uint64_t seed,
                            const fs::path& out) {
  const Corpus corpus = synth_corpus_in_memory(num_styles, num_chars, image_size, seed);
  std::error_code ec;
  for (int s = 0; s < num_styles; ++s) {
    fs::create_directories(out / "glyphs" / std::to_string(s), ec);
    if (ec) throw IoError("cannot create " + (out / "glyphs").string() + ": " + ec.message());
  }
  for (const auto& g : corpus.glyphs()) write_png(glyph_path(out, g.style_id, g.content_id), g.image);
  std::ofstream mf(out / "manifest.json");
  if (!mf) throw IoError("cannot write " + (out / "manifest.json").string());
  mf << corpus.manifest().to_json().dump(2) << '\n';
  if (!mf) throw IoError("failed writing manifest");
  return corpus.manifest();
}

Corpus load_corpus(const fs::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw IoError("no manifest.json in " + dir.string());
  auto m = CorpusManifest::from_json(read_json(manifest_path));
  std::vector<Glyph> glyphs;
  glyphs.reserve(static_cast<std::size_t>(m.num_styles) * m.num_chars);
  for (int s = 0; s < m.num_styles; ++s) {
    for (int c = 0; c < m.num_chars; ++c) {
      const auto p = glyph_path(dir, s, c);
      if (!fs::exists(p))
        throw IntegrityError("missing glyph for (style " + std::to_string(s) + ", char " +
                             std::to_string(c) + "): " + p.string());
      glyphs.push_back({read_png(p), c, s});
    }
  }
  return Corpus(std::move(m), std::move(glyphs));
}

std::vector<int> GlyphSet::style_ids() const {
  std::set<int> s;
  for (const auto& k : keys) s.insert(k.style_id);
  return {s.begin(), s.end()};
}

std::vector<int> GlyphSet::char_ids() const {
  std::set<int> s;
  for (const auto& k : keys) s.insert(k.content_id);
  return {s.begin(), s.end()};
}

Split split(const CorpusPtr& corpus, const SplitSpec& spec) {
  const int S = corpus->num_styles(), C = corpus->num_chars();
  if (spec.held_out_chars.empty() || spec.held_out_styles.empty())
    throw ConfigError("split needs at least one held-out char and one held-out style");
  if (static_cast<int>(spec.held_out_chars.size()) >= C ||
      static_cast<int>(spec.held_out_styles.size()) >= S)
    throw ConfigError("split holds out an entire axis");
  for (int c : spec.held_out_chars)
    if (c < 0 || c >= C) throw ConfigError("held-out char " + std::to_string(c) + " out of range");
  for (int s : spec.held_out_styles)
    if (s < 0 || s >= S) throw ConfigError("held-out style " + std::to_string(s) + " out of range");
  if (spec.held_out_styles.count(corpus->reference_style()))
    throw ConfigError("the reference (content) style cannot be held out");

  Split out;
  out.spec = spec;
  out.train.corpus = out.ucsf.corpus = out.ufsc.corpus = corpus;
  for (int s = 0; s < S; ++s) {
    const bool style_out = spec.held_out_styles.count(s) > 0;
    for (int c = 0; c < C; ++c) {
      const bool char_out = spec.held_out_chars.count(c) > 0;
      if (!style_out && !char_out) out.train.keys.push_back({s, c});
      else if (char_out && !style_out) out.ucsf.keys.push_back({s, c});
      else if (style_out && !char_out) out.ufsc.keys.push_back({s, c});
    }
  }
  return out;
}

GlyphSet full_set(const CorpusPtr& corpus) {
  GlyphSet set;
  set.corpus = corpus;
  for (int s = 0; s < corpus->num_styles(); ++s)
    for (int c = 0; c < corpus->num_chars(); ++c) set.keys.push_back({s, c});
  return set;
}

std::vector<const Glyph*> pick_style_refs(const Corpus& corpus, int style_id, int target_char,
                                          const std::vector<int>& pool_chars, int k,
                                          std::mt19937_64& rng) {
  std::vector<int> pool;
  for (int c : pool_chars)
    if (c != target_char) pool.push_back(c);
  if (k < 1 || k > static_cast<int>(pool.size()))
    throw ConfigError("k=" + std::to_string(k) + " style references requested but only " +
                      std::to_string(pool.size()) + " candidate glyphs exist");
  // Partial Fisher-Yates: the first k entries are a uniform draw without replacement.
  for (int i = 0; i < k; ++i)
    std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  std::vector<const Glyph*> refs;
  for (int i = 0; i < k; ++i) refs.push_back(&corpus.at(style_id, pool[i]));
  return refs;
}

std::vector<TrainingSample> sample_batch(const GlyphSet& train, int batch_size, int k,
                                         std::mt19937_64& rng) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (train.keys.empty()) throw ConfigError("empty training set");
  const auto chars = train.char_ids();
  if (k < 1 || k > static_cast<int>(chars.size()) - 1)
    throw ConfigError("k=" + std::to_string(k) + " exceeds num_chars - 1 = " +
                      std::to_string(chars.size() - 1));
  const Corpus& corpus = *train.corpus;
  std::vector<TrainingSample> batch;
  batch.reserve(batch_size);
  for (int b = 0; b < batch_size; ++b) {
    const GlyphKey key = train.keys[uniform_index(rng, train.keys.size())];
    TrainingSample s;
    s.ground_truth = &corpus.at(key.style_id, key.content_id);
    s.content_image = &corpus.at(corpus.reference_style(), key.content_id);
    s.style_images = pick_style_refs(corpus, key.style_id, key.content_id, chars, k, rng);
    s.y_c = key.content_id;
    s.y_s = key.style_id;
    batch.push_back(std::move(s));
  }
  return batch;
}

}  // namespace glyphgen
