#include "glyphgen/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "glyphgen/error.hpp"

namespace glyphgen {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 8> kMagic{'G', 'L', 'Y', 'P', 'H', 'C', 'K', '\0'};
constexpr std::size_t kHeaderSize = 8 + 4 + 8 + 8 + 4;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t offset) {
  T v;
  std::memcpy(&v, in.data() + offset, sizeof(T));
  return v;
}

std::uint32_t crc_of(const std::string& a, const std::string& b) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(a.data()), static_cast<uInt>(a.size()));
  crc = crc32(crc, reinterpret_cast<const Bytef*>(b.data()), static_cast<uInt>(b.size()));
  return static_cast<std::uint32_t>(crc);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

torch::Tensor pack_images(const std::vector<GrayImage>& images, int size) {
  auto t = torch::empty({static_cast<int64_t>(images.size()), size, size}, torch::kFloat);
  for (std::size_t i = 0; i < images.size(); ++i)
    std::memcpy(t[static_cast<int64_t>(i)].data_ptr<float>(), images[i].pixels.data(),
                sizeof(float) * images[i].pixels.size());
  return t;
}

std::vector<GrayImage> unpack_images(const torch::Tensor& t) {
  auto c = t.contiguous();
  const int n = static_cast<int>(c.size(0)), h = static_cast<int>(c.size(1)),
            w = static_cast<int>(c.size(2));
  std::vector<GrayImage> out;
  for (int i = 0; i < n; ++i) {
    GrayImage img(h, w);
    std::memcpy(img.pixels.data(), c[i].data_ptr<float>(), sizeof(float) * img.pixels.size());
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace

void save_checkpoint(const TrainingState& state, const fs::path& path) {
  std::ostringstream rng_text;
  rng_text << state.rng;
  json meta = {{"config", state.config.to_json()},
               {"image_size", state.image_size},
               {"reference_style", state.reference_style},
               {"chars", state.chars.ids()},
               {"styles", state.styles.ids()},
               {"epoch", state.epoch},
               {"iteration", state.iteration},
               {"rng", rng_text.str()},
               {"has_memory", state.memory.has_value()}};
  if (state.memory) {
    meta["memory_momentum"] = state.memory->momentum();
    meta["memory_tau"] = state.memory->tau();
  }

  torch::serialize::OutputArchive archive;
  auto add_module = [&archive](const char* key, const torch::nn::Module& m) {
    torch::serialize::OutputArchive sub;
    m.save(sub);
    archive.write(key, sub);
  };
  auto add_optimizer = [&archive](const char* key, const torch::optim::Optimizer& o) {
    torch::serialize::OutputArchive sub;
    o.save(sub);
    archive.write(key, sub);
  };
  add_module("generator", *state.generator);
  add_module("discriminator", *state.discriminator);
  add_module("msp", *state.msp);
  add_optimizer("opt_g", *state.opt_g);
  add_optimizer("opt_d", *state.opt_d);
  add_optimizer("opt_msp", *state.opt_msp);
  if (state.memory) archive.write("memory", state.memory->centers());
  archive.write("reference_glyphs", pack_images(state.reference_glyphs, state.image_size));
  std::ostringstream blob_stream;
  archive.save_to(blob_stream);

  const std::string meta_text = meta.dump();
  const std::string blob = blob_stream.str();
  std::string bytes(kMagic.begin(), kMagic.end());
  put<std::uint32_t>(bytes, kCheckpointVersion);
  put<std::uint64_t>(bytes, meta_text.size());
  put<std::uint64_t>(bytes, blob.size());
  put<std::uint32_t>(bytes, crc_of(meta_text, blob));
  bytes += meta_text;
  bytes += blob;

  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write on " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

TrainingState load_checkpoint(const fs::path& path) {
  const std::string bytes = read_file(path);
  const std::string where = " (" + path.string() + ")";
  if (bytes.size() < kHeaderSize || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0)
    throw IntegrityError("not a glyphgen checkpoint" + where);
  const auto version = get<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion)
    throw IncompatibleError("checkpoint format version " + std::to_string(version) +
                            " is not supported (expected " + std::to_string(kCheckpointVersion) +
                            ")" + where);
  const auto meta_len = get<std::uint64_t>(bytes, 12);
  const auto blob_len = get<std::uint64_t>(bytes, 20);
  const auto crc = get<std::uint32_t>(bytes, 28);
  if (meta_len > bytes.size() || blob_len > bytes.size() ||
      kHeaderSize + meta_len + blob_len != bytes.size())
    throw IntegrityError("checkpoint is truncated or has trailing data" + where);
  const std::string meta_text = bytes.substr(kHeaderSize, meta_len);
  const std::string blob = bytes.substr(kHeaderSize + meta_len, blob_len);
  if (crc_of(meta_text, blob) != crc) throw IntegrityError("checkpoint checksum mismatch" + where);

  // Everything is staged in a local state; nothing escapes unless all of it loads.
  TrainingState state;
  try {
    const json meta = json::parse(meta_text);
    state.config = TrainConfig::from_json(meta.at("config"));
    state.image_size = meta.at("image_size").get<int>();
    state.reference_style = meta.at("reference_style").get<int>();
    state.chars = LabelMap(meta.at("chars").get<std::vector<int>>());
    state.styles = LabelMap(meta.at("styles").get<std::vector<int>>());
    state.epoch = meta.at("epoch").get<int>();
    state.iteration = meta.at("iteration").get<std::int64_t>();
    std::istringstream rng_text(meta.at("rng").get<std::string>());
    rng_text >> state.rng;
    state.build_networks();

    torch::serialize::InputArchive archive;
    std::istringstream blob_stream(blob);
    archive.load_from(blob_stream);
    auto read_module = [&archive](const char* key, torch::nn::Module& m) {
      torch::serialize::InputArchive sub;
      archive.read(key, sub);
      m.load(sub);
    };
    auto read_optimizer = [&archive](const char* key, torch::optim::Optimizer& o) {
      torch::serialize::InputArchive sub;
      archive.read(key, sub);
      o.load(sub);
    };
    read_module("generator", *state.generator);
    read_module("discriminator", *state.discriminator);
    read_module("msp", *state.msp);
    read_optimizer("opt_g", *state.opt_g);
    read_optimizer("opt_d", *state.opt_d);
    read_optimizer("opt_msp", *state.opt_msp);
    if (meta.at("has_memory").get<bool>()) {
      torch::Tensor centers;
      archive.read("memory", centers);
      state.memory = StyleMemory::restore(centers, meta.at("memory_momentum").get<double>(),
                                               meta.at("memory_tau").get<double>());
    }
    torch::Tensor refs;
    archive.read("reference_glyphs", refs);
    state.reference_glyphs = unpack_images(refs);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw IntegrityError(std::string("checkpoint payload is unreadable: ") + e.what() + where);
  }
  return state;
}

void rewrite_checkpoint_version(const fs::path& path, std::uint32_t version) {
  std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
  if (!f) throw IoError("cannot open " + path.string());
  f.seekp(8);
  f.write(reinterpret_cast<const char*>(&version), sizeof version);
}

}  // namespace glyphgen
