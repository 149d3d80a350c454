#include "glyphgen/train_config.hpp"

#include <fstream>
#include <set>

#include "glyphgen/error.hpp"

namespace glyphgen {
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError(std::string("unknown key '") + key + "' in " + where);
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

json ModelConfig::to_json() const {
  return {{"gen_base_width", gen_base_width}, {"style_dim", style_dim},
          {"msp_widths", msp_widths},         {"msp_hidden", msp_hidden},
          {"code_dim", code_dim},             {"disc_base_width", disc_base_width}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  reject_unknown(j, {"gen_base_width", "style_dim", "msp_widths", "msp_hidden", "code_dim",
                     "disc_base_width"},
                 "model");
  ModelConfig m;
  read(j, "gen_base_width", m.gen_base_width);
  read(j, "style_dim", m.style_dim);
  read(j, "msp_widths", m.msp_widths);
  read(j, "msp_hidden", m.msp_hidden);
  read(j, "code_dim", m.code_dim);
  read(j, "disc_base_width", m.disc_base_width);
  return m;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (!(lambda1 >= 0) || !(lambda2 >= 0) || !(lambda3 >= 0)) fail("all lambdas must be >= 0");
  if (!(tau > 0)) fail("tau must be > 0");
  if (!(momentum_m >= 0 && momentum_m <= 1)) fail("momentum_m must lie in [0,1]");
  if (k_style < 1) fail("k_style must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (max_iterations < 0) fail("max_iterations must be >= 0");
  if (!(learning_rate > 0)) fail("learning_rate must be > 0");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("betas must lie in [0,1)");
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (held_out_chars.empty() != held_out_styles.empty())
    fail("held_out_chars and held_out_styles must both be set or both be empty");
  const auto& m = model;
  if (m.gen_base_width < 1 || m.style_dim < 1 || m.msp_hidden < 1 || m.code_dim < 1 ||
      m.disc_base_width < 1)
    fail("model widths must be positive");
  for (int w : m.msp_widths)
    if (w < 1) fail("model widths must be positive");
}

json TrainConfig::to_json() const {
  return {{"lambda1", lambda1},
          {"lambda2", lambda2},
          {"lambda3", lambda3},
          {"tau", tau},
          {"momentum_m", momentum_m},
          {"k_style", k_style},
          {"batch_size", batch_size},
          {"epochs", epochs},
          {"max_iterations", max_iterations},
          {"optimizer", {{"name", "adam"}, {"learning_rate", learning_rate}, {"betas", {beta1, beta2}}}},
          {"seed", seed},
          {"discriminator_variant", std::string(to_string(discriminator_variant))},
          {"use_ccs", use_ccs},
          {"checkpoint_every", checkpoint_every},
          {"held_out_chars", held_out_chars},
          {"held_out_styles", held_out_styles},
          {"model", model.to_json()}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  reject_unknown(j,
                 {"lambda1", "lambda2", "lambda3", "tau", "momentum_m", "k_style", "batch_size",
                  "epochs", "max_iterations", "optimizer", "seed", "discriminator_variant",
                  "use_ccs", "checkpoint_every", "held_out_chars", "held_out_styles", "model"},
                 "train config");
  TrainConfig c;
  read(j, "lambda1", c.lambda1);
  read(j, "lambda2", c.lambda2);
  read(j, "lambda3", c.lambda3);
  read(j, "tau", c.tau);
  read(j, "momentum_m", c.momentum_m);
  read(j, "k_style", c.k_style);
  read(j, "batch_size", c.batch_size);
  read(j, "epochs", c.epochs);
  read(j, "max_iterations", c.max_iterations);
  read(j, "seed", c.seed);
  read(j, "use_ccs", c.use_ccs);
  read(j, "checkpoint_every", c.checkpoint_every);
  read(j, "held_out_chars", c.held_out_chars);
  read(j, "held_out_styles", c.held_out_styles);
  if (j.contains("discriminator_variant")) {
    std::string v;
    read(j, "discriminator_variant", v);
    c.discriminator_variant = parse_discriminator_variant(v);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    reject_unknown(o, {"name", "learning_rate", "betas"}, "optimizer");
    if (o.value("name", std::string("adam")) != "adam") throw ConfigError("only adam is supported");
    read(o, "learning_rate", c.learning_rate);
    if (o.contains("betas")) {
      std::array<double, 2> b{};
      read(o, "betas", b);
      c.beta1 = b[0];
      c.beta2 = b[1];
    }
  }
  if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
  c.validate();
  return c;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.batch_size = 256;
  c.epochs = 20;
  return c;
}

}  // namespace glyphgen
