#include "glyphgen/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "glyphgen/checkpoint.hpp"
#include "glyphgen/corpus.hpp"
#include "glyphgen/error.hpp"
#include "glyphgen/evalkit.hpp"
#include "glyphgen/trainer.hpp"

namespace glyphgen {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class LogLevel { quiet, info, debug };

LogLevel log_level() {
  const char* v = std::getenv("GLYPHGEN_LOG");
  if (!v) return LogLevel::info;
  const std::string s(v);
  if (s == "quiet" || s == "0") return LogLevel::quiet;
  if (s == "debug" || s == "2") return LogLevel::debug;
  return LogLevel::info;
}

void print_resolved(std::ostream& out, const std::string& command, const json& config) {
  out << "resolved config (" << command << "):\n" << config.dump(2) << '\n';
}

struct MakeCorpusArgs {
  int styles = 8;
  int chars = 10;
  int size = 64;
  std::uint64_t seed = 0;
  std::string out;
};

struct TrainArgs {
  std::string config, corpus, out;
};

struct GenerateArgs {
  std::string checkpoint, style_dir, out;
  int content_char = 0;
};

struct EvaluateArgs {
  std::string checkpoint, corpus, split, out, csv;
  std::string classifier_scope = "all";
  std::uint64_t seed = 0;
};

int make_corpus(const MakeCorpusArgs& a, std::ostream& out) {
  print_resolved(out, "make-corpus",
                 {{"styles", a.styles}, {"chars", a.chars}, {"size", a.size}, {"seed", a.seed},
                  {"out", a.out}});
  const auto manifest = synth_corpus(a.styles, a.chars, a.size, a.seed, a.out);
  out << "wrote " << manifest.num_styles * manifest.num_chars << " glyphs to " << a.out << '\n';
  return 0;
}

int train_command(const TrainArgs& a, std::ostream& out) {
  const auto config = TrainConfig::load(a.config);
  json resolved = config.to_json();
  resolved["corpus"] = a.corpus;
  resolved["out"] = a.out;
  print_resolved(out, "train", resolved);
  auto corpus = std::make_shared<const Corpus>(load_corpus(a.corpus));
  fs::create_directories(a.out);
  {
    std::ofstream cfg(fs::path(a.out) / "config.json");
    cfg << config.to_json().dump(2) << '\n';
  }
  TrainOptions options;
  options.out_dir = fs::path(a.out);
  options.verbose = log_level() != LogLevel::quiet;
  const auto result = train(config, corpus, options);
  const auto& last = result.log.back();
  out << "trained " << result.state.iteration << " iterations; final " << to_csv_row(last) << '\n'
      << "checkpoint: " << (fs::path(a.out) / "final.ckpt").string() << '\n';
  return 0;
}

int generate_command(const GenerateArgs& a, std::ostream& out) {
  auto state = load_checkpoint(a.checkpoint);
  print_resolved(out, "generate",
                 {{"checkpoint", a.checkpoint},
                  {"content_char", a.content_char},
                  {"style_dir", a.style_dir},
                  {"out", a.out},
                  {"train_config", state.config.to_json()}});
  if (!fs::is_directory(a.style_dir)) throw IoError("style directory not found: " + a.style_dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.style_dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (static_cast<int>(files.size()) != state.config.k_style)
    throw ConfigError("style directory holds " + std::to_string(files.size()) +
                      " PNG files; the model expects exactly k=" +
                      std::to_string(state.config.k_style));
  std::vector<GrayImage> refs;
  for (const auto& f : files) {
    refs.push_back(read_png(f));
    if (refs.back().height != state.image_size || refs.back().width != state.image_size)
      throw ShapeError(f.string() + " is not " + std::to_string(state.image_size) + "x" +
                       std::to_string(state.image_size));
  }
  std::vector<const GrayImage*> ptrs;
  for (const auto& r : refs) ptrs.push_back(&r);
  const auto image = generate_glyph(state, a.content_char, ptrs);
  if (const auto parent = fs::path(a.out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  write_png(a.out, image);
  out << "wrote " << a.out << '\n';
  return 0;
}

int evaluate_command(const EvaluateArgs& a, std::ostream& out, LogLevel level) {
  auto state = load_checkpoint(a.checkpoint);
  const SplitKind kind = parse_split_kind(a.split);
  if (a.classifier_scope != "all" && a.classifier_scope != "train")
    throw ConfigError("--classifier-scope must be 'all' or 'train'");
  print_resolved(out, "evaluate",
                 {{"checkpoint", a.checkpoint},
                  {"corpus", a.corpus},
                  {"split", std::string(to_string(kind))},
                  {"out", a.out},
                  {"classifier_scope", a.classifier_scope},
                  {"seed", a.seed},
                  {"train_config", state.config.to_json()}});
  if (state.config.held_out_chars.empty())
    throw ConfigError("checkpoint was trained without held-out characters and fonts; "
                      "there is no unseen slice to evaluate");
  auto corpus = std::make_shared<const Corpus>(load_corpus(a.corpus));
  if (corpus->image_size() != state.image_size)
    throw ShapeError("corpus glyph size differs from the checkpoint's");
  SplitSpec spec;
  spec.held_out_chars = {state.config.held_out_chars.begin(), state.config.held_out_chars.end()};
  spec.held_out_styles = {state.config.held_out_styles.begin(), state.config.held_out_styles.end()};
  const Split sp = split(corpus, spec);

  const GlyphSet classifier_data = a.classifier_scope == "all" ? full_set(corpus) : sp.train;
  if (level != LogLevel::quiet) out << "training evaluation classifiers\n";
  const auto content_clf = train_eval_classifier(classifier_data, ClassifierTarget::content);
  const auto style_clf = train_eval_classifier(classifier_data, ClassifierTarget::style);
  EvalOptions options;
  options.seed = a.seed;
  const auto report = evaluate_suite(state, sp, kind, {&content_clf, &style_clf}, options);

  if (const auto parent = fs::path(a.out).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream rep(a.out);
  if (!rep) throw IoError("cannot write report " + a.out);
  rep << report.to_json().dump(2) << '\n';
  if (!a.csv.empty()) {
    std::ofstream csv(a.csv);
    if (!csv) throw IoError("cannot write " + a.csv);
    csv << MetricReport::csv_header() << '\n' << report.csv_row() << '\n';
  }
  out << report.to_json().dump() << '\n';
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot glyph generation: corpus synthesis, training, generation, evaluation",
               "glyphgen"};
  app.require_subcommand(1);

  MakeCorpusArgs mc;
  auto* make = app.add_subcommand("make-corpus", "Render a synthetic glyph corpus");
  make->add_option("--styles", mc.styles, "Number of fonts")->required()->check(CLI::PositiveNumber);
  make->add_option("--chars", mc.chars, "Number of characters")->required()->check(CLI::PositiveNumber);
  make->add_option("--size", mc.size, "Glyph side in pixels")->capture_default_str();
  make->add_option("--seed", mc.seed, "Layout seed")->capture_default_str();
  make->add_option("--out", mc.out, "Output directory")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train from a JSON config");
  tr->add_option("--config", ta.config, "Training config (JSON)")->required();
  tr->add_option("--corpus", ta.corpus, "Corpus directory")->required();
  tr->add_option("--out", ta.out, "Run directory (checkpoints, metrics.csv)")->required();

  GenerateArgs ga;
  auto* gen = app.add_subcommand("generate", "Generate one glyph from k style references");
  gen->add_option("--checkpoint", ga.checkpoint, "Checkpoint file")->required();
  gen->add_option("--content-char", ga.content_char, "Character id")->required();
  gen->add_option("--style-dir", ga.style_dir, "Directory with exactly k reference PNGs")->required();
  gen->add_option("--out", ga.out, "Output PNG")->required();

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a held-out slice");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint file")->required();
  ev->add_option("--corpus", ea.corpus, "Corpus directory")->required();
  ev->add_option("--split", ea.split, "ucsf or ufsc")->required();
  ev->add_option("--out", ea.out, "Report JSON")->required();
  ev->add_option("--csv", ea.csv, "Also write a one-row CSV");
  ev->add_option("--classifier-scope", ea.classifier_scope,
                 "Glyphs the evaluation classifiers learn from: all | train")
      ->capture_default_str();
  ev->add_option("--seed", ea.seed, "Style reference sampling seed")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error[config]: " << e.what() << '\n';
    return exit_code(ErrorCategory::config);
  }

  const LogLevel level = log_level();
  try {
    if (*make) return make_corpus(mc, out);
    if (*tr) return train_command(ta, out);
    if (*gen) return generate_command(ga, out);
    if (*ev) return evaluate_command(ea, out, level);
  } catch (const Error& e) {
    err << "error[" << category_name(e.category()) << "]: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const fs::filesystem_error& e) {
    err << "error[io]: " << e.what() << '\n';
    return exit_code(ErrorCategory::io);
  } catch (const std::exception& e) {
    err << "error[internal]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace glyphgen
