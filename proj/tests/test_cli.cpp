#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "glyphgen/cli.hpp"
#include "glyphgen/corpus.hpp"
#include "glyphgen/png_io.hpp"
#include "test_support.hpp"

using namespace glyphgen;
using namespace glyphgen::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

int count_pngs(const fs::path& dir) {
  int n = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.path().extension() == ".png") ++n;
  return n;
}

void write_json(const fs::path& p, const nlohmann::json& j) { std::ofstream(p) << j.dump(2); }

nlohmann::json tiny_run_config() {
  auto c = tiny_config(5);
  c.k_style = 3;
  c.max_iterations = 3;
  c.held_out_chars = {9};
  c.held_out_styles = {7};
  return c.to_json();
}

}  // namespace

TEST(Cli, MakeCorpusWritesEightyPngs) {
  TempDir dir("cli_make");
  const auto r = cli({"make-corpus", "--styles", "8", "--chars", "10", "--seed", "1", "--size", "32",
                      "--out", (dir.path() / "d").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(count_pngs(dir.path() / "d"), 80);
  EXPECT_NE(r.out.find("resolved config (make-corpus)"), std::string::npos);
}

TEST(Cli, NegativeLambdaIsConfigCategory) {
  TempDir dir("cli_bad");
  cli({"make-corpus", "--styles", "3", "--chars", "4", "--size", "32", "--out",
       (dir.path() / "c").string()});
  auto j = tiny_run_config();
  j["lambda1"] = -1.0;
  write_json(dir.path() / "bad.json", j);
  const auto r = cli({"train", "--config", (dir.path() / "bad.json").string(), "--corpus",
                      (dir.path() / "c").string(), "--out", (dir.path() / "run").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error[config]"), std::string::npos) << r.err;
}

TEST(Cli, UnknownFlagAndSubcommandAreRejected) {
  auto r = cli({"make-corpus", "--styles", "3", "--chars", "4", "--out", "/tmp/x", "--colour", "red"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("error[config]"), std::string::npos) << r.err;
  r = cli({"frobnicate"});
  EXPECT_NE(r.code, 0);
  r = cli({});
  EXPECT_NE(r.code, 0);
}

TEST(Cli, MissingCorpusIsIoCategory) {
  TempDir dir("cli_io");
  write_json(dir.path() / "ok.json", tiny_run_config());
  const auto r = cli({"train", "--config", (dir.path() / "ok.json").string(), "--corpus",
                      (dir.path() / "nope").string(), "--out", (dir.path() / "run").string()});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_NE(r.err.find("error[io]"), std::string::npos) << r.err;
}

TEST(Cli, CorruptCheckpointIsIntegrityCategory) {
  TempDir dir("cli_integrity");
  std::ofstream(dir.path() / "junk.ckpt") << "not a checkpoint";
  fs::create_directories(dir.path() / "refs");
  const auto r = cli({"generate", "--checkpoint", (dir.path() / "junk.ckpt").string(),
                      "--content-char", "0", "--style-dir", (dir.path() / "refs").string(), "--out",
                      (dir.path() / "g.png").string()});
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.err.find("error[integrity]"), std::string::npos) << r.err;
}

TEST(Cli, TrainGenerateEvaluatePipeline) {
  TempDir dir("cli_pipe");
  const auto corpus_dir = dir.path() / "corpus";
  ASSERT_EQ(cli({"make-corpus", "--styles", "8", "--chars", "10", "--size", "32", "--seed", "2",
                 "--out", corpus_dir.string()})
                .code,
            0);
  write_json(dir.path() / "cfg.json", tiny_run_config());
  const auto run_dir = dir.path() / "run";
  auto r = cli({"train", "--config", (dir.path() / "cfg.json").string(), "--corpus",
                corpus_dir.string(), "--out", run_dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("resolved config (train)"), std::string::npos);
  ASSERT_TRUE(fs::exists(run_dir / "final.ckpt"));
  EXPECT_TRUE(fs::exists(run_dir / "metrics.csv"));

  // three references of font 7 (held out) for character 9 (held out)
  const auto refs = dir.path() / "refs";
  fs::create_directories(refs);
  for (int c : {1, 2, 3}) fs::copy_file(glyph_path(corpus_dir, 7, c), refs / ("r" + std::to_string(c) + ".png"));
  r = cli({"generate", "--checkpoint", (run_dir / "final.ckpt").string(), "--content-char", "9",
           "--style-dir", refs.string(), "--out", (dir.path() / "g.png").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto img = read_png(dir.path() / "g.png");
  EXPECT_EQ(img.width, 32);
  EXPECT_EQ(img.height, 32);

  // wrong reference count
  fs::copy_file(glyph_path(corpus_dir, 7, 4), refs / "r4.png");
  r = cli({"generate", "--checkpoint", (run_dir / "final.ckpt").string(), "--content-char", "9",
           "--style-dir", refs.string(), "--out", (dir.path() / "g2.png").string()});
  EXPECT_EQ(r.code, 2) << r.err;

  const auto report = dir.path() / "report.json";
  r = cli({"evaluate", "--checkpoint", (run_dir / "final.ckpt").string(), "--corpus",
           corpus_dir.string(), "--split", "ufsc", "--out", report.string(), "--csv",
           (dir.path() / "report.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  std::ifstream in(report);
  const auto j = nlohmann::json::parse(in);
  for (const char* key : {"split", "samples", "l1", "rmse", "lpips", "acc_c", "acc_s", "fid_c", "fid_s"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["split"], "ufsc");
  EXPECT_EQ(j["lpips"], "n/a");
  EXPECT_TRUE(j["fid_s"].is_number());
  EXPECT_TRUE(fs::exists(dir.path() / "report.csv"));
}
