#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "ncre/checkpoint.hpp"
#include "ncre/config.hpp"
#include "ncre/encoder.hpp"
#include "support.hpp"

using namespace ncre;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

std::string field(const std::string& out, const std::string& key) {
  std::istringstream in(out);
  for (std::string line; std::getline(in, line);)
    if (line.rfind(key + "\t", 0) == 0) return line.substr(key.size() + 1);
  return {};
}

/// One small trained run shared by the eval/diagnose cases.
const fs::path& trained_run() {
  static const fs::path dir = [] {
    const fs::path d = ncre::testing::scratch_dir("cli_run");
    const Result r = run({"train", "--synth", "--classes", "8", "--per-class", "50", "--seed", "7",
                          "--out", d.string()});
    REQUIRE(r.code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("train on synthetic data writes the report and stage artifacts") {
  const fs::path d = trained_run();
  for (const char* f : {"report.tsv", "config.txt", "labels.txt", "data/test.tsv",
                        "stage1/history.csv", "stage2/checkpoint.bin", "stage3/report.tsv"})
    CHECK_MESSAGE(fs::exists(d / f), f);
  CHECK(slurp(d / "report.tsv") == slurp(d / "stage3/report.tsv"));
}

TEST_CASE("the same train command twice yields byte-identical outputs") {
  const fs::path d = ncre::testing::scratch_dir("cli_twice");
  const std::vector<std::string> args{"train",       "--synth",       "--classes", "4",
                                      "--per-class", "20",            "--embed-dim", "16",
                                      "--hidden-dim", "16",           "--out"};
  auto a = args, b = args;
  a.push_back((d / "a").string());
  b.push_back((d / "b").string());
  REQUIRE(run(a).code == 0);
  REQUIRE(run(b).code == 0);
  for (const char* f : {"report.tsv", "stage1/checkpoint.bin", "stage2/checkpoint.bin",
                        "stage3/checkpoint.bin", "stage2/history.csv"})
    CHECK_MESSAGE(slurp(d / "a" / f) == slurp(d / "b" / f), f);
}

TEST_CASE("usage and config errors exit with code 2") {
  CHECK(run({}).code == cli::kUsageError);
  CHECK(run({"train"}).code == cli::kUsageError);
  CHECK(run({"train", "--data", "/nonexistent.tsv"}).code == cli::kUsageError);
  CHECK(run({"train", "--synth", "--batch-size", "1"}).code == cli::kUsageError);
  CHECK(run({"train", "--synth", "--bogus", "1"}).code == cli::kUsageError);
  CHECK(run({"train", "--config", "/nonexistent.cfg"}).code == cli::kUsageError);
  const fs::path d = ncre::testing::scratch_dir("cli_cfg");
  write(d / "bad.cfg", "unknown_key=1\n");
  CHECK(run({"train", "--config", (d / "bad.cfg").string()}).code == cli::kUsageError);
}

TEST_CASE("flags override the config file") {
  const fs::path d = ncre::testing::scratch_dir("cli_override");
  write(d / "run.cfg", "synth=true\nclasses=3\nper_class=10\nembed_dim=8\nhidden_dim=8\nseed=1\n");
  const Result r = run({"train", "--config", (d / "run.cfg").string(), "--classes", "4", "--out",
                        (d / "out").string()});
  REQUIRE(r.code == 0);
  const RunConfig saved = from_kv(slurp(d / "out" / "config.txt"));
  CHECK(saved.synth_cfg.num_classes == 4);
  CHECK(saved.synth_cfg.per_class == 10);
  CHECK(saved.pipeline.seed == 1);
}

TEST_CASE("data errors exit with code 3") {
  const fs::path d = ncre::testing::scratch_dir("cli_data");
  write(d / "bad.tsv", "aspirin treats headache\ttreats\nno tab\n");
  Result r = run({"train", "--data", (d / "bad.tsv").string(), "--out", (d / "o").string()});
  CHECK(r.code == cli::kDataError);
  CHECK(r.err.find("line 2") != std::string::npos);
  write(d / "label.tsv", "aspirin treats headache\tTREATS_XYZ\n");
  CHECK(run({"train", "--data", (d / "label.tsv").string(), "--out", (d / "o").string()}).code ==
        cli::kDataError);
  write(d / "empty.tsv", "");
  CHECK(run({"train", "--data", (d / "empty.tsv").string(), "--out", (d / "o").string()}).code ==
        cli::kDataError);
}

TEST_CASE("eval on the test split reproduces the train-time report") {
  const fs::path d = trained_run();
  const Result r = run({"eval", "--checkpoint", (d / "stage3/checkpoint.bin").string(), "--data",
                        (d / "data/test.tsv").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out == slurp(d / "report.tsv"));
  const fs::path out = ncre::testing::scratch_dir("cli_eval") / "r.tsv";
  CHECK(run({"eval", "--checkpoint", (d / "stage3/checkpoint.bin").string(), "--data",
             (d / "data/test.tsv").string(), "--out", out.string()})
            .code == 0);
  CHECK(slurp(out) == slurp(d / "report.tsv"));
}

TEST_CASE("eval error paths") {
  const fs::path d = trained_run();
  const fs::path s = ncre::testing::scratch_dir("cli_eval_err");
  const std::string ckpt = (d / "stage3/checkpoint.bin").string();
  write(s / "empty.tsv", "");
  CHECK(run({"eval", "--checkpoint", ckpt, "--data", (s / "empty.tsv").string()}).code ==
        cli::kDataError);

  write(s / "small.txt", "complicates\ninhibits_than\n");
  const Result small = run({"eval", "--checkpoint", ckpt, "--data", (d / "data/test.tsv").string(),
                            "--labels", (s / "small.txt").string()});
  CHECK(small.code == cli::kDataError);
  CHECK(small.err.find("dimension") != std::string::npos);

  fs::create_directories(s / "v2");
  std::string bytes = slurp(ckpt);
  bytes[8] = 2;
  write(s / "v2/checkpoint.bin", bytes);
  fs::copy_file(d / "stage3/config.txt", s / "v2/config.txt");
  const Result v2 = run({"eval", "--checkpoint", (s / "v2/checkpoint.bin").string(), "--data",
                         (d / "data/test.tsv").string()});
  CHECK(v2.code == cli::kCheckpointError);
  CHECK(v2.err.find("version") != std::string::npos);
  CHECK(run({"eval", "--checkpoint", (s / "none.bin").string(), "--data",
             (d / "data/test.tsv").string()})
            .code == cli::kCheckpointError);
}

TEST_CASE("diagnose a stage-2 checkpoint") {
  const fs::path d = trained_run();
  const std::vector<std::string> args{"diagnose", "--checkpoint",
                                      (d / "stage2/checkpoint.bin").string(), "--data",
                                      (d / "data/eval.tsv").string()};
  const Result a = run(args), b = run(args);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(field(a.out, "source") == "online.projector");
  CHECK(std::stod(field(a.out, "effective_rank")) > 2.0);
  const Result s1 = run({"diagnose", "--checkpoint", (d / "stage1/checkpoint.bin").string(),
                         "--data", (d / "data/eval.tsv").string()});
  REQUIRE(s1.code == 0);
  CHECK(field(s1.out, "source") == "encoder");
}

TEST_CASE("diagnose a collapsed checkpoint whose rows are all equal") {
  const fs::path d = ncre::testing::scratch_dir("cli_collapsed");
  RunConfig cfg = ncre::testing::tiny_config();
  FineTuneModel m = build_finetune_model(cfg, 4);
  for (Parameter* p : m.encoder.parameters())
    for (double& v : p->tensor.data()) v = 0.0;
  for (double& v : m.encoder.layers.back().bias.tensor.data()) v = 0.5;
  write_checkpoint(d / "checkpoint.bin", ncre::as_const(m.encoder.parameters()));
  write(d / "config.txt", to_kv(cfg));
  write(d / "labels.txt", synth_label_table(4).serialize());
  write(d / "data.tsv", "a b c\tcomplicates\nd e\tstimulates\nf\taugments\n");
  const Result r = run({"diagnose", "--checkpoint", (d / "checkpoint.bin").string(), "--data",
                        (d / "data.tsv").string()});
  REQUIRE(r.code == 0);
  CHECK(field(r.out, "anisotropy") == "1.000000");
  CHECK(field(r.out, "effective_rank") == "1.000000");
  CHECK(field(r.out, "collapsed") == "yes");
}

TEST_CASE("synth writes a loadable TSV") {
  const fs::path d = ncre::testing::scratch_dir("cli_synth");
  const Result r = run({"synth", "--classes", "3", "--per-class", "7", "--output",
                        (d / "s.tsv").string(), "--labels-out", (d / "l.txt").string()});
  REQUIRE(r.code == 0);
  const auto rows = load_tsv(d / "s.tsv", LabelTable::from_file(d / "l.txt"));
  CHECK(rows.size() == 21);
  CHECK(run({"synth", "--classes", "3"}).code == cli::kUsageError);
}

TEST_CASE("joint mode trains through the CLI") {
  const fs::path d = ncre::testing::scratch_dir("cli_joint");
  const Result r = run({"train", "--synth", "--mode", "joint", "--classes", "3", "--per-class", "10",
                        "--embed-dim", "8", "--hidden-dim", "8", "--joint-epochs", "2", "--out",
                        d.string()});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(d / "joint/history.csv"));
  CHECK(fs::exists(d / "report.tsv"));
}
