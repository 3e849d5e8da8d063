#include "vmr/cli.hpp"

#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <json.hpp>
#include <set>
#include <sstream>

#include "vmr/io.hpp"
#include "vmr/toy_corpus.hpp"

using namespace vmr;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

std::set<std::string> listing(const fs::path& dir) {
  std::set<std::string> names;
  for (const auto& e : fs::recursive_directory_iterator(dir)) names.insert(fs::relative(e.path(), dir).string());
  return names;
}

// One corpus, one dataset and two small trained models shared by the suite.
class Cli : public ::testing::Test {
 protected:
  static fs::path root() {
    static const fs::path r = fs::temp_directory_path() / ("vmr_cli_" + std::to_string(::getpid()));
    return r;
  }
  static fs::path corpus() { return root() / "corpus"; }
  static fs::path data() { return root() / "data"; }

  static void SetUpTestSuite() {
    fs::remove_all(root());
    ToyCorpusConfig cfg;
    cfg.files = 8;
    cfg.seed = 2;
    const auto files = generate_toy_corpus(cfg);
    for (std::size_t i = 0; i < files.size(); ++i)
      io::write_file_atomic(corpus() / ("f" + std::to_string(i) + ".py"), files[i]);
    ASSERT_EQ(run({"gen-data", "--corpus", corpus().string(), "--seed", "7", "--out", data().string(),
                   "--max-tokens", "80", "--test-fraction", "0.3", "--train-fraction", "0.6"})
                  .code,
              0);
    for (const char* model : {"joint", "repair"}) {
      const Result r = run({"train", "--data", data().string(), "--out", (root() / model).string(), "--model", model,
                            "--epochs", "1", "--embed-dim", "8", "--hidden-dim", "16", "--train-limit", "64",
                            "--valid-limit", "16", "--seed", "3"});
      ASSERT_EQ(r.code, 0) << r.err;
    }
  }
  static void TearDownTestSuite() { fs::remove_all(root()); }

  fs::path fresh(const std::string& name) {
    const fs::path p = root() / "scratch" / name;
    fs::remove_all(p);
    return p;
  }
};

}  // namespace

TEST_F(Cli, UsageErrorsExitOneWithSynopsis) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
  const Result r = run({"eval", "--data", data().string()});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_NE(r.err.find("--checkpoint"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  const std::string ckpt = (root() / "repair" / "model.ckpt").string();
  EXPECT_EQ(run({"enum-eval", "--checkpoint", ckpt, "--data", data().string(), "--k", "0"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"enum-eval", "--checkpoint", ckpt, "--data", data().string(), "--tau", "0,x"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"train", "--data", data().string(), "--out", fresh("m").string(), "--model", "both"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"gen-data", "--out", fresh("g").string()}).code, cli::kExitUsage);
  EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
}

TEST_F(Cli, DataAndModelErrorsExitTwo) {
  EXPECT_EQ(run({"eval", "--checkpoint", (root() / "repair" / "model.ckpt").string(), "--data", data().string()}).code,
            cli::kExitError);
  EXPECT_EQ(run({"eval", "--checkpoint", (root() / "nope.ckpt").string(), "--data", data().string()}).code,
            cli::kExitError);
  EXPECT_EQ(run({"gen-data", "--corpus", (root() / "missing").string(), "--out", fresh("x").string()}).code,
            cli::kExitError);
  EXPECT_EQ(run({"inspect", "--data", data().string(), "--index", "999999"}).code, cli::kExitError);
}

TEST_F(Cli, GenDataIsByteIdenticalAcrossRuns) {
  const fs::path again = fresh("again");
  ASSERT_EQ(run({"gen-data", "--corpus", corpus().string(), "--seed", "7", "--out", again.string(), "--max-tokens",
                 "80", "--test-fraction", "0.3", "--train-fraction", "0.6"})
                .code,
            0);
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(data())) {
    const std::string name = e.path().filename().string();
    if (name == cli::files::kManifest) continue;  // records wall-clock time
    EXPECT_EQ(io::read_file(e.path()), io::read_file(again / name)) << name;
    ++compared;
  }
  EXPECT_EQ(compared, 12u);
  const fs::path other = fresh("other_seed");
  ASSERT_EQ(run({"gen-data", "--corpus", corpus().string(), "--seed", "8", "--out", other.string(), "--max-tokens",
                 "80", "--test-fraction", "0.3", "--train-fraction", "0.6"})
                .code,
            0);
  EXPECT_NE(io::read_file(data() / "train.jsonl"), io::read_file(other / "train.jsonl"));
}

TEST_F(Cli, ManifestHashesMatchFiles) {
  for (const fs::path& dir : {data(), root() / "joint"}) {
    const auto m = nlohmann::json::parse(io::read_file(dir / cli::files::kManifest));
    ASSERT_FALSE(m.at("outputs").empty());
    for (const auto& [name, hash] : m.at("outputs").items()) EXPECT_EQ(io::sha256_file(dir / name), hash) << name;
  }
}

TEST_F(Cli, PretokenizedInputMatchesSourceInput) {
  // Re-express the corpus as {"text", "kind"} lines and regenerate.
  const fs::path pre = fresh("pre");
  for (const auto& e : fs::directory_iterator(corpus())) {
    std::string lines;
    for (const Token& t : tokenize(io::read_file(e.path())))
      lines += nlohmann::json{{"text", t.text}, {"kind", std::string(to_string(t.kind))}}.dump() + "\n";
    io::write_file_atomic(pre / "in" / (e.path().stem().string() + ".jsonl"), lines);
  }
  ASSERT_EQ(run({"gen-data", "--pretokenized", (pre / "in").string(), "--seed", "7", "--out", (pre / "out").string(),
                 "--max-tokens", "80", "--test-fraction", "0.3", "--train-fraction", "0.6"})
                .code,
            0);
  EXPECT_EQ(io::read_file(pre / "out" / "vocab.json"), io::read_file(data() / "vocab.json"));
  EXPECT_EQ(io::read_file(pre / "out" / "test.jsonl"), io::read_file(data() / "test.jsonl"));
}

TEST_F(Cli, TrainAndEvalAreDeterministic) {
  const fs::path again = fresh("joint_again");
  ASSERT_EQ(run({"train", "--data", data().string(), "--out", again.string(), "--epochs", "1", "--embed-dim", "8",
                 "--hidden-dim", "16", "--train-limit", "64", "--valid-limit", "16", "--seed", "3"})
                .code,
            0);
  for (const char* f : {cli::files::kCheckpoint, cli::files::kStepLosses, cli::files::kTrainLog})
    EXPECT_EQ(io::read_file(again / f), io::read_file(root() / "joint" / f)) << f;
  const Result a = run({"eval", "--checkpoint", (again / "model.ckpt").string(), "--data", data().string(), "--out",
                        fresh("ev1").string()});
  const Result b = run({"eval", "--checkpoint", (root() / "joint" / "model.ckpt").string(), "--data",
                        data().string(), "--out", fresh("ev2").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(io::read_file(root() / "scratch" / "ev1" / "metrics.csv"),
            io::read_file(root() / "scratch" / "ev2" / "metrics.csv"));
}

TEST_F(Cli, EnumEvalGridHasOneRowPerCell) {
  const fs::path out = fresh("grid");
  const Result r = run({"enum-eval", "--checkpoint", (root() / "repair" / "model.ckpt").string(), "--data",
                        data().string(), "--tau", "0,0.2,0.5", "--k", "1,inf", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = io::read_file(out / "enum_metrics.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  for (const char* label : {"tau=0 k=1,", "tau=0 k=inf,", "tau=0.2 k=1,", "tau=0.2 k=inf,", "tau=0.5 k=1,",
                            "tau=0.5 k=inf,"})
    EXPECT_NE(csv.find(label), std::string::npos) << label;
}

TEST_F(Cli, NoiseExpAndInspect) {
  const fs::path out = fresh("noise");
  const std::string ckpt = (root() / "repair" / "model.ckpt").string();
  const Result r = run({"noise-exp", "--checkpoint", ckpt, "--data", data().string(), "--tau", "0,0.5", "--out",
                        out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::read_file(out / "noise_any.csv").substr(0, 21), "tau,clean,noisy,drop\n");
  EXPECT_TRUE(fs::exists(out / "noise_near.csv"));

  const Result i = run({"inspect", "--data", data().string(), "--split", "test_holes", "--checkpoint", ckpt});
  ASSERT_EQ(i.code, 0) << i.err;
  EXPECT_NE(i.out.find("p_rep"), std::string::npos);
  EXPECT_NE(i.out.find("<HOLE>"), std::string::npos);
  const Result j = run({"inspect", "--data", data().string(), "--index", "1"});
  ASSERT_EQ(j.code, 0);
  EXPECT_NE(j.out.find("<NO_FAULT>"), std::string::npos);
}

TEST_F(Cli, WritesOnlyInsideOut) {
  const fs::path box = fresh("box");
  fs::create_directories(box / "in");
  fs::copy(data(), box / "in" / "data");
  const auto before = listing(box);
  ASSERT_EQ(run({"train", "--data", (box / "in" / "data").string(), "--out", (box / "out").string(), "--epochs", "0",
                 "--embed-dim", "4", "--hidden-dim", "4"})
                .code,
            0);
  ASSERT_EQ(run({"eval", "--checkpoint", (box / "out" / "model.ckpt").string(), "--data",
                 (box / "in" / "data").string(), "--out", (box / "out2").string()})
                .code,
            0);
  for (const std::string& name : listing(box)) {
    if (before.count(name)) continue;
    EXPECT_TRUE(name.rfind("out", 0) == 0) << name;
  }
}
