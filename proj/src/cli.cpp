#include "vmr/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>

#include "vmr/checkpoint.hpp"
#include "vmr/datagen.hpp"
#include "vmr/error.hpp"
#include "vmr/eval.hpp"
#include "vmr/io.hpp"
#include "vmr/trainer.hpp"

namespace vmr::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Bad flag values found after CLI11 parsing; reported like parse errors.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string> kExampleSplits = {"train", "valid", "test"};
const std::vector<std::string> kHoleSplits = {"train_holes", "valid_holes", "test_holes"};
const std::vector<std::string> kNoiseSets = {"noise_any_clean", "noise_any_noisy", "noise_near_clean",
                                             "noise_near_noisy"};
const std::vector<double> kDefaultTaus = {0, 0.2, 0.3, 0.5, 0.7, 0.9, 0.99};

std::string jsonl_name(const std::string& split) { return split + ".jsonl"; }

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (item.empty()) throw UsageError("empty entry in list '" + text + "'");
    parts.push_back(item);
  }
  if (parts.empty()) throw UsageError("empty list");
  return parts;
}

std::vector<double> parse_taus(const std::string& text) {
  std::vector<double> out;
  for (const std::string& s : split_list(text)) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || !(v >= 0.0)) throw UsageError("--tau expects non-negative numbers, got '" + s + "'");
    out.push_back(v);
  }
  return out;
}

std::vector<std::optional<std::size_t>> parse_ks(const std::string& text) {
  std::vector<std::optional<std::size_t>> out;
  for (const std::string& s : split_list(text)) {
    try {
      out.push_back(parse_k(s));
    } catch (const ConfigError& e) {
      throw UsageError(std::string("--k: ") + e.what());
    }
  }
  return out;
}

std::string format_tau(double tau) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", tau);
  return buf;
}

// Collects emitted files so the manifest can hash them.
class Run {
 public:
  Run(std::string subcommand, fs::path out) : subcommand_(std::move(subcommand)), out_(std::move(out)) {
    started_ = std::chrono::steady_clock::now();
  }

  void write(const std::string& name, std::string_view bytes) {
    io::write_file_atomic(out_ / name, bytes);
    hashes_[name] = io::sha256_hex(bytes);
  }
  void add_hash(const std::string& name) { hashes_[name] = io::sha256_file(out_ / name); }

  json config = json::object();
  json inputs = json::object();
  std::optional<std::uint64_t> seed;

  void finish() {
    json m;
    m["subcommand"] = subcommand_;
    m["config"] = config;
    m["seed"] = seed ? json(*seed) : json(nullptr);
    m["inputs"] = inputs;
    m["output_dir"] = out_.string();
    m["outputs"] = hashes_;
    m["duration_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    io::write_file_atomic(out_ / files::kManifest, m.dump(2) + "\n");
  }

 private:
  std::string subcommand_;
  fs::path out_;
  std::chrono::steady_clock::time_point started_;
  std::map<std::string, std::string> hashes_;
};

// ---- dataset directory access ----

Vocab read_vocab(const fs::path& data) {
  try {
    return Vocab::from_json(json::parse(io::read_file(data / files::kVocab)));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad vocab.json: ") + e.what());
  }
}

json read_data_config(const fs::path& data) {
  try {
    return json::parse(io::read_file(data / files::kDataConfig));
  } catch (const json::exception& e) {
    throw ParseError(std::string("bad data_config.json: ") + e.what());
  }
}

std::vector<Example> read_examples(const fs::path& data, const std::string& split) {
  const std::string text = io::read_file(data / jsonl_name(split));
  try {
    return examples_from_jsonl(text);
  } catch (const ParseError& e) {
    throw DatasetModelMismatch(split + " does not hold program examples: " + e.what());
  }
}

std::vector<HoleExample> read_holes(const fs::path& data, const std::string& split) {
  const std::string text = io::read_file(data / jsonl_name(split));
  try {
    return hole_examples_from_jsonl(text);
  } catch (const ParseError& e) {
    throw DatasetModelMismatch(split + " does not hold hole examples: " + e.what());
  }
}

template <typename T>
std::vector<T> limit(std::vector<T> v, std::size_t n) {
  if (n > 0 && v.size() > n) v.resize(n);
  return v;
}

Checkpoint read_checkpoint(const fs::path& path, ModelKind want, const std::optional<Vocab>& vocab) {
  Checkpoint c = load_checkpoint(path);
  if (c.kind != want)
    throw DatasetModelMismatch("checkpoint holds the " + std::string(to_string(c.kind)) + " model; this needs the " +
                               std::string(to_string(want)) + " model");
  if (vocab && vocab->hash() != c.vocab_hash)
    throw DatasetModelMismatch("checkpoint vocabulary " + c.vocab_hash + " differs from the dataset's " +
                               vocab->hash());
  return c;
}

// ---- gen-data ----

struct GenDataArgs {
  std::string corpus, pretokenized, out;
  std::uint64_t seed = 0;
  std::size_t max_tokens = 250, vocab_size = 10000, max_test_functions = 0;
  double train = 0.8, valid = 0.1, test = 0.1;
};

int run_gen_data(const GenDataArgs& a, std::ostream& out, std::ostream& err) {
  if (a.corpus.empty() == a.pretokenized.empty()) throw UsageError("gen-data needs exactly one of --corpus, --pretokenized");
  Run run("gen-data", a.out);
  const LoadedCorpus corpus = a.corpus.empty() ? load_pretokenized(a.pretokenized) : load_corpus_dir(a.corpus);
  for (const std::string& s : corpus.skipped) err << "warning: skipped " << s << "\n";

  DatasetConfig dc;
  dc.max_tokens = a.max_tokens;
  dc.train_fraction = a.train;
  dc.valid_fraction = a.valid;
  dc.test_fraction = a.test;
  dc.max_test_functions = a.max_test_functions;
  const Vocab vocab = build_vocab(corpus.functions, a.vocab_size);
  const Dataset ds = generate_dataset(corpus.functions, vocab, dc, a.seed);
  const NoiseSets noise = generate_noise_sets(ds.test, vocab, dc, a.seed);

  json cfg = {{"max_tokens", dc.max_tokens},
              {"vocab_size", vocab.size()},
              {"vocab_hash", vocab.hash()},
              {"train_fraction", dc.train_fraction},
              {"valid_fraction", dc.valid_fraction},
              {"test_fraction", dc.test_fraction},
              {"max_test_functions", dc.max_test_functions},
              {"near_window", dc.near_window},
              {"near_max_position", dc.near_max_position},
              {"seed", a.seed}};
  run.write(files::kVocab, vocab.to_json().dump(1) + "\n");
  run.write(files::kDataConfig, cfg.dump(2) + "\n");
  run.write("train.jsonl", to_jsonl(ds.train));
  run.write("valid.jsonl", to_jsonl(ds.valid));
  run.write("test.jsonl", to_jsonl(ds.test));
  run.write("train_holes.jsonl", to_jsonl(ds.train_holes));
  run.write("valid_holes.jsonl", to_jsonl(ds.valid_holes));
  run.write("test_holes.jsonl", to_jsonl(ds.test_holes));
  run.write("noise_any_clean.jsonl", to_jsonl(noise.any_clean));
  run.write("noise_any_noisy.jsonl", to_jsonl(noise.any_noisy));
  run.write("noise_near_clean.jsonl", to_jsonl(noise.near_clean));
  run.write("noise_near_noisy.jsonl", to_jsonl(noise.near_noisy));

  run.seed = a.seed;
  run.config = cfg;
  run.inputs = {{"corpus", a.corpus.empty() ? a.pretokenized : a.corpus},
                {"files", corpus.files},
                {"skipped_files", corpus.skipped.size()},
                {"functions", corpus.functions.size()}};
  run.finish();
  out << "functions " << corpus.functions.size() << " (from " << corpus.files << " files)\n"
      << "vocab " << vocab.size() << "\n"
      << "train " << ds.train.size() << " examples, " << ds.train_holes.size() << " hole examples\n"
      << "valid " << ds.valid.size() << " examples, " << ds.valid_holes.size() << " hole examples\n"
      << "test " << ds.test.size() << " examples, " << ds.test_holes.size() << " hole examples\n"
      << "noise any " << noise.any_clean.size() << " pairs, near " << noise.near_clean.size() << " pairs\n";
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  std::string data, out, config_file, model = "joint", mask_mode, rep_loss;
  std::uint64_t seed = 0;
  std::size_t epochs = 10, batch_size = 32, patience = 5, eval_every = 0, embed_dim = 0, hidden_dim = 0,
              max_tokens = 0, train_limit = 0, valid_limit = 0;
  double lr = 1e-3, time_budget = 0;
  const CLI::App* app = nullptr;
};

bool given(const CLI::App* app, const std::string& flag) { return app->count(flag) > 0; }

int run_train(const TrainArgs& a, std::ostream& out) {
  const ModelKind kind = model_kind_from_string(a.model);
  const Vocab vocab = read_vocab(a.data);
  const json data_cfg = read_data_config(a.data);

  // Defaults, then the --config file, then flags.
  json model_json = ModelConfig{}.to_json();
  json train_json = TrainConfig{}.to_json();
  if (!a.config_file.empty()) {
    json file;
    try {
      file = json::parse(io::read_file(a.config_file));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad --config file: ") + e.what());
    }
    if (file.contains("model")) model_json.merge_patch(file["model"]);
    if (file.contains("train")) train_json.merge_patch(file["train"]);
  }
  model_json["vocab_size"] = vocab.size();
  model_json["max_tokens"] = data_cfg.value("max_tokens", model_json["max_tokens"].get<std::size_t>());
  const CLI::App* app = a.app;
  if (given(app, "--embed-dim")) model_json["embed_dim"] = a.embed_dim;
  if (given(app, "--hidden-dim")) model_json["hidden_dim"] = a.hidden_dim;
  if (given(app, "--mask-mode")) model_json["mask_mode"] = a.mask_mode;
  if (given(app, "--rep-loss")) model_json["rep_loss_mode"] = a.rep_loss;
  if (given(app, "--max-tokens")) model_json["max_tokens"] = a.max_tokens;
  if (given(app, "--epochs")) train_json["epochs"] = a.epochs;
  if (given(app, "--batch-size")) train_json["batch_size"] = a.batch_size;
  if (given(app, "--lr")) train_json["lr"] = a.lr;
  if (given(app, "--seed")) train_json["seed"] = a.seed;
  if (given(app, "--patience")) train_json["patience"] = a.patience;
  if (given(app, "--eval-every")) train_json["eval_every"] = a.eval_every;
  if (given(app, "--time-budget")) train_json["time_budget_seconds"] = a.time_budget;
  train_json["model"] = to_string(kind);
  const ModelConfig model = ModelConfig::from_json(model_json);
  const TrainConfig tc = TrainConfig::from_json(train_json);

  Run run("train", a.out);
  TrainResult result;
  if (kind == ModelKind::Joint) {
    result = train_joint(limit(read_examples(a.data, "train"), a.train_limit),
                         limit(read_examples(a.data, "valid"), a.valid_limit), model, tc, vocab.hash());
  } else {
    result = train_repair(limit(read_holes(a.data, "train_holes"), a.train_limit),
                          limit(read_holes(a.data, "valid_holes"), a.valid_limit), model, tc, vocab.hash());
  }

  run.write(files::kCheckpoint, serialize_checkpoint(result.best));
  run.write(files::kLastCheckpoint, serialize_checkpoint(result.last));
  run.write(files::kModelCard, model_card(result.best));
  run.write(files::kTrainLog, log_csv(result.log));
  std::string losses = "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < result.step_losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, result.step_losses[i]);
    losses += buf;
  }
  run.write(files::kStepLosses, losses);
  run.seed = tc.seed;
  run.config = {{"model", model.to_json()}, {"train", tc.to_json()}};
  run.inputs = {{"data", a.data},
                {"vocab_hash", vocab.hash()},
                {"train_limit", a.train_limit},
                {"valid_limit", a.valid_limit}};
  run.finish();
  out << "trained " << to_string(kind) << " model: " << result.steps << " steps over " << result.epochs_run
      << " epochs (stopped: " << result.stop_reason << ")\n";
  if (!result.log.empty() && result.log.back().valid_metric)
    out << "last validation: loss " << *result.log.back().valid_loss << ", metric " << *result.log.back().valid_metric
        << "\n";
  out << "checkpoint " << (fs::path(a.out) / files::kCheckpoint).string() << "\n";
  return kExitOk;
}

// ---- eval / enum-eval / noise-exp ----

struct EvalArgs {
  std::string checkpoint, data, out, split = "test", taus, ks = "inf";
  double theta = 0;
  std::size_t limit = 0;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
  const Vocab vocab = read_vocab(a.data);
  const Checkpoint ckpt = read_checkpoint(a.checkpoint, ModelKind::Joint, vocab);
  const auto test = limit(read_examples(a.data, a.split), a.limit);
  const JointEvaluation ev = evaluate_joint(ckpt.params, ckpt.config, test, a.theta);
  const std::vector<MetricsRow> rows{{"joint", ev.metrics}};
  out << format_metrics_table(rows);
  if (!a.out.empty()) {
    Run run("eval", a.out);
    run.write("metrics.csv", metrics_csv(rows));
    run.config = {{"split", a.split}, {"theta", a.theta}, {"limit", a.limit}};
    run.inputs = {{"checkpoint", a.checkpoint}, {"data", a.data}};
    run.finish();
  }
  return kExitOk;
}

int run_enum_eval(const EvalArgs& a, std::ostream& out) {
  const std::vector<double> taus = a.taus.empty() ? kDefaultTaus : parse_taus(a.taus);
  const auto ks = parse_ks(a.ks);
  const Vocab vocab = read_vocab(a.data);
  const Checkpoint ckpt = read_checkpoint(a.checkpoint, ModelKind::RepairOnly, vocab);
  const auto test = limit(read_examples(a.data, a.split), a.limit);
  std::size_t calls = 0;
  const auto grid = evaluate_enumerative_grid(ckpt.params, ckpt.config, test, taus, ks, &calls);
  std::vector<MetricsRow> rows;
  for (const GridRow& g : grid) rows.push_back({"tau=" + format_tau(g.tau) + " k=" + format_k(g.k), g.metrics});
  out << "enumerative baseline; finite k is applied on top of the row's tau\n" << format_metrics_table(rows);
  out << "repair-model calls: " << calls << "\n";
  if (!a.out.empty()) {
    Run run("enum-eval", a.out);
    run.write("enum_metrics.csv", metrics_csv(rows));
    json tj = json::array(), kj = json::array();
    for (double t : taus) tj.push_back(t);
    for (const auto& k : ks) kj.push_back(format_k(k));
    run.config = {{"split", a.split}, {"taus", tj}, {"ks", kj}, {"limit", a.limit}, {"repair_calls", calls}};
    run.inputs = {{"checkpoint", a.checkpoint}, {"data", a.data}};
    run.finish();
  }
  return kExitOk;
}

int run_noise_exp(const EvalArgs& a, std::ostream& out) {
  const std::vector<double> taus = a.taus.empty() ? kDefaultTaus : parse_taus(a.taus);
  const Vocab vocab = read_vocab(a.data);
  const Checkpoint ckpt = read_checkpoint(a.checkpoint, ModelKind::RepairOnly, vocab);
  std::optional<Run> run;
  if (!a.out.empty()) run.emplace("noise-exp", a.out);
  for (const char* variant : {"any", "near"}) {
    const auto clean = limit(read_holes(a.data, std::string("noise_") + variant + "_clean"), a.limit);
    const auto noisy = limit(read_holes(a.data, std::string("noise_") + variant + "_noisy"), a.limit);
    const auto rows = run_noise_experiment(ckpt.params, ckpt.config, clean, noisy, taus);
    const std::string csv = noise_csv(rows);
    out << "== " << (std::string(variant) == "any" ? "NoBugAny / AddBugAny" : "NoBugNear / AddBugNear") << " ("
        << clean.size() << " pairs)\n"
        << csv;
    if (run) run->write(std::string("noise_") + variant + ".csv", csv);
  }
  if (run) {
    json tj = json::array();
    for (double t : taus) tj.push_back(t);
    run->config = {{"taus", tj}, {"limit", a.limit}};
    run->inputs = {{"checkpoint", a.checkpoint}, {"data", a.data}};
    run->finish();
  }
  return kExitOk;
}

// ---- inspect ----

struct InspectArgs {
  std::string data, split = "test", checkpoint;
  std::size_t index = 0;
};

void print_example(std::ostream& out, const Example& ex, const std::vector<double>* loc,
                   const std::vector<double>* rep) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%5s  %-20s %4s %4s %4s", "idx", "token", "mask", "loc", "rep");
  out << buf;
  if (loc) out << "    p_loc";
  if (rep) out << "    p_rep";
  out << "\n";
  for (std::size_t i = 0; i < ex.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%5zu  %-20s %4d %4d %4d", i, ex.raw_tokens[i].c_str(), ex.mask[i],
                  ex.loc_target[i], ex.rep_target[i]);
    out << buf;
    if (loc) {
      std::snprintf(buf, sizeof buf, " %8.4f", (*loc)[i]);
      out << buf;
    }
    if (rep) {
      std::snprintf(buf, sizeof buf, " %8.4f", (*rep)[i]);
      out << buf;
    }
    out << "\n";
  }
}

int run_inspect(const InspectArgs& a, std::ostream& out) {
  const bool holes = std::find(kHoleSplits.begin(), kHoleSplits.end(), a.split) != kHoleSplits.end() ||
                     std::find(kNoiseSets.begin(), kNoiseSets.end(), a.split) != kNoiseSets.end();
  if (!holes && std::find(kExampleSplits.begin(), kExampleSplits.end(), a.split) == kExampleSplits.end())
    throw UsageError("unknown split '" + a.split + "'");
  std::optional<Checkpoint> ckpt;
  if (!a.checkpoint.empty())
    ckpt = read_checkpoint(a.checkpoint, holes ? ModelKind::RepairOnly : ModelKind::Joint, read_vocab(a.data));

  if (holes) {
    const auto set = read_holes(a.data, a.split);
    if (a.index >= set.size())
      throw IndexOutOfRange("index " + std::to_string(a.index) + " out of " + std::to_string(set.size()));
    const HoleExample& h = set[a.index];
    out << a.split << "[" << a.index << "] function " << h.example.function_id << ", hole at " << h.slot_index
        << ", target '" << h.target_var << "'\n";
    std::vector<double> rep;
    if (ckpt) rep = forward_repair_only(ckpt->params, ckpt->config, h);
    print_example(out, h.example, nullptr, ckpt ? &rep : nullptr);
    if (ckpt) {
      const RepairAnswer ans = predict_repair(ckpt->params, ckpt->config, h);
      out << "prediction: " << h.example.raw_tokens[ans.index] << " (" << ans.prob << ")"
          << (ans.correct ? " correct" : " wrong") << "\n";
    }
    return kExitOk;
  }
  const auto set = read_examples(a.data, a.split);
  if (a.index >= set.size())
    throw IndexOutOfRange("index " + std::to_string(a.index) + " out of " + std::to_string(set.size()));
  const Example& ex = set[a.index];
  out << a.split << "[" << a.index << "] function " << ex.function_id;
  if (ex.is_buggy)
    out << ", buggy at " << *ex.bug_index << ": '" << ex.injected_var.value_or("?") << "' should be '"
        << ex.original_var.value_or("?") << "'\n";
  else
    out << ", bug-free\n";
  if (ckpt) {
    const PointerOutput o = forward_joint(ckpt->params, ckpt->config, ex);
    print_example(out, ex, &o.loc_dist, &o.rep_dist);
    const Prediction p = decide_joint(o, ex);
    if (p.buggy)
      out << "prediction: BUGGY at " << p.loc_index << " (" << p.loc_prob << "), repair '" << p.repair_name << "' ("
          << p.rep_prob << ")\n";
    else
      out << "prediction: BUG_FREE (" << p.loc_prob << ")\n";
  } else {
    print_example(out, ex, nullptr, nullptr);
  }
  return kExitOk;
}

}  // namespace

LoadedCorpus load_corpus_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("corpus directory not found: " + dir.string());
  std::vector<fs::path> paths;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".py") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end(), [&](const fs::path& a, const fs::path& b) {
    return fs::relative(a, dir).generic_string() < fs::relative(b, dir).generic_string();
  });
  LoadedCorpus c;
  c.files = paths.size();
  for (const fs::path& p : paths) {
    try {
      for (FunctionSource& fn : extract_functions(tokenize(io::read_file(p)))) c.functions.push_back(std::move(fn));
    } catch (const LexError& e) {
      c.skipped.push_back(fs::relative(p, dir).generic_string() + ": " + e.what());
    } catch (const ParseError& e) {
      c.skipped.push_back(fs::relative(p, dir).generic_string() + ": " + e.what());
    }
  }
  return c;
}

LoadedCorpus load_pretokenized(const fs::path& path) {
  std::vector<fs::path> paths;
  if (fs::is_directory(path)) {
    for (const auto& e : fs::recursive_directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".jsonl") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
  } else if (fs::is_regular_file(path)) {
    paths.push_back(path);
  } else {
    throw IoError("pre-tokenized input not found: " + path.string());
  }
  LoadedCorpus c;
  c.files = paths.size();
  for (const fs::path& p : paths) {
    try {
      for (FunctionSource& fn : extract_functions(parse_pretokenized(io::read_file(p))))
        c.functions.push_back(std::move(fn));
    } catch (const ParseError& e) {
      c.skipped.push_back(p.string() + ": " + e.what());
    }
  }
  return c;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Joint bug localization and repair with pointer networks", "vmr"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  GenDataArgs g;
  auto* gen = app.add_subcommand("gen-data", "Build vocabulary and datasets from a corpus");
  gen->add_option("--corpus", g.corpus, "Directory of source files (*.py)");
  gen->add_option("--pretokenized", g.pretokenized, "Pre-tokenized JSONL file or directory");
  gen->add_option("--out", g.out, "Output directory")->required();
  gen->add_option("--seed", g.seed, "Random seed")->capture_default_str();
  gen->add_option("--max-tokens", g.max_tokens, "Maximum example length")->capture_default_str();
  gen->add_option("--vocab-size", g.vocab_size, "Maximum vocabulary size")->capture_default_str();
  gen->add_option("--train-fraction", g.train, "Share of functions for training")->capture_default_str();
  gen->add_option("--valid-fraction", g.valid, "Share of functions for validation")->capture_default_str();
  gen->add_option("--test-fraction", g.test, "Share of functions for testing")->capture_default_str();
  gen->add_option("--max-test-functions", g.max_test_functions, "Seeded cap on test functions (0: all)")
      ->capture_default_str();

  TrainArgs t;
  auto* train = app.add_subcommand("train", "Train the joint or repair-only model");
  train->add_option("--data", t.data, "Dataset directory from gen-data")->required();
  train->add_option("--out", t.out, "Output directory")->required();
  train->add_option("--model", t.model, "Model to train")->check(CLI::IsMember({"joint", "repair"}))->capture_default_str();
  train->add_option("--config", t.config_file, "JSON file with \"model\" and \"train\" sections");
  train->add_option("--seed", t.seed, "Random seed");
  train->add_option("--epochs", t.epochs, "Epoch limit");
  train->add_option("--batch-size", t.batch_size, "Examples per batch");
  train->add_option("--lr", t.lr, "Adam learning rate");
  train->add_option("--patience", t.patience, "Evaluations without improvement before stopping (0: off)");
  train->add_option("--eval-every", t.eval_every, "Validate every N steps (0: every epoch)");
  train->add_option("--time-budget", t.time_budget, "Wall-clock limit in seconds (0: none)");
  train->add_option("--embed-dim", t.embed_dim, "Embedding size d");
  train->add_option("--hidden-dim", t.hidden_dim, "LSTM hidden size h");
  train->add_option("--mask-mode", t.mask_mode, "none, hidden or logits")
      ->check(CLI::IsMember({"none", "hidden", "logits"}));
  train->add_option("--rep-loss", t.rep_loss, "sum-prob, sum-log or max-prob")
      ->check(CLI::IsMember({"sum-prob", "sum-log", "max-prob"}));
  train->add_option("--max-tokens", t.max_tokens, "Maximum sequence length");
  train->add_option("--train-limit", t.train_limit, "Use the first N training examples (0: all)");
  train->add_option("--valid-limit", t.valid_limit, "Use the first N validation examples (0: all)");
  t.app = train;

  EvalArgs e, en, ne;
  auto add_eval_common = [](CLI::App* sub, EvalArgs& a) {
    sub->add_option("--checkpoint", a.checkpoint, "Model checkpoint")->required();
    sub->add_option("--data", a.data, "Dataset directory from gen-data")->required();
    sub->add_option("--out", a.out, "Directory for CSV output and manifest");
    sub->add_option("--limit", a.limit, "Use the first N examples (0: all)");
  };
  auto* eval = app.add_subcommand("eval", "Evaluate the joint model");
  add_eval_common(eval, e);
  eval->add_option("--split", e.split, "Example split")->check(CLI::IsMember(kExampleSplits))->capture_default_str();
  eval->add_option("--theta", e.theta, "Optional location confidence threshold")->capture_default_str();

  auto* enumerate = app.add_subcommand("enum-eval", "Evaluate the enumerative repair-only baseline over a tau/k grid");
  add_eval_common(enumerate, en);
  enumerate->add_option("--split", en.split, "Example split")->check(CLI::IsMember(kExampleSplits))->capture_default_str();
  enumerate->add_option("--tau", en.taus, "Comma list of probability thresholds (default 0,0.2,0.3,0.5,0.7,0.9,0.99)");
  enumerate->add_option("--k", en.ks, "Comma list of scan limits or inf")->capture_default_str();

  auto* noise = app.add_subcommand("noise-exp", "Repair accuracy on clean versus noise-injected programs");
  add_eval_common(noise, ne);
  noise->add_option("--tau", ne.taus, "Comma list of probability thresholds (default 0,0.2,0.3,0.5,0.7,0.9,0.99)");

  InspectArgs in;
  auto* inspect = app.add_subcommand("inspect", "Print one example with its targets and, optionally, predictions");
  inspect->add_option("--data", in.data, "Dataset directory from gen-data")->required();
  inspect->add_option("--split", in.split, "Split or hole/noise set name")->capture_default_str();
  inspect->add_option("--index", in.index, "Example index")->capture_default_str();
  inspect->add_option("--checkpoint", in.checkpoint, "Show the model's distributions");

  auto synopsis = [&]() -> std::string {
    for (CLI::App* sub : app.get_subcommands()) return sub->help();
    return app.help();
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << synopsis();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n\n" << synopsis();
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return run_gen_data(g, out, err);
    if (train->parsed()) return run_train(t, out);
    if (eval->parsed()) return run_eval(e, out);
    if (enumerate->parsed()) return run_enum_eval(en, out);
    if (noise->parsed()) return run_noise_exp(ne, out);
    if (inspect->parsed()) return run_inspect(in, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << "\n\n" << synopsis();
    return kExitUsage;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitError;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitError;
  }
  err << app.help();
  return kExitUsage;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"vmr"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace vmr::cli
