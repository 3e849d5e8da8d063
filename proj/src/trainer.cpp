#include "vmr/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numeric>
#include <random>

#include "vmr/error.hpp"
#include "vmr/eval.hpp"

namespace vmr {
namespace {

const Example& base(const Example& e) { return e; }
const Example& base(const HoleExample& e) { return e.example; }

ad::Var example_loss(const BoundParams& p, const Example& e, const ModelConfig& c) { return joint_loss(p, e, c); }
ad::Var example_loss(const BoundParams& p, const HoleExample& e, const ModelConfig& c) {
  return repair_loss(p, e, c);
}

void check_example(const Example& ex, const ModelConfig& model, bool expect_hole, std::size_t i) {
  const std::string where = "example " + std::to_string(i) + " (" + ex.function_id + ")";
  if (ex.token_ids.size() != ex.raw_tokens.size()) throw DatasetModelMismatch(where + " is not encoded");
  if (ex.size() > model.max_tokens)
    throw DatasetModelMismatch(where + " has " + std::to_string(ex.size()) + " tokens, over max_tokens " +
                               std::to_string(model.max_tokens));
  std::size_t holes = 0;
  for (std::int32_t id : ex.token_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.vocab_size)
      throw DatasetModelMismatch(where + " has token id " + std::to_string(id) + " outside vocabulary of size " +
                                 std::to_string(model.vocab_size));
    holes += id == Vocab::kHole;
  }
  if (expect_hole && holes != 1) throw DatasetModelMismatch(where + " is not a hole example; the repair model needs one");
  if (!expect_hole && holes != 0) throw DatasetModelMismatch(where + " is a hole example; the joint model needs programs");
}

template <typename E>
void check_dataset(const std::vector<E>& data, const ModelConfig& model) {
  constexpr bool hole = std::is_same_v<E, HoleExample>;
  for (std::size_t i = 0; i < data.size(); ++i) check_example(base(data[i]), model, hole, i);
}

template <typename E>
double mean_loss(const ModelParams& params, const ModelConfig& config, const std::vector<E>& data) {
  if (data.empty()) throw EmptyPartition("no examples for the loss");
  double total = 0.0;
  for (const E& e : data) {
    ad::Tape tape;
    total += example_loss(bind_frozen(tape, params), e, config).item();
  }
  return total / static_cast<double>(data.size());
}

double validation_metric(const ModelParams& p, const ModelConfig& c, const std::vector<Example>& valid) {
  return joint_accuracy(p, c, valid);
}

double validation_metric(const ModelParams& p, const ModelConfig& c, const std::vector<HoleExample>& valid) {
  std::vector<RepairAnswer> answers;
  answers.reserve(valid.size());
  for (const HoleExample& h : valid) answers.push_back(predict_repair(p, c, h));
  return repair_accuracy(answers, 0.0);
}

// Fisher-Yates over mt19937_64 output, independent of the standard
// library's shuffle and distribution implementations.
void shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
}

template <typename E>
TrainResult train_impl(const std::vector<E>& train, const std::vector<E>& valid, const ModelConfig& model,
                       const TrainConfig& config, const std::string& vocab_hash, const EpochCallback& on_epoch) {
  model.validate();
  config.validate();
  constexpr ModelKind kind = std::is_same_v<E, HoleExample> ? ModelKind::RepairOnly : ModelKind::Joint;
  if (config.kind != kind)
    throw DatasetModelMismatch(std::string("training config asks for the ") + std::string(to_string(config.kind)) +
                               " model but the data is for the " + std::string(to_string(kind)) + " model");
  if (train.empty()) throw EmptyPartition("training partition is empty");
  check_dataset(train, model);
  check_dataset(valid, model);

  const auto started = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count(); };

  TrainResult result;
  Checkpoint state{kind, model, vocab_hash, init_params(model, config.seed), config.adam, {}};
  auto params = state.params.tensors();
  std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                   std::uint32_t{0x53485546}};  // shuffle stream tag
  std::mt19937_64 rng(seq);
  result.best = state;
  result.stop_reason = "epochs";

  std::optional<std::pair<double, double>> best_score;  // (metric, -loss)
  std::size_t since_improvement = 0;
  double pending_loss = 0.0;
  std::size_t pending_steps = 0;
  std::size_t epoch = 0;

  // Returns true when patience is exhausted.
  auto evaluate = [&]() -> bool {
    LogRow row;
    row.step = result.steps;
    row.epoch = epoch;
    row.train_loss = pending_steps ? pending_loss / static_cast<double>(pending_steps) : 0.0;
    pending_loss = 0.0;
    pending_steps = 0;
    if (valid.empty()) {
      result.log.push_back(row);
      return false;
    }
    row.valid_loss = mean_loss(state.params, model, valid);
    row.valid_metric = validation_metric(state.params, model, valid);
    result.log.push_back(row);
    const std::pair<double, double> score{*row.valid_metric, -*row.valid_loss};
    if (!best_score || score > *best_score) {
      best_score = score;
      result.best = state;
      since_improvement = 0;
      return false;
    }
    return config.patience > 0 && ++since_improvement >= config.patience;
  };

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  bool stop = false;
  while (!stop && epoch < config.epochs) {
    ++epoch;
    shuffle(order, rng);
    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t start = 0; start < order.size() && !stop; start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (ad::Tensor* t : params) t->zero_grad();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        ad::Tape tape;
        const ad::Var loss = ad::scale(example_loss(bind_params(tape, state.params), train[order[i]], model), inv);
        batch_loss += loss.item();
        tape.backward(loss);
      }
      bool finite = std::isfinite(batch_loss);
      for (const ad::Tensor* t : params)
        for (double g : t->grad()) finite = finite && std::isfinite(g);
      if (!finite) {
        std::string ids;
        for (std::size_t i = start; i < end; ++i) ids += (i > start ? "," : "") + base(train[order[i]]).function_id;
        throw NonFiniteLoss("non-finite loss or gradient at step " + std::to_string(result.steps + 1) +
                            "; batch function ids: " + ids);
      }
      ad::adam_step(params, state.optimizer, config.adam);
      ++result.steps;
      result.step_losses.push_back(batch_loss);
      epoch_loss += batch_loss;
      ++epoch_steps;
      pending_loss += batch_loss;
      ++pending_steps;
      if (config.eval_every > 0 && result.steps % config.eval_every == 0 && evaluate()) {
        stop = true;
        result.stop_reason = "patience";
      }
      if (!stop && config.time_budget_seconds > 0 && elapsed() >= config.time_budget_seconds) {
        stop = true;
        result.stop_reason = "time budget";
      }
    }
    if (!stop && config.eval_every == 0 && evaluate()) {
      stop = true;
      result.stop_reason = "patience";
    }
    result.epochs_run = epoch;
    if (!stop && on_epoch &&
        on_epoch({epoch, result.steps, epoch_steps ? epoch_loss / static_cast<double>(epoch_steps) : 0.0,
                  &state.params})) {
      stop = true;
      result.stop_reason = "callback";
    }
  }
  for (ad::Tensor* t : params) t->clear_grad();
  if (pending_steps > 0) {
    evaluate();
  }
  result.last = state;
  if (!best_score) result.best = state;
  for (ad::Tensor* t : result.best.params.tensors()) t->clear_grad();
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(adam.lr > 0) || !(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1) ||
      !(adam.eps > 0))
    throw ConfigError("Adam needs lr > 0, betas in [0, 1) and eps > 0");
  if (time_budget_seconds < 0) throw ConfigError("time budget must be non-negative");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size}, {"epochs", epochs},         {"lr", adam.lr},
          {"beta1", adam.beta1},      {"beta2", adam.beta2},      {"eps", adam.eps},
          {"seed", seed},             {"patience", patience},     {"eval_every", eval_every},
          {"model", to_string(kind)}, {"time_budget_seconds", time_budget_seconds}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.adam.lr = j.value("lr", c.adam.lr);
    c.adam.beta1 = j.value("beta1", c.adam.beta1);
    c.adam.beta2 = j.value("beta2", c.adam.beta2);
    c.adam.eps = j.value("eps", c.adam.eps);
    c.seed = j.value("seed", c.seed);
    c.patience = j.value("patience", c.patience);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.kind = model_kind_from_string(j.value("model", std::string(to_string(c.kind))));
    c.time_budget_seconds = j.value("time_budget_seconds", c.time_budget_seconds);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad training config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string log_csv(const std::vector<LogRow>& log) {
  std::string out = "step,epoch,train_loss,valid_loss,valid_metric\n";
  char buf[160];
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", *v);
    return std::string(b);
  };
  for (const LogRow& r : log) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,", r.step, r.epoch, r.train_loss);
    out += buf + opt(r.valid_loss) + "," + opt(r.valid_metric) + "\n";
  }
  return out;
}

TrainResult train_joint(const std::vector<Example>& train, const std::vector<Example>& valid, const ModelConfig& model,
                        const TrainConfig& config, const std::string& vocab_hash, const EpochCallback& on_epoch) {
  return train_impl(train, valid, model, config, vocab_hash, on_epoch);
}

TrainResult train_repair(const std::vector<HoleExample>& train, const std::vector<HoleExample>& valid,
                         const ModelConfig& model, const TrainConfig& config, const std::string& vocab_hash,
                         const EpochCallback& on_epoch) {
  return train_impl(train, valid, model, config, vocab_hash, on_epoch);
}

double mean_joint_loss(const ModelParams& params, const ModelConfig& config, const std::vector<Example>& data) {
  return mean_loss(params, config, data);
}

double mean_repair_loss(const ModelParams& params, const ModelConfig& config, const std::vector<HoleExample>& data) {
  return mean_loss(params, config, data);
}

double joint_accuracy(const ModelParams& params, const ModelConfig& config, const std::vector<Example>& data) {
  if (data.empty()) throw EmptyPartition("no examples for accuracy");
  std::size_t buggy = 0, hits = 0;
  for (const Example& ex : data) {
    if (!ex.is_buggy) continue;
    ++buggy;
    const Prediction p = predict_joint(params, config, ex);
    hits += p.buggy && p.loc_index == ex.bug_index && p.repair_name == ex.original_var;
  }
  return buggy ? static_cast<double>(hits) / static_cast<double>(buggy) : 0.0;
}

}  // namespace vmr
