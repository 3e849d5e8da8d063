#pragma once

// Deterministic training loop for the joint model and the repair-only model:
// seeded shuffles, per-batch mean loss, Adam, periodic validation with
// patience-based early stopping, and best-checkpoint retention.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vmr/checkpoint.hpp"
#include "vmr/datagen.hpp"
#include "vmr/model.hpp"

namespace vmr {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  ad::AdamConfig adam;
  std::uint64_t seed = 0;
  /// Evaluations without improvement before stopping; 0 disables.
  std::size_t patience = 5;
  /// Validate every this many steps; 0 validates at the end of each epoch.
  std::size_t eval_every = 0;
  ModelKind kind = ModelKind::Joint;
  /// Wall-clock budget in seconds, checked between steps; 0 is unbounded.
  double time_budget_seconds = 0.0;

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  /// Throws ConfigError.
  static TrainConfig from_json(const nlohmann::json& j);
};

struct LogRow {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean over steps since the previous row
  std::optional<double> valid_loss;
  std::optional<double> valid_metric;
};

/// CSV with columns step,epoch,train_loss,valid_loss,valid_metric; losses
/// are printed with round-trip precision.
std::string log_csv(const std::vector<LogRow>& log);

struct EpochEnd {
  std::size_t epoch = 0;  // 1-based
  std::size_t steps = 0;
  double mean_loss = 0.0;
  const ModelParams* params = nullptr;
};
/// Called after every epoch; returning true stops training.
using EpochCallback = std::function<bool(const EpochEnd&)>;

struct TrainResult {
  Checkpoint best;  // highest validation metric (ties: lower loss); final state without validation data
  Checkpoint last;
  std::vector<double> step_losses;
  std::vector<LogRow> log;
  std::size_t steps = 0;
  std::size_t epochs_run = 0;
  std::string stop_reason;  // "epochs", "patience", "time budget" or "callback"
};

/// Throws EmptyPartition (no training data), DatasetModelMismatch (wrong
/// model kind, token id outside the vocabulary, sequence over max_tokens),
/// NonFiniteLoss (message lists the batch's function ids).
TrainResult train_joint(const std::vector<Example>& train, const std::vector<Example>& valid,
                        const ModelConfig& model, const TrainConfig& config, const std::string& vocab_hash,
                        const EpochCallback& on_epoch = {});
TrainResult train_repair(const std::vector<HoleExample>& train, const std::vector<HoleExample>& valid,
                         const ModelConfig& model, const TrainConfig& config, const std::string& vocab_hash,
                         const EpochCallback& on_epoch = {});

/// Mean loss over a set under frozen parameters.
double mean_joint_loss(const ModelParams& params, const ModelConfig& config, const std::vector<Example>& data);
double mean_repair_loss(const ModelParams& params, const ModelConfig& config, const std::vector<HoleExample>& data);

/// Localization+repair accuracy over the buggy examples of `data`.
double joint_accuracy(const ModelParams& params, const ModelConfig& config, const std::vector<Example>& data);

}  // namespace vmr
