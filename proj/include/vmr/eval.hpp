#pragma once

// Evaluation: joint-model predictions, the enumerative baseline decision
// procedure (probability threshold tau, at most k scanned predictions), the
// four accuracy metrics, and the slot-placement noise experiment.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vmr/datagen.hpp"
#include "vmr/model.hpp"

namespace vmr {

struct Prediction {
  bool buggy = false;
  std::size_t loc_index = 0;
  std::string repair_name;
  double loc_prob = 0.0;
  double rep_prob = 0.0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Argmax restricted to positions whose mask bit is set (all positions when
/// the mask is empty of ones); ties go to the lowest index.
std::size_t masked_argmax(std::span<const double> dist, std::span<const std::uint8_t> mask);

/// Classification by pointing: location argmax 0 means bug-free. With
/// theta > 0 a BUGGY verdict also needs loc_prob >= theta.
Prediction decide_joint(const PointerOutput& out, const Example& example, double theta = 0.0);
Prediction predict_joint(const ModelParams& params, const ModelConfig& config, const Example& example,
                         double theta = 0.0);

/// The repair model's answer for one hole-ified slot.
struct SlotPrediction {
  std::size_t slot_index = 0;
  std::string original;
  std::string predicted;
  double prob = 0.0;

  friend bool operator==(const SlotPrediction&, const SlotPrediction&) = default;
};

/// One repair-model call per slot of `example`; increments *calls per call.
std::vector<SlotPrediction> predict_slots(const ModelParams& params, const ModelConfig& config,
                                          const Example& example, std::size_t* calls = nullptr);

/// Filters prob < tau, sorts by probability (ties: lower slot index), scans
/// at most k entries (nullopt: all) and reports the first that changes the
/// program.
Prediction decide_enumerative(std::span<const SlotPrediction> slots, double tau, std::optional<std::size_t> k);
/// Independent threshold-only path: the highest-probability modifying
/// prediction with prob >= tau. Equal to decide_enumerative(.., tau, nullopt).
Prediction decide_threshold(std::span<const SlotPrediction> slots, double tau);
Prediction predict_enumerative(const ModelParams& params, const ModelConfig& config, const Example& example,
                               double tau, std::optional<std::size_t> k, std::size_t* calls = nullptr);

struct Metrics {
  std::size_t total = 0;
  std::size_t bug_free = 0;
  std::size_t buggy = 0;
  std::size_t true_positives = 0;  // bug-free classified bug-free
  std::size_t correct_class = 0;
  std::size_t localized = 0;
  std::size_t localized_repaired = 0;

  double true_positive_rate() const;
  double classification_accuracy() const;
  double localization_accuracy() const;
  double loc_repair_accuracy() const;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Throws EmptyPartition, PairingError (length mismatch).
Metrics compute_metrics(std::span<const Prediction> predictions, std::span<const Example> truth);

struct JointEvaluation {
  std::vector<Prediction> predictions;
  Metrics metrics;
};
JointEvaluation evaluate_joint(const ModelParams& params, const ModelConfig& config, std::span<const Example> test,
                               double theta = 0.0);

struct GridRow {
  double tau = 0.0;
  std::optional<std::size_t> k;
  std::vector<Prediction> predictions;
  Metrics metrics;
};
/// Slot predictions are computed once per example and shared by every
/// (tau, k) cell; rows follow tau-major order.
std::vector<GridRow> evaluate_enumerative_grid(const ModelParams& params, const ModelConfig& config,
                                               std::span<const Example> test, std::span<const double> taus,
                                               std::span<const std::optional<std::size_t>> ks,
                                               std::size_t* calls = nullptr);

/// Top repair (masked argmax) for a hole example.
struct RepairAnswer {
  std::size_t index = 0;
  double prob = 0.0;
  bool correct = false;  // any mention of the target counts
};
RepairAnswer predict_repair(const ModelParams& params, const ModelConfig& config, const HoleExample& example);

/// Fraction of examples whose top repair is correct with prob >= tau.
/// Throws EmptyPartition.
double repair_accuracy(std::span<const RepairAnswer> answers, double tau);

struct NoiseRow {
  double tau = 0.0;
  double clean = 0.0;
  double noisy = 0.0;
  double drop() const { return clean - noisy; }
};
/// Throws PairingError when the sets differ in length, function or slot;
/// EmptyPartition when they are empty.
std::vector<NoiseRow> run_noise_experiment(const ModelParams& params, const ModelConfig& config,
                                           std::span<const HoleExample> clean, std::span<const HoleExample> noisy,
                                           std::span<const double> taus);

// ---- reports ----

std::string format_k(std::optional<std::size_t> k);
/// Throws ConfigError.
std::optional<std::size_t> parse_k(std::string_view text);

struct MetricsRow {
  std::string label;
  Metrics metrics;
};
/// Text table with the four rate columns.
std::string format_metrics_table(std::span<const MetricsRow> rows);
std::string metrics_csv(std::span<const MetricsRow> rows);
std::string noise_csv(std::span<const NoiseRow> rows);

}  // namespace vmr
