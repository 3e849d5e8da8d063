#include "vmr/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include "vmr/error.hpp"

namespace vmr {
namespace {

double ratio(std::size_t num, std::size_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / den; }

Prediction modifying_prediction(const SlotPrediction& s) {
  Prediction p;
  p.buggy = true;
  p.loc_index = s.slot_index;
  p.repair_name = s.predicted;
  p.loc_prob = s.prob;
  p.rep_prob = s.prob;
  return p;
}

// Strict weak order: higher probability first, then lower slot index.
bool ranks_before(const SlotPrediction& a, const SlotPrediction& b) {
  if (a.prob != b.prob) return a.prob > b.prob;
  return a.slot_index < b.slot_index;
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::size_t masked_argmax(std::span<const double> dist, std::span<const std::uint8_t> mask) {
  if (dist.empty()) throw IndexOutOfRange("argmax of an empty distribution");
  if (mask.size() != dist.size())
    throw ShapeMismatch("mask of length " + std::to_string(mask.size()) + " for distribution of " +
                        std::to_string(dist.size()));
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < dist.size(); ++i)
    if (mask[i] && (!best || dist[i] > dist[*best])) best = i;
  return best ? *best : argmax(dist);
}

// ---- joint model ----

Prediction decide_joint(const PointerOutput& out, const Example& example, double theta) {
  Prediction p;
  const std::size_t j = argmax(out.loc_dist);
  p.loc_prob = out.loc_dist[j];
  if (j == 0 || (theta > 0.0 && p.loc_prob < theta)) return p;
  const std::size_t r = masked_argmax(out.rep_dist, example.mask);
  p.buggy = true;
  p.loc_index = j;
  p.repair_name = example.raw_tokens.at(r);
  p.rep_prob = out.rep_dist[r];
  return p;
}

Prediction predict_joint(const ModelParams& params, const ModelConfig& config, const Example& example,
                         double theta) {
  return decide_joint(forward_joint(params, config, example), example, theta);
}

// ---- enumerative baseline ----

std::vector<SlotPrediction> predict_slots(const ModelParams& params, const ModelConfig& config,
                                          const Example& example, std::size_t* calls) {
  std::vector<SlotPrediction> out;
  out.reserve(example.slot_positions.size());
  for (std::size_t pos : example.slot_positions) {
    const HoleExample hole = make_hole_variant(example, pos);
    const std::vector<double> rep = forward_repair_only(params, config, hole);
    if (calls) ++*calls;
    const std::size_t r = masked_argmax(rep, hole.example.mask);
    out.push_back({pos, example.raw_tokens[pos], hole.example.raw_tokens[r], rep[r]});
  }
  return out;
}

Prediction decide_enumerative(std::span<const SlotPrediction> slots, double tau, std::optional<std::size_t> k) {
  std::vector<SlotPrediction> kept;
  for (const SlotPrediction& s : slots)
    if (s.prob >= tau) kept.push_back(s);
  std::sort(kept.begin(), kept.end(), ranks_before);
  const std::size_t limit = k ? std::min(*k, kept.size()) : kept.size();
  for (std::size_t i = 0; i < limit; ++i)
    if (kept[i].predicted != kept[i].original) return modifying_prediction(kept[i]);
  return Prediction{};
}

Prediction decide_threshold(std::span<const SlotPrediction> slots, double tau) {
  const SlotPrediction* best = nullptr;
  for (const SlotPrediction& s : slots) {
    if (s.prob < tau || s.predicted == s.original) continue;
    if (!best || ranks_before(s, *best)) best = &s;
  }
  return best ? modifying_prediction(*best) : Prediction{};
}

Prediction predict_enumerative(const ModelParams& params, const ModelConfig& config, const Example& example,
                               double tau, std::optional<std::size_t> k, std::size_t* calls) {
  const auto slots = predict_slots(params, config, example, calls);
  return decide_enumerative(slots, tau, k);
}

// ---- metrics ----

double Metrics::true_positive_rate() const { return ratio(true_positives, bug_free); }
double Metrics::classification_accuracy() const { return ratio(correct_class, total); }
double Metrics::localization_accuracy() const { return ratio(localized, buggy); }
double Metrics::loc_repair_accuracy() const { return ratio(localized_repaired, buggy); }

Metrics compute_metrics(std::span<const Prediction> predictions, std::span<const Example> truth) {
  if (truth.empty()) throw EmptyPartition("no examples to evaluate");
  if (predictions.size() != truth.size())
    throw PairingError(std::to_string(predictions.size()) + " predictions for " + std::to_string(truth.size()) +
                       " examples");
  Metrics m;
  m.total = truth.size();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const Prediction& p = predictions[i];
    const Example& t = truth[i];
    if (!t.is_buggy) {
      ++m.bug_free;
      if (!p.buggy) {
        ++m.true_positives;
        ++m.correct_class;
      }
      continue;
    }
    ++m.buggy;
    if (!p.buggy) continue;
    ++m.correct_class;
    if (p.loc_index != t.bug_index) continue;
    ++m.localized;
    if (p.repair_name == t.original_var) ++m.localized_repaired;
  }
  return m;
}

JointEvaluation evaluate_joint(const ModelParams& params, const ModelConfig& config, std::span<const Example> test,
                               double theta) {
  JointEvaluation ev;
  ev.predictions.reserve(test.size());
  for (const Example& ex : test) ev.predictions.push_back(predict_joint(params, config, ex, theta));
  ev.metrics = compute_metrics(ev.predictions, test);
  return ev;
}

std::vector<GridRow> evaluate_enumerative_grid(const ModelParams& params, const ModelConfig& config,
                                               std::span<const Example> test, std::span<const double> taus,
                                               std::span<const std::optional<std::size_t>> ks, std::size_t* calls) {
  if (test.empty()) throw EmptyPartition("no examples to evaluate");
  std::vector<std::vector<SlotPrediction>> slots;
  slots.reserve(test.size());
  for (const Example& ex : test) slots.push_back(predict_slots(params, config, ex, calls));
  std::vector<GridRow> rows;
  for (double tau : taus) {
    for (const auto& k : ks) {
      GridRow row;
      row.tau = tau;
      row.k = k;
      for (const auto& s : slots) row.predictions.push_back(decide_enumerative(s, tau, k));
      row.metrics = compute_metrics(row.predictions, test);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---- repair accuracy and noise ----

RepairAnswer predict_repair(const ModelParams& params, const ModelConfig& config, const HoleExample& example) {
  const std::vector<double> rep = forward_repair_only(params, config, example);
  RepairAnswer a;
  a.index = masked_argmax(rep, example.example.mask);
  a.prob = rep[a.index];
  a.correct = example.example.rep_target.at(a.index) == 1;
  return a;
}

double repair_accuracy(std::span<const RepairAnswer> answers, double tau) {
  if (answers.empty()) throw EmptyPartition("no repair examples");
  std::size_t hits = 0;
  for (const RepairAnswer& a : answers) hits += a.correct && a.prob >= tau;
  return ratio(hits, answers.size());
}

std::vector<NoiseRow> run_noise_experiment(const ModelParams& params, const ModelConfig& config,
                                           std::span<const HoleExample> clean, std::span<const HoleExample> noisy,
                                           std::span<const double> taus) {
  if (clean.size() != noisy.size())
    throw PairingError(std::to_string(clean.size()) + " clean examples against " + std::to_string(noisy.size()) +
                       " noisy ones");
  for (std::size_t i = 0; i < clean.size(); ++i)
    if (clean[i].example.function_id != noisy[i].example.function_id || clean[i].slot_index != noisy[i].slot_index)
      throw PairingError("pair " + std::to_string(i) + " refers to different functions or slots");
  if (clean.empty()) throw EmptyPartition("no noise pairs");
  std::vector<RepairAnswer> a, b;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    a.push_back(predict_repair(params, config, clean[i]));
    b.push_back(predict_repair(params, config, noisy[i]));
  }
  std::vector<NoiseRow> rows;
  for (double tau : taus) rows.push_back({tau, repair_accuracy(a, tau), repair_accuracy(b, tau)});
  return rows;
}

// ---- reports ----

std::string format_k(std::optional<std::size_t> k) { return k ? std::to_string(*k) : "inf"; }

std::optional<std::size_t> parse_k(std::string_view text) {
  if (text == "inf") return std::nullopt;
  std::size_t k = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), k);
  if (ec != std::errc() || ptr != text.data() + text.size() || k == 0)
    throw ConfigError("k must be a positive integer or 'inf', got '" + std::string(text) + "'");
  return k;
}

std::string format_metrics_table(std::span<const MetricsRow> rows) {
  std::size_t width = 5;
  for (const MetricsRow& r : rows) width = std::max(width, r.label.size());
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  std::string out = pad("Model", width) + "  True Pos.  Classif.  Loc.    Loc+Rep.  (n)\n";
  out += std::string(width + 46, '-') + "\n";
  for (const MetricsRow& r : rows) {
    const Metrics& m = r.metrics;
    out += pad(r.label, width) + "  " + pad(fixed(100 * m.true_positive_rate(), 1) + "%", 9) + "  " +
           pad(fixed(100 * m.classification_accuracy(), 1) + "%", 8) + "  " +
           pad(fixed(100 * m.localization_accuracy(), 1) + "%", 6) + "  " +
           pad(fixed(100 * m.loc_repair_accuracy(), 1) + "%", 8) + "  " + std::to_string(m.total) + "\n";
  }
  return out;
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::string out =
      "label,total,bug_free,buggy,true_positives,correct_class,localized,localized_repaired,"
      "true_positive_rate,classification_accuracy,localization_accuracy,loc_repair_accuracy\n";
  for (const MetricsRow& r : rows) {
    const Metrics& m = r.metrics;
    out += r.label + "," + std::to_string(m.total) + "," + std::to_string(m.bug_free) + "," +
           std::to_string(m.buggy) + "," + std::to_string(m.true_positives) + "," + std::to_string(m.correct_class) +
           "," + std::to_string(m.localized) + "," + std::to_string(m.localized_repaired) + "," +
           fixed(m.true_positive_rate(), 6) + "," + fixed(m.classification_accuracy(), 6) + "," +
           fixed(m.localization_accuracy(), 6) + "," + fixed(m.loc_repair_accuracy(), 6) + "\n";
  }
  return out;
}

std::string noise_csv(std::span<const NoiseRow> rows) {
  std::string out = "tau,clean,noisy,drop\n";
  for (const NoiseRow& r : rows)
    out += fixed(r.tau, 4) + "," + fixed(r.clean, 6) + "," + fixed(r.noisy, 6) + "," + fixed(r.drop(), 6) + "\n";
  return out;
}

}  // namespace vmr
