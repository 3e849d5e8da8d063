#include "vmr/eval.hpp"

#include <gtest/gtest.h>

#include <random>

#include "metrics_oracle.hpp"
#include "vmr/error.hpp"
#include "vmr/frontend.hpp"
#include "vmr/toy_corpus.hpp"

using namespace vmr;

namespace {

Example labelled(bool buggy, std::size_t bug_index = 0, const std::string& original = "") {
  Example ex;
  ex.raw_tokens = {"<NO_FAULT>", "x", "=", "y"};
  ex.mask = {0, 1, 0, 1};
  ex.is_buggy = buggy;
  if (buggy) {
    ex.bug_index = bug_index;
    ex.original_var = original;
  }
  return ex;
}

Prediction buggy_at(std::size_t loc, const std::string& name) {
  Prediction p;
  p.buggy = true;
  p.loc_index = loc;
  p.repair_name = name;
  return p;
}

std::vector<SlotPrediction> random_slots(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(0, 6), name(0, 2), coarse(0, 10);
  std::vector<SlotPrediction> slots;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const std::string orig(1, static_cast<char>('a' + name(rng)));
    const std::string pred(1, static_cast<char>('a' + name(rng)));
    // Coarse probabilities make exact ties common.
    slots.push_back({static_cast<std::size_t>(2 * i + 1), orig, pred, coarse(rng) / 10.0});
  }
  return slots;
}

struct Trained {
  ModelConfig config;
  ModelParams params;
  std::vector<Example> test;
  NoiseSets noise;
};

const Trained& fixture() {
  static const Trained t = [] {
    ToyCorpusConfig cc;
    cc.files = 6;
    cc.seed = 11;
    std::vector<FunctionSource> corpus;
    for (const std::string& src : generate_toy_corpus(cc))
      for (FunctionSource& fn : extract_functions(tokenize(src))) corpus.push_back(std::move(fn));
    const Vocab vocab = build_vocab(corpus, 200);
    DatasetConfig dc;
    dc.max_tokens = 80;
    dc.train_fraction = 0.4;
    dc.valid_fraction = 0.1;
    dc.test_fraction = 0.5;
    Trained out;
    const Dataset ds = generate_dataset(corpus, vocab, dc, 5);
    out.test = ds.test;
    out.noise = generate_noise_sets(ds.test, vocab, dc, 5);
    out.config.vocab_size = vocab.size();
    out.config.embed_dim = 8;
    out.config.hidden_dim = 16;
    out.config.max_tokens = 80;
    out.params = init_params(out.config, 2);
    return out;
  }();
  return t;
}

}  // namespace

// ---- joint decisions ----

TEST(DecideJoint, PeakAtNoFaultIsBugFree) {
  const Example ex = labelled(false);
  const Prediction p = decide_joint({{0.7, 0.1, 0.1, 0.1}, {0.25, 0.25, 0.25, 0.25}}, ex);
  EXPECT_FALSE(p.buggy);
  EXPECT_DOUBLE_EQ(p.loc_prob, 0.7);
}

TEST(DecideJoint, PointsAtLocationAndMaskedRepair) {
  Example ex;
  ex.raw_tokens = {"<NO_FAULT>", "def", "f", "(", "page", ")", ":", "x", "=", "page"};
  ex.mask = {0, 0, 0, 0, 1, 0, 0, 1, 0, 1};
  std::vector<double> loc(10, 0.02), rep(10, 0.0);
  loc[7] = 0.82;
  rep[2] = 0.5;  // unmasked, must be ignored
  rep[4] = 0.337;
  rep[7] = 0.163;
  const Prediction p = decide_joint({loc, rep}, ex);
  ASSERT_TRUE(p.buggy);
  EXPECT_EQ(p.loc_index, 7u);
  EXPECT_EQ(p.repair_name, "page");
  EXPECT_DOUBLE_EQ(p.rep_prob, 0.337);
}

TEST(DecideJoint, TieWithNoFaultGoesToLowestIndex) {
  const Example ex = labelled(false);
  EXPECT_FALSE(decide_joint({{0.4, 0.1, 0.1, 0.4}, {0, 0.5, 0, 0.5}}, ex).buggy);
}

TEST(DecideJoint, ConfidenceThresholdIsOptIn) {
  const Example ex = labelled(false);
  const PointerOutput out{{0.2, 0.3, 0.2, 0.3}, {0, 0.6, 0, 0.4}};
  EXPECT_TRUE(decide_joint(out, ex).buggy);
  EXPECT_FALSE(decide_joint(out, ex, 0.5).buggy);
}

TEST(MaskedArgmax, RestrictsAndBreaksTies) {
  const std::vector<double> d{0.1, 0.4, 0.4, 0.1};
  EXPECT_EQ(masked_argmax(d, std::vector<std::uint8_t>{1, 0, 0, 1}), 0u);
  EXPECT_EQ(masked_argmax(d, std::vector<std::uint8_t>{0, 1, 1, 0}), 1u);
  EXPECT_EQ(masked_argmax(d, std::vector<std::uint8_t>{0, 0, 0, 0}), 1u);
  EXPECT_THROW(masked_argmax(d, std::vector<std::uint8_t>{1}), ShapeMismatch);
}

// ---- enumerative decisions ----

TEST(DecideEnumerative, AllOriginalIsBugFree) {
  const std::vector<SlotPrediction> s{{1, "a", "a", 0.9}, {2, "b", "b", 0.4}};
  EXPECT_FALSE(decide_enumerative(s, 0.0, std::nullopt).buggy);
}

TEST(DecideEnumerative, ScanReportsFirstModifyingPrediction) {
  const std::vector<SlotPrediction> s{{1, "a", "a", 0.9}, {2, "b", "c", 0.6}};
  const Prediction p = decide_enumerative(s, 0.5, std::nullopt);
  ASSERT_TRUE(p.buggy);
  EXPECT_EQ(p.loc_index, 2u);
  EXPECT_EQ(p.repair_name, "c");
  EXPECT_FALSE(decide_enumerative(s, 0.7, std::nullopt).buggy);
}

TEST(DecideEnumerative, KLimitsTheScan) {
  const std::vector<SlotPrediction> s{{1, "a", "a", 0.9}, {2, "b", "c", 0.6}};
  EXPECT_FALSE(decide_enumerative(s, 0.0, 1).buggy);
  EXPECT_TRUE(decide_enumerative(s, 0.0, 2).buggy);
}

TEST(DecideEnumerative, EqualProbabilitiesPreferLowerSlot) {
  const std::vector<SlotPrediction> s{{9, "b", "c", 0.5}, {3, "a", "d", 0.5}};
  EXPECT_EQ(decide_enumerative(s, 0.0, std::nullopt).loc_index, 3u);
  EXPECT_EQ(decide_threshold(s, 0.0).loc_index, 3u);
}

TEST(DecideEnumerativeProperty, UnboundedKEqualsThresholdPath) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto s = random_slots(rng);
    for (double tau : {0.0, 0.2, 0.5, 0.9})
      ASSERT_EQ(decide_enumerative(s, tau, std::nullopt), decide_threshold(s, tau));
  }
}

TEST(DecideEnumerativeProperty, RaisingTauOnlyRemovesBuggyVerdicts) {
  std::mt19937_64 rng(2);
  const std::vector<double> taus{0, 0.2, 0.3, 0.5, 0.7, 0.9, 0.99};
  for (int trial = 0; trial < 2000; ++trial) {
    const auto s = random_slots(rng);
    for (std::size_t i = 1; i < taus.size(); ++i) {
      const Prediction hi = decide_enumerative(s, taus[i], std::nullopt);
      const Prediction lo = decide_enumerative(s, taus[i - 1], std::nullopt);
      if (hi.buggy) {
        ASSERT_EQ(hi, lo);
      }
    }
  }
}

TEST(DecideEnumerativeProperty, KOneConsidersOnlyTheTopEntry) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto s = random_slots(rng);
    const Prediction p = decide_enumerative(s, 0.0, 1);
    if (s.empty()) {
      ASSERT_FALSE(p.buggy);
      continue;
    }
    const SlotPrediction* top = &s[0];
    for (const auto& x : s)
      if (x.prob > top->prob || (x.prob == top->prob && x.slot_index < top->slot_index)) top = &x;
    ASSERT_EQ(p.buggy, top->predicted != top->original);
    if (p.buggy) {
      ASSERT_EQ(p.loc_index, top->slot_index);
    }
  }
}

// ---- metrics ----

TEST(ComputeMetrics, AllCorrectGivesOnes) {
  const std::vector<Example> t{labelled(false), labelled(false), labelled(true, 1, "y"), labelled(true, 3, "x")};
  const std::vector<Prediction> p{{}, {}, buggy_at(1, "y"), buggy_at(3, "x")};
  const Metrics m = compute_metrics(p, t);
  EXPECT_EQ(m.true_positive_rate(), 1.0);
  EXPECT_EQ(m.classification_accuracy(), 1.0);
  EXPECT_EQ(m.localization_accuracy(), 1.0);
  EXPECT_EQ(m.loc_repair_accuracy(), 1.0);
}

TEST(ComputeMetrics, WrongRepairCountsOnlyTowardLocalization) {
  const std::vector<Example> t{labelled(true, 1, "y")};
  const Metrics m = compute_metrics(std::vector<Prediction>{buggy_at(1, "x")}, t);
  EXPECT_EQ(m.localization_accuracy(), 1.0);
  EXPECT_EQ(m.loc_repair_accuracy(), 0.0);
}

TEST(ComputeMetrics, AllBugFreeOnBalancedData) {
  const std::vector<Example> t{labelled(false), labelled(true, 1, "y"), labelled(false), labelled(true, 3, "x")};
  const Metrics m = compute_metrics(std::vector<Prediction>(4), t);
  EXPECT_EQ(m.true_positive_rate(), 1.0);
  EXPECT_EQ(m.classification_accuracy(), 0.5);
  EXPECT_EQ(m.localization_accuracy(), 0.0);
  EXPECT_EQ(m.loc_repair_accuracy(), 0.0);
}

TEST(ComputeMetrics, Errors) {
  EXPECT_THROW(compute_metrics({}, {}), EmptyPartition);
  const std::vector<Example> t{labelled(false)};
  EXPECT_THROW(compute_metrics(std::vector<Prediction>(2), t), PairingError);
}

TEST(ComputeMetricsProperty, MatchesBruteForceRecount) {
  std::mt19937_64 rng(4);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> pos(1, 3);
  const std::string names[] = {"x", "y"};
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<Example> t;
    std::vector<Prediction> p;
    const int n = 1 + trial % 17;
    for (int i = 0; i < n; ++i) {
      t.push_back(coin(rng) ? labelled(true, pos(rng), names[coin(rng)]) : labelled(false));
      p.push_back(coin(rng) ? buggy_at(pos(rng), names[coin(rng)]) : Prediction{});
    }
    const Metrics m = compute_metrics(p, t);
    ASSERT_EQ(m, oracle::recount(p, t));
    ASSERT_LE(m.loc_repair_accuracy(), m.localization_accuracy());
    ASSERT_LE(m.localization_accuracy(), 1.0);
  }
}

// ---- on generated data with a frozen model ----

TEST(Enumerative, OneRepairCallPerSlot) {
  const Trained& f = fixture();
  ASSERT_FALSE(f.test.empty());
  for (std::size_t i = 0; i < std::min<std::size_t>(f.test.size(), 20); ++i) {
    std::size_t calls = 0;
    predict_enumerative(f.params, f.config, f.test[i], 0.0, std::nullopt, &calls);
    ASSERT_EQ(calls, f.test[i].slot_positions.size());
  }
}

TEST(Enumerative, GridIsTauMajorAndConsistent) {
  const Trained& f = fixture();
  const std::vector<double> taus{0, 0.2, 0.5};
  const std::vector<std::optional<std::size_t>> ks{1, std::nullopt};
  std::size_t calls = 0;
  const auto rows = evaluate_enumerative_grid(f.params, f.config, f.test, taus, ks, &calls);
  ASSERT_EQ(rows.size(), 6u);
  std::size_t slots = 0;
  for (const auto& ex : f.test) slots += ex.slot_positions.size();
  EXPECT_EQ(calls, slots);
  EXPECT_EQ(rows[1].tau, 0.0);
  EXPECT_FALSE(rows[1].k.has_value());
  EXPECT_EQ(rows[2].tau, 0.2);
  for (std::size_t i = 0; i < f.test.size(); ++i) {
    const auto s = predict_slots(f.params, f.config, f.test[i]);
    for (const auto& row : rows) {
      if (!row.k) {
        ASSERT_EQ(row.predictions[i], decide_threshold(s, row.tau));
      }
    }
  }
  for (const auto& row : rows) EXPECT_EQ(row.metrics, oracle::recount(row.predictions, f.test));
  for (std::size_t i = 3; i < rows.size(); i += 2)
    EXPECT_GE(rows[i].metrics.true_positive_rate(), rows[i - 2].metrics.true_positive_rate());
}

TEST(JointEvaluationTest, DeterministicAndMatchesOracle) {
  const Trained& f = fixture();
  const JointEvaluation a = evaluate_joint(f.params, f.config, f.test);
  const JointEvaluation b = evaluate_joint(f.params, f.config, f.test);
  EXPECT_EQ(a.metrics, b.metrics);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_EQ(a.metrics, oracle::recount(a.predictions, f.test));
  for (const Prediction& p : a.predictions)
    if (p.buggy) {
      EXPECT_GE(p.loc_index, 1u);
    }
}

// ---- noise experiment ----

TEST(NoiseExperiment, IdenticalInputsHaveNoDrop) {
  const Trained& f = fixture();
  ASSERT_FALSE(f.noise.any_clean.empty());
  const std::vector<double> taus{0.0, 0.5};
  for (const NoiseRow& r : run_noise_experiment(f.params, f.config, f.noise.any_clean, f.noise.any_clean, taus)) {
    EXPECT_EQ(r.clean, r.noisy);
    EXPECT_EQ(r.drop(), 0.0);
  }
}

TEST(NoiseExperiment, VacuousThresholdGivesZero) {
  const Trained& f = fixture();
  const std::vector<double> taus{1.5};
  const auto rows = run_noise_experiment(f.params, f.config, f.noise.near_clean, f.noise.near_noisy, taus);
  EXPECT_EQ(rows[0].clean, 0.0);
  EXPECT_EQ(rows[0].noisy, 0.0);
  EXPECT_EQ(rows[0].drop(), 0.0);
}

TEST(NoiseExperiment, MisalignedSetsThrow) {
  const Trained& f = fixture();
  const std::vector<double> taus{0.0};
  std::vector<HoleExample> shorter(f.noise.any_noisy.begin(), f.noise.any_noisy.end() - 1);
  EXPECT_THROW(run_noise_experiment(f.params, f.config, f.noise.any_clean, shorter, taus), PairingError);
  std::vector<HoleExample> shuffled = f.noise.any_noisy;
  ASSERT_GE(shuffled.size(), 2u);
  std::swap(shuffled[0], shuffled[1]);
  EXPECT_THROW(run_noise_experiment(f.params, f.config, f.noise.any_clean, shuffled, taus), PairingError);
  EXPECT_THROW(run_noise_experiment(f.params, f.config, {}, {}, taus), EmptyPartition);
}

TEST(RepairAccuracy, AnyMentionCountsAndThresholdApplies) {
  const std::vector<RepairAnswer> a{{1, 0.9, true}, {2, 0.4, true}, {3, 0.8, false}, {1, 0.2, false}};
  EXPECT_EQ(repair_accuracy(a, 0.0), 0.5);
  EXPECT_EQ(repair_accuracy(a, 0.5), 0.25);
  EXPECT_THROW(repair_accuracy({}, 0.0), EmptyPartition);
}

// ---- reports ----

TEST(Reports, KRoundTripAndTables) {
  EXPECT_EQ(parse_k("inf"), std::nullopt);
  EXPECT_EQ(parse_k("3"), 3u);
  EXPECT_EQ(format_k(std::nullopt), "inf");
  EXPECT_THROW(parse_k("0"), ConfigError);
  EXPECT_THROW(parse_k("2x"), ConfigError);
  const std::vector<Example> t{labelled(false), labelled(true, 1, "y")};
  const std::vector<MetricsRow> rows{{"joint", compute_metrics(std::vector<Prediction>(2), t)}};
  const std::string table = format_metrics_table(rows);
  EXPECT_NE(table.find("joint"), std::string::npos);
  EXPECT_NE(table.find("100.0%"), std::string::npos);
  const std::string csv = metrics_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
  EXPECT_NE(csv.find("joint,2,1,1,1,1,0,0,1.000000,0.500000"), std::string::npos);
  const std::vector<NoiseRow> nr{{0.0, 0.8, 0.75}};
  EXPECT_EQ(noise_csv(nr), "tau,clean,noisy,drop\n0.0000,0.800000,0.750000,0.050000\n");
}
