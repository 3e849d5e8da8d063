#pragma once

// Vocabulary construction and variable-misuse example generation: buggy,
// bug-free and hole-ified examples with location/repair supervision,
// function-disjoint dataset partitions, and slot-placement noise.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vmr/frontend.hpp"

namespace vmr {

using Rng = std::mt19937_64;

/// Independent generator for one function and purpose; depends only on
/// (seed, function_id, stream).
Rng function_rng(std::uint64_t seed, std::string_view function_id, std::uint64_t stream);

class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kNoFault = 1;
  static constexpr std::int32_t kHole = 2;
  static constexpr std::int32_t kUnk = 3;
  static constexpr std::size_t kReservedCount = 4;
  static constexpr std::string_view kPadText = "<PAD>";
  static constexpr std::string_view kNoFaultText = "<NO_FAULT>";
  static constexpr std::string_view kHoleText = "<HOLE>";
  static constexpr std::string_view kUnkText = "<UNK>";

  Vocab();

  /// UNK for any unmapped string.
  std::int32_t id(std::string_view token) const;
  const std::string& token(std::int32_t id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return id_to_token_.size(); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  /// FNV-1a 64 over the id order, hex.
  std::string hash() const;

  nlohmann::json to_json() const;
  static Vocab from_json(const nlohmann::json& j);

 private:
  friend Vocab build_vocab(const std::vector<FunctionSource>&, std::size_t);
  void append(const std::string& token);

  std::unordered_map<std::string, std::int32_t> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Reserved tokens first, then corpus tokens by descending frequency.
/// Among equal frequencies keywords and operators precede other tokens;
/// remaining ties are lexicographic. Throws EmptyCorpus, ConfigError
/// (max_size < reserved count).
Vocab build_vocab(const std::vector<FunctionSource>& corpus, std::size_t max_size);

struct Example {
  std::string function_id;
  std::vector<std::string> raw_tokens;
  std::vector<std::int32_t> token_ids;
  std::vector<std::uint8_t> mask;
  std::vector<std::uint8_t> loc_target;
  std::vector<std::uint8_t> rep_target;
  bool is_buggy = false;
  std::optional<std::size_t> bug_index;
  std::optional<std::string> original_var;
  std::optional<std::string> injected_var;

  /// Use positions (example coordinates) eligible as slots.
  std::vector<std::size_t> slot_positions;
  /// Repair candidates shared by every slot (sorted).
  std::vector<std::string> candidates;
  /// The slot a test pair was built around, when there is one.
  std::optional<std::size_t> designated_slot;

  std::size_t size() const { return raw_tokens.size(); }
};

/// Program with one slot replaced by HOLE. `example.rep_target` marks every
/// masked occurrence of target_var; the hole itself is unmasked.
struct HoleExample {
  Example example;
  std::size_t slot_index = 0;
  std::string target_var;
  std::vector<std::string> candidates;
};

/// One-hot at bug_index, or at 0 for a bug-free program. Throws
/// IndexOutOfRange.
std::vector<std::uint8_t> build_loc_vector(std::size_t n, std::optional<std::size_t> bug_index);
/// 1 wherever the raw token is `original` and the mask is set. Throws
/// IndexOutOfRange when lengths differ.
std::vector<std::uint8_t> build_rep_vector(const std::vector<std::string>& raw_tokens, std::string_view original,
                                           const std::vector<std::uint8_t>& mask);

/// Bug-free example: the function's tokens behind a NO_FAULT position.
Example make_bugfree(const FunctionSource& fn);
/// Replaces the slot's variable by one drawn uniformly from the other
/// candidates. Throws NoAlternative.
Example make_buggy(const FunctionSource& fn, const Slot& slot, Rng& rng);
/// Hole at `position` (example coordinates); the target is the variable
/// currently there.
HoleExample make_hole_variant(const Example& example, std::size_t position);
HoleExample make_hole_variant(const FunctionSource& fn, const Slot& slot);

/// Resolves token ids; unmapped tokens become UNK.
Example encode_example(Example example, const Vocab& vocab);
HoleExample encode_example(HoleExample example, const Vocab& vocab);

/// Cuts an example to its first `max_tokens` positions. Returns false when
/// the supervision no longer fits (bug position, every repair position, or
/// the designated slot beyond the cut).
bool truncate_example(Example& example, std::size_t max_tokens);
bool truncate_example(HoleExample& example, std::size_t max_tokens);

struct DatasetConfig {
  std::size_t max_tokens = 250;
  double train_fraction = 0.8;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  /// 0 keeps every test function.
  std::size_t max_test_functions = 0;
  /// Near noise: at most this many use locations away from the slot...
  std::size_t near_window = 2;
  /// ...and at a program token index below this bound.
  std::size_t near_max_position = 30;
};

struct Dataset {
  std::vector<Example> train, valid, test;
  std::vector<HoleExample> train_holes, valid_holes, test_holes;
};

enum class Partition { Train, Valid, Test };
/// Throws ConfigError when fractions are negative or do not sum to 1.
Partition partition_of(std::string_view function_id, const DatasetConfig& config);

/// Train/valid: one buggy and one bug-free example per slot, plus one hole
/// example per slot. Test: one seeded slot per function, yielding a buggy /
/// bug-free pair and the clean hole example at that slot.
/// Throws EmptyCorpus, ConfigError.
Dataset generate_dataset(const std::vector<FunctionSource>& corpus, const Vocab& vocab, const DatasetConfig& config,
                         std::uint64_t seed);

enum class NoiseMode { Any, Near };

struct NoisyPair {
  Example clean;
  Example noisy;
  std::size_t changed_index = 0;
};

/// Corrupts one use other than the designated slot with a different
/// candidate. Throws NoEligibleLocation.
NoisyPair inject_noise(const Example& example, NoiseMode mode, const Vocab& vocab, Rng& rng,
                       const DatasetConfig& config);

struct NoiseSets {
  std::vector<HoleExample> any_clean, any_noisy;
  std::vector<HoleExample> near_clean, near_noisy;
};

/// Clean/noisy hole pairs at the designated slot of every bug-free test
/// example; examples without an eligible location are left out of that
/// variant only.
NoiseSets generate_noise_sets(const std::vector<Example>& test, const Vocab& vocab, const DatasetConfig& config,
                              std::uint64_t seed);

// ---- serialization ----

nlohmann::json to_json(const Example& example);
nlohmann::json to_json(const HoleExample& example);
Example example_from_json(const nlohmann::json& j);
HoleExample hole_example_from_json(const nlohmann::json& j);

std::string to_jsonl(const std::vector<Example>& examples);
std::string to_jsonl(const std::vector<HoleExample>& examples);
std::vector<Example> examples_from_jsonl(std::string_view text);
std::vector<HoleExample> hole_examples_from_jsonl(std::string_view text);

}  // namespace vmr
