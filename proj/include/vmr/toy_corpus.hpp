#pragma once

// Synthetic corpus in the supported Python subset. Variables have latent
// roles (list, number, string, dict, object) that constrain how statements
// use them, so misuse is detectable from context alone.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace vmr {

struct ToyCorpusConfig {
  std::size_t files = 10;
  std::size_t functions_per_file = 20;
  std::size_t min_statements = 3;
  std::size_t max_statements = 7;
  std::uint64_t seed = 0;
};

/// One source string per file; every function parses and has at least two
/// definitions. Deterministic in the config.
std::vector<std::string> generate_toy_corpus(const ToyCorpusConfig& config);

}  // namespace vmr
