#include "vmr/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <unordered_set>

#include "vmr/error.hpp"

namespace vmr {
namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stream tags for function_rng.
constexpr std::uint64_t kStreamTrain = 1;
constexpr std::uint64_t kStreamTestSlot = 2;
constexpr std::uint64_t kStreamTestBug = 3;
constexpr std::uint64_t kStreamTestSample = 4;
constexpr std::uint64_t kStreamNoiseAny = 5;
constexpr std::uint64_t kStreamNoiseNear = 6;

bool is_reserved_text(std::string_view t) {
  return t == Vocab::kPadText || t == Vocab::kNoFaultText || t == Vocab::kHoleText || t == Vocab::kUnkText;
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

void check_lengths(const Example& ex) {
  const std::size_t n = ex.raw_tokens.size();
  if (ex.mask.size() != n || ex.loc_target.size() != n || ex.rep_target.size() != n ||
      (!ex.token_ids.empty() && ex.token_ids.size() != n))
    throw IndexOutOfRange("example vectors have unequal lengths");
}

}  // namespace

Rng function_rng(std::uint64_t seed, std::string_view function_id, std::uint64_t stream) {
  const std::uint64_t h = fnv1a(function_id);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

// ---- Vocab ----

Vocab::Vocab() {
  for (std::string_view t : {kPadText, kNoFaultText, kHoleText, kUnkText}) append(std::string(t));
}

void Vocab::append(const std::string& token) {
  token_to_id_.emplace(token, static_cast<std::int32_t>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

std::int32_t Vocab::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
    throw IndexOutOfRange("token id " + std::to_string(id) + " outside vocabulary of " +
                          std::to_string(id_to_token_.size()));
  return id_to_token_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view token) const { return token_to_id_.count(std::string(token)) > 0; }

std::string Vocab::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const std::string& t : id_to_token_) h = fnv1a(std::string_view("\x1f", 1), fnv1a(t, h));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

nlohmann::json Vocab::to_json() const {
  nlohmann::json reserved = nlohmann::json::object();
  nlohmann::json tokens = nlohmann::json::object();
  for (std::size_t i = 0; i < id_to_token_.size(); ++i)
    (i < kReservedCount ? reserved : tokens)[id_to_token_[i]] = i;
  return {{"version", 1}, {"reserved", reserved}, {"tokens", tokens}};
}

Vocab Vocab::from_json(const nlohmann::json& j) {
  try {
    const auto& reserved = j.at("reserved");
    const auto& tokens = j.at("tokens");
    std::vector<std::string> by_id(reserved.size() + tokens.size());
    auto place = [&](const nlohmann::json& block) {
      for (auto it = block.begin(); it != block.end(); ++it) {
        const auto id = it.value().get<std::size_t>();
        if (id >= by_id.size() || !by_id[id].empty())
          throw ParseError("vocab id " + std::to_string(id) + " out of range or duplicated");
        by_id[id] = it.key();
      }
    };
    place(reserved);
    place(tokens);
    Vocab v;
    for (std::size_t i = 0; i < kReservedCount; ++i)
      if (i >= by_id.size() || by_id[i] != v.id_to_token_[i])
        throw ParseError("vocab reserved block does not match this build");
    for (std::size_t i = kReservedCount; i < by_id.size(); ++i) v.append(by_id[i]);
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed vocab: ") + e.what());
  }
}

Vocab build_vocab(const std::vector<FunctionSource>& corpus, std::size_t max_size) {
  if (max_size < Vocab::kReservedCount)
    throw ConfigError("vocab max_size must be at least " + std::to_string(Vocab::kReservedCount));
  struct Entry {
    std::size_t count = 0;
    bool structural = false;
  };
  std::map<std::string, Entry> counts;
  std::size_t total = 0;
  for (const FunctionSource& fn : corpus) {
    for (const Token& t : fn.tokens) {
      ++total;
      if (is_reserved_text(t.text)) continue;
      Entry& e = counts[t.text];
      ++e.count;
      if (t.kind != TokenKind::IDENT && t.kind != TokenKind::NUMBER && t.kind != TokenKind::STRING)
        e.structural = true;
    }
  }
  if (total == 0) throw EmptyCorpus("corpus has no tokens");
  std::vector<std::pair<std::string, Entry>> order(counts.begin(), counts.end());
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second.count != b.second.count) return a.second.count > b.second.count;
    return a.second.structural && !b.second.structural;
  });
  Vocab v;
  for (const auto& [text, entry] : order) {
    if (v.size() >= max_size) break;
    v.append(text);
  }
  return v;
}

// ---- supervision vectors ----

std::vector<std::uint8_t> build_loc_vector(std::size_t n, std::optional<std::size_t> bug_index) {
  const std::size_t at = bug_index.value_or(0);
  if (at >= n) throw IndexOutOfRange("location " + std::to_string(at) + " outside length " + std::to_string(n));
  std::vector<std::uint8_t> loc(n, 0);
  loc[at] = 1;
  return loc;
}

std::vector<std::uint8_t> build_rep_vector(const std::vector<std::string>& raw_tokens, std::string_view original,
                                           const std::vector<std::uint8_t>& mask) {
  if (mask.size() != raw_tokens.size())
    throw IndexOutOfRange("mask length " + std::to_string(mask.size()) + " differs from token count " +
                          std::to_string(raw_tokens.size()));
  std::vector<std::uint8_t> rep(raw_tokens.size(), 0);
  for (std::size_t i = 0; i < raw_tokens.size(); ++i) rep[i] = mask[i] && raw_tokens[i] == original;
  return rep;
}

// ---- example construction ----

Example make_bugfree(const FunctionSource& fn) {
  Example ex;
  ex.function_id = fn.function_id;
  ex.raw_tokens.reserve(fn.tokens.size() + 1);
  ex.raw_tokens.emplace_back(Vocab::kNoFaultText);
  for (const Token& t : fn.tokens) ex.raw_tokens.push_back(t.text);
  ex.mask.push_back(0);
  for (std::uint8_t m : fn.variable_mask()) ex.mask.push_back(m);
  ex.loc_target = build_loc_vector(ex.size(), std::nullopt);
  ex.rep_target.assign(ex.size(), 0);
  for (const Slot& s : fn.slots) ex.slot_positions.push_back(s.token_index + 1);
  ex.candidates.assign(fn.defs.begin(), fn.defs.end());
  return ex;
}

Example make_buggy(const FunctionSource& fn, const Slot& slot, Rng& rng) {
  std::vector<std::string> alternatives;
  for (const std::string& c : slot.candidates)
    if (c != slot.var_name) alternatives.push_back(c);
  if (alternatives.empty()) throw NoAlternative("slot '" + slot.var_name + "' has no alternative variable");
  if (slot.token_index >= fn.tokens.size())
    throw IndexOutOfRange("slot index " + std::to_string(slot.token_index) + " outside function");
  Example ex = make_bugfree(fn);
  const std::size_t at = slot.token_index + 1;
  const std::string& injected = alternatives[uniform_index(rng, alternatives.size())];
  ex.raw_tokens[at] = injected;
  ex.is_buggy = true;
  ex.bug_index = at;
  ex.original_var = slot.var_name;
  ex.injected_var = injected;
  ex.loc_target = build_loc_vector(ex.size(), at);
  ex.rep_target = build_rep_vector(ex.raw_tokens, slot.var_name, ex.mask);
  ex.designated_slot = at;
  return ex;
}

HoleExample make_hole_variant(const Example& example, std::size_t position) {
  check_lengths(example);
  if (position == 0 || position >= example.size())
    throw IndexOutOfRange("hole position " + std::to_string(position) + " outside program");
  HoleExample h;
  h.example = example;
  Example& ex = h.example;
  h.slot_index = position;
  h.target_var = ex.raw_tokens[position];
  h.candidates = ex.candidates;
  ex.raw_tokens[position] = std::string(Vocab::kHoleText);
  if (!ex.token_ids.empty()) ex.token_ids[position] = Vocab::kHole;
  ex.mask[position] = 0;
  ex.is_buggy = false;
  ex.bug_index.reset();
  ex.original_var.reset();
  ex.injected_var.reset();
  ex.loc_target = build_loc_vector(ex.size(), std::nullopt);
  ex.rep_target = build_rep_vector(ex.raw_tokens, h.target_var, ex.mask);
  ex.designated_slot = position;
  return h;
}

HoleExample make_hole_variant(const FunctionSource& fn, const Slot& slot) {
  return make_hole_variant(make_bugfree(fn), slot.token_index + 1);
}

Example encode_example(Example example, const Vocab& vocab) {
  example.token_ids.resize(example.raw_tokens.size());
  for (std::size_t i = 0; i < example.raw_tokens.size(); ++i) example.token_ids[i] = vocab.id(example.raw_tokens[i]);
  return example;
}

HoleExample encode_example(HoleExample example, const Vocab& vocab) {
  example.example = encode_example(std::move(example.example), vocab);
  return example;
}

bool truncate_example(Example& ex, std::size_t max_tokens) {
  check_lengths(ex);
  if (ex.size() <= max_tokens) return true;
  if (ex.bug_index && *ex.bug_index >= max_tokens) return false;
  if (ex.designated_slot && *ex.designated_slot >= max_tokens) return false;
  auto cut = [max_tokens](auto& v) {
    if (v.size() > max_tokens) v.resize(max_tokens);
  };
  cut(ex.raw_tokens);
  cut(ex.token_ids);
  cut(ex.mask);
  cut(ex.loc_target);
  cut(ex.rep_target);
  std::erase_if(ex.slot_positions, [max_tokens](std::size_t p) { return p >= max_tokens; });
  if (ex.is_buggy && std::find(ex.rep_target.begin(), ex.rep_target.end(), 1) == ex.rep_target.end()) return false;
  return true;
}

bool truncate_example(HoleExample& h, std::size_t max_tokens) {
  if (h.slot_index >= max_tokens) return false;
  if (!truncate_example(h.example, max_tokens)) return false;
  const auto& rep = h.example.rep_target;
  return std::find(rep.begin(), rep.end(), 1) != rep.end();
}

// ---- dataset generation ----

Partition partition_of(std::string_view function_id, const DatasetConfig& config) {
  const double a = config.train_fraction, b = config.valid_fraction, c = config.test_fraction;
  if (a < 0 || b < 0 || c < 0 || std::abs(a + b + c - 1.0) > 1e-9)
    throw ConfigError("split fractions must be non-negative and sum to 1");
  const double u = static_cast<double>(splitmix64(fnv1a(function_id)) >> 11) * 0x1.0p-53;
  if (u < a) return Partition::Train;
  if (u < a + b) return Partition::Valid;
  return Partition::Test;
}

Dataset generate_dataset(const std::vector<FunctionSource>& corpus, const Vocab& vocab, const DatasetConfig& config,
                         std::uint64_t seed) {
  bool any_token = false;
  for (const FunctionSource& fn : corpus) any_token |= !fn.tokens.empty();
  if (!any_token) throw EmptyCorpus("corpus has no tokens");
  partition_of("", config);  // validates fractions even when no function has slots

  Dataset ds;
  std::unordered_set<std::string> seen;
  std::vector<const FunctionSource*> test_fns;
  for (const FunctionSource& fn : corpus) {
    if (fn.slots.empty() || !seen.insert(fn.function_id).second) continue;
    const Partition part = partition_of(fn.function_id, config);
    if (part == Partition::Test) {
      test_fns.push_back(&fn);
      continue;
    }
    auto& examples = part == Partition::Train ? ds.train : ds.valid;
    auto& holes = part == Partition::Train ? ds.train_holes : ds.valid_holes;
    Rng rng = function_rng(seed, fn.function_id, kStreamTrain);
    for (const Slot& slot : fn.slots) {
      Example buggy = encode_example(make_buggy(fn, slot, rng), vocab);
      Example clean = encode_example(make_bugfree(fn), vocab);
      if (truncate_example(buggy, config.max_tokens) && truncate_example(clean, config.max_tokens)) {
        examples.push_back(std::move(buggy));
        examples.push_back(std::move(clean));
      }
      HoleExample hole = encode_example(make_hole_variant(fn, slot), vocab);
      if (truncate_example(hole, config.max_tokens)) holes.push_back(std::move(hole));
    }
  }

  if (config.max_test_functions > 0 && test_fns.size() > config.max_test_functions) {
    // Seeded sample that keeps corpus order among the survivors.
    std::vector<std::pair<std::uint64_t, std::size_t>> keys;
    for (std::size_t i = 0; i < test_fns.size(); ++i)
      keys.emplace_back(function_rng(seed, test_fns[i]->function_id, kStreamTestSample)(), i);
    std::sort(keys.begin(), keys.end());
    keys.resize(config.max_test_functions);
    std::vector<std::size_t> keep;
    for (const auto& k : keys) keep.push_back(k.second);
    std::sort(keep.begin(), keep.end());
    std::vector<const FunctionSource*> sampled;
    for (std::size_t i : keep) sampled.push_back(test_fns[i]);
    test_fns = std::move(sampled);
  }

  for (const FunctionSource* fn : test_fns) {
    Rng slot_rng = function_rng(seed, fn->function_id, kStreamTestSlot);
    Rng bug_rng = function_rng(seed, fn->function_id, kStreamTestBug);
    const Slot& slot = fn->slots[uniform_index(slot_rng, fn->slots.size())];
    Example buggy = encode_example(make_buggy(*fn, slot, bug_rng), vocab);
    Example clean = encode_example(make_bugfree(*fn), vocab);
    clean.designated_slot = slot.token_index + 1;
    HoleExample hole = make_hole_variant(clean, slot.token_index + 1);
    if (truncate_example(buggy, config.max_tokens) && truncate_example(clean, config.max_tokens) &&
        truncate_example(hole, config.max_tokens)) {
      ds.test.push_back(std::move(buggy));
      ds.test.push_back(std::move(clean));
      ds.test_holes.push_back(std::move(hole));
    }
  }
  return ds;
}

// ---- noise ----

NoisyPair inject_noise(const Example& example, NoiseMode mode, const Vocab& vocab, Rng& rng,
                       const DatasetConfig& config) {
  if (!example.designated_slot) throw NoEligibleLocation("example has no designated slot");
  const std::size_t slot = *example.designated_slot;
  const auto& uses = example.slot_positions;
  const auto slot_it = std::find(uses.begin(), uses.end(), slot);
  if (slot_it == uses.end()) throw NoEligibleLocation("designated slot is not a use location");
  const std::size_t slot_order = static_cast<std::size_t>(slot_it - uses.begin());

  std::vector<std::size_t> eligible;
  for (std::size_t k = 0; k < uses.size(); ++k) {
    if (k == slot_order) continue;
    if (mode == NoiseMode::Near) {
      const std::size_t distance = k > slot_order ? k - slot_order : slot_order - k;
      // Positions are shifted by the NO_FAULT token; the bound is on program indices.
      if (distance > config.near_window || uses[k] - 1 >= config.near_max_position) continue;
    }
    eligible.push_back(uses[k]);
  }
  if (eligible.empty()) throw NoEligibleLocation("no eligible use location for noise");
  const std::size_t at = eligible[uniform_index(rng, eligible.size())];
  const std::string& current = example.raw_tokens[at];
  std::vector<std::string> alternatives;
  for (const std::string& c : example.candidates)
    if (c != current) alternatives.push_back(c);
  if (alternatives.empty()) throw NoEligibleLocation("no alternative variable for noise");

  NoisyPair pair;
  pair.clean = example;
  pair.changed_index = at;
  Example& noisy = pair.noisy;
  noisy = example;
  noisy.raw_tokens[at] = alternatives[uniform_index(rng, alternatives.size())];
  if (!noisy.token_ids.empty()) noisy.token_ids[at] = vocab.id(noisy.raw_tokens[at]);
  noisy.is_buggy = true;
  noisy.bug_index = at;
  noisy.original_var = current;
  noisy.injected_var = noisy.raw_tokens[at];
  noisy.loc_target = build_loc_vector(noisy.size(), at);
  noisy.rep_target = build_rep_vector(noisy.raw_tokens, current, noisy.mask);
  return pair;
}

NoiseSets generate_noise_sets(const std::vector<Example>& test, const Vocab& vocab, const DatasetConfig& config,
                              std::uint64_t seed) {
  NoiseSets sets;
  auto variant = [&](const Example& ex, NoiseMode mode, std::uint64_t stream, std::vector<HoleExample>& clean,
                     std::vector<HoleExample>& noisy) {
    Rng rng = function_rng(seed, ex.function_id, stream);
    try {
      NoisyPair pair = inject_noise(ex, mode, vocab, rng, config);
      HoleExample c = make_hole_variant(pair.clean, *ex.designated_slot);
      HoleExample n = make_hole_variant(pair.noisy, *ex.designated_slot);
      if (!std::count(c.example.rep_target.begin(), c.example.rep_target.end(), 1) ||
          !std::count(n.example.rep_target.begin(), n.example.rep_target.end(), 1))
        return;
      clean.push_back(std::move(c));
      noisy.push_back(std::move(n));
    } catch (const NoEligibleLocation&) {
    }
  };
  for (const Example& ex : test) {
    if (ex.is_buggy || !ex.designated_slot) continue;
    variant(ex, NoiseMode::Any, kStreamNoiseAny, sets.any_clean, sets.any_noisy);
    variant(ex, NoiseMode::Near, kStreamNoiseNear, sets.near_clean, sets.near_noisy);
  }
  return sets;
}

// ---- serialization ----

namespace {

template <typename T>
nlohmann::json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

template <typename T, typename Parse>
std::vector<T> parse_lines(std::string_view text, Parse parse) {
  std::vector<T> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.push_back(parse(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const Example& ex) {
  return {{"function_id", ex.function_id},
          {"raw_tokens", ex.raw_tokens},
          {"token_ids", ex.token_ids},
          {"mask", ex.mask},
          {"loc_target", ex.loc_target},
          {"rep_target", ex.rep_target},
          {"is_buggy", ex.is_buggy},
          {"bug_index", optional_json(ex.bug_index)},
          {"original_var", optional_json(ex.original_var)},
          {"injected_var", optional_json(ex.injected_var)},
          {"slot_positions", ex.slot_positions},
          {"var_candidates", ex.candidates},
          {"designated_slot", optional_json(ex.designated_slot)}};
}

nlohmann::json to_json(const HoleExample& h) {
  nlohmann::json j = to_json(h.example);
  j["slot_index"] = h.slot_index;
  j["target_var"] = h.target_var;
  j["candidates"] = h.candidates;
  return j;
}

Example example_from_json(const nlohmann::json& j) {
  Example ex;
  ex.function_id = j.at("function_id").get<std::string>();
  ex.raw_tokens = j.at("raw_tokens").get<std::vector<std::string>>();
  ex.token_ids = j.at("token_ids").get<std::vector<std::int32_t>>();
  ex.mask = j.at("mask").get<std::vector<std::uint8_t>>();
  ex.loc_target = j.at("loc_target").get<std::vector<std::uint8_t>>();
  ex.rep_target = j.at("rep_target").get<std::vector<std::uint8_t>>();
  ex.is_buggy = j.at("is_buggy").get<bool>();
  ex.bug_index = optional_from<std::size_t>(j, "bug_index");
  ex.original_var = optional_from<std::string>(j, "original_var");
  ex.injected_var = optional_from<std::string>(j, "injected_var");
  if (j.contains("slot_positions")) ex.slot_positions = j.at("slot_positions").get<std::vector<std::size_t>>();
  if (j.contains("var_candidates")) ex.candidates = j.at("var_candidates").get<std::vector<std::string>>();
  ex.designated_slot = optional_from<std::size_t>(j, "designated_slot");
  try {
    check_lengths(ex);
  } catch (const IndexOutOfRange& e) {
    throw ParseError(std::string("example ") + ex.function_id + ": " + e.what());
  }
  return ex;
}

HoleExample hole_example_from_json(const nlohmann::json& j) {
  HoleExample h;
  h.example = example_from_json(j);
  h.slot_index = j.at("slot_index").get<std::size_t>();
  h.target_var = j.at("target_var").get<std::string>();
  h.candidates = j.at("candidates").get<std::vector<std::string>>();
  if (h.slot_index >= h.example.size()) throw ParseError("hole slot_index outside example");
  return h;
}

std::string to_jsonl(const std::vector<Example>& examples) {
  std::string out;
  for (const Example& ex : examples) out += to_json(ex).dump() + "\n";
  return out;
}

std::string to_jsonl(const std::vector<HoleExample>& examples) {
  std::string out;
  for (const HoleExample& h : examples) out += to_json(h).dump() + "\n";
  return out;
}

std::vector<Example> examples_from_jsonl(std::string_view text) {
  return parse_lines<Example>(text, [](const nlohmann::json& j) { return example_from_json(j); });
}

std::vector<HoleExample> hole_examples_from_jsonl(std::string_view text) {
  return parse_lines<HoleExample>(text, [](const nlohmann::json& j) { return hole_example_from_json(j); });
}

}  // namespace vmr
