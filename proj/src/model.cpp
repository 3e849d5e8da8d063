#include "vmr/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "vmr/error.hpp"

namespace vmr {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

constexpr std::array<std::string_view, 3> kMaskNames = {"none", "hidden", "logits"};
constexpr std::array<std::string_view, 3> kRepLossNames = {"sum-prob", "sum-log", "max-prob"};

template <typename E, std::size_t N>
E enum_from(std::string_view name, const std::array<std::string_view, N>& names, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == name) return static_cast<E>(i);
  std::string allowed;
  for (std::string_view n : names) allowed += (allowed.empty() ? "" : ", ") + std::string(n);
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(name) + "' (expected " + allowed + ")");
}

void glorot(Tensor& t, std::mt19937_64& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
  std::uniform_real_distribution<double> u(-s, s);
  for (double& x : t.data()) x = u(rng);
}

std::vector<std::size_t> ones_of(std::span<const std::uint8_t> v) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i]) out.push_back(i);
  return out;
}

// n x h -> 2 x n pointer logits.
Var pointer_logits(const BoundParams& p, Var states, std::span<const std::uint8_t> mask, MaskMode mode) {
  const std::size_t n = states.shape()[0];
  if (mask.size() != n)
    throw ShapeMismatch("mask of length " + std::to_string(mask.size()) + " for " + std::to_string(n) + " states");
  Tape& tape = states.tape();
  Var s = mode == MaskMode::Hidden ? ad::masked_fill(states, mask, 0.0, 0) : states;
  Var last = ad::row(states, n - 1);
  Var spread = ad::matmul(tape.constant(Tensor({n, 1}, 1.0)), ad::matmul(last, p.w2));
  Var m = ad::tanh(ad::add(ad::matmul(s, p.w1), spread));
  return ad::transpose(ad::matmul(m, p.w_out));
}

}  // namespace

std::string_view to_string(MaskMode mode) { return kMaskNames.at(static_cast<std::size_t>(mode)); }
std::string_view to_string(RepLossMode mode) { return kRepLossNames.at(static_cast<std::size_t>(mode)); }
MaskMode mask_mode_from_string(std::string_view name) { return enum_from<MaskMode>(name, kMaskNames, "mask mode"); }
RepLossMode rep_loss_mode_from_string(std::string_view name) {
  return enum_from<RepLossMode>(name, kRepLossNames, "repair loss");
}

// ---- config ----

void ModelConfig::validate() const {
  if (vocab_size < Vocab::kReservedCount) throw ConfigError("vocab_size must cover the reserved tokens");
  if (embed_dim == 0 || hidden_dim == 0) throw ConfigError("embed_dim and hidden_dim must be positive");
  if (max_tokens < 2) throw ConfigError("max_tokens must be at least 2");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size},
          {"embed_dim", embed_dim},
          {"hidden_dim", hidden_dim},
          {"mask_mode", to_string(mask_mode)},
          {"rep_loss_mode", to_string(rep_loss_mode)},
          {"max_tokens", max_tokens}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.mask_mode = mask_mode_from_string(j.at("mask_mode").get<std::string>());
    c.rep_loss_mode = rep_loss_mode_from_string(j.at("rep_loss_mode").get<std::string>());
    c.max_tokens = j.at("max_tokens").get<std::size_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
}

// ---- parameters ----

std::array<Shape, 7> ModelParams::shapes(const ModelConfig& c) {
  const std::size_t V = c.vocab_size, d = c.embed_dim, h = c.hidden_dim;
  return {Shape{V, d}, Shape{d, 4 * h}, Shape{h, 4 * h}, Shape{1, 4 * h}, Shape{h, h}, Shape{h, h}, Shape{h, 2}};
}

std::vector<Tensor*> ModelParams::tensors() { return {&embedding, &lstm_wx, &lstm_wh, &lstm_b, &w1, &w2, &w_out}; }

std::vector<const Tensor*> ModelParams::tensors() const {
  return {&embedding, &lstm_wx, &lstm_wh, &lstm_b, &w1, &w2, &w_out};
}

void ModelParams::check_shapes(const ModelConfig& config) const {
  const auto expected = shapes(config);
  const auto ts = tensors();
  for (std::size_t i = 0; i < ts.size(); ++i)
    if (ts[i]->shape() != expected[i])
      throw ShapeMismatch("parameter " + std::string(kNames[i]) + " has shape " + ad::shape_string(ts[i]->shape()) +
                          ", config expects " + ad::shape_string(expected[i]));
}

bool ModelParams::all_finite() const {
  for (const Tensor* t : tensors())
    for (double x : t->data())
      if (!std::isfinite(x)) return false;
  return true;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  const auto ta = a.tensors(), tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (!(*ta[i] == *tb[i])) return false;
  return true;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const auto shapes = ModelParams::shapes(config);
  ModelParams p;
  auto ts = p.tensors();
  for (std::size_t i = 0; i < ts.size(); ++i) *ts[i] = Tensor(shapes[i]);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> emb(-0.05, 0.05);
  for (double& x : p.embedding.data()) x = emb(rng);
  glorot(p.lstm_wx, rng);
  glorot(p.lstm_wh, rng);
  const std::size_t h = config.hidden_dim;
  for (std::size_t j = h; j < 2 * h; ++j) p.lstm_b[j] = 1.0;  // forget gate
  glorot(p.w1, rng);
  glorot(p.w2, rng);
  glorot(p.w_out, rng);
  return p;
}

BoundParams bind_params(Tape& tape, ModelParams& p) {
  return {tape.parameter(p.embedding), tape.parameter(p.lstm_wx), tape.parameter(p.lstm_wh),
          tape.parameter(p.lstm_b),    tape.parameter(p.w1),      tape.parameter(p.w2),
          tape.parameter(p.w_out)};
}

BoundParams bind_frozen(Tape& tape, const ModelParams& p) {
  return {tape.constant_ref(p.embedding), tape.constant_ref(p.lstm_wx), tape.constant_ref(p.lstm_wh),
          tape.constant_ref(p.lstm_b),    tape.constant_ref(p.w1),      tape.constant_ref(p.w2),
          tape.constant_ref(p.w_out)};
}

// ---- forward ----

Var encode_sequence(const BoundParams& p, std::span<const std::int32_t> ids, const ModelConfig& config) {
  if (ids.empty()) throw IndexOutOfRange("cannot encode an empty sequence");
  if (ids.size() > config.max_tokens)
    throw IndexOutOfRange("sequence of " + std::to_string(ids.size()) + " tokens exceeds max_tokens " +
                          std::to_string(config.max_tokens));
  Var embedded = ad::gather_rows(p.embedding, ids);
  return ad::lstm(embedded, p.lstm_wx, p.lstm_wh, p.lstm_b);
}

PointerVars pointer_heads(const BoundParams& p, Var states, std::span<const std::uint8_t> mask, MaskMode mode) {
  Var logits = pointer_logits(p, states, mask, mode);
  if (mode == MaskMode::Logits) {
    const std::size_t n = mask.size();
    std::vector<std::uint8_t> support(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      support[i] = mask[i] || i == 0;
      support[n + i] = mask[i];
    }
    logits = ad::masked_fill_full(logits, support, ad::kNegInf);
  }
  Var probs = ad::softmax(logits, 1);
  return {ad::row(probs, 0), ad::row(probs, 1)};
}

Var repair_head(const BoundParams& p, Var states, std::span<const std::uint8_t> mask, MaskMode mode) {
  Var logits = ad::row(pointer_logits(p, states, mask, mode), 1);
  return ad::softmax(ad::masked_fill(logits, mask, ad::kNegInf, 1), 1);
}

// ---- losses ----

Var loss_loc(Var loc_dist, std::span<const std::uint8_t> loc) {
  if (loc.size() != loc_dist.size())
    throw ShapeMismatch("location target of length " + std::to_string(loc.size()) + " for distribution of " +
                        std::to_string(loc_dist.size()));
  const auto targets = ones_of(loc);
  if (targets.size() != 1) throw ShapeMismatch("location target is not one-hot");
  return ad::scale(ad::log_clamped(ad::select_sum(loc_dist, targets), kProbFloor), -1.0);
}

Var loss_rep(Var rep_dist, std::span<const std::uint8_t> rep, RepLossMode mode) {
  if (rep.size() != rep_dist.size())
    throw ShapeMismatch("repair target of length " + std::to_string(rep.size()) + " for distribution of " +
                        std::to_string(rep_dist.size()));
  const auto targets = ones_of(rep);
  if (targets.empty()) throw EmptyTarget("repair target has no positions");
  switch (mode) {
    case RepLossMode::SumProb:
      return ad::scale(ad::log_clamped(ad::select_sum(rep_dist, targets), kProbFloor), -1.0);
    case RepLossMode::SumLog:
      return ad::scale(ad::select_sum(ad::log_clamped(rep_dist, kProbFloor), targets), -1.0);
    case RepLossMode::MaxProb:
      return ad::scale(ad::log_clamped(ad::select_max(rep_dist, targets), kProbFloor), -1.0);
  }
  throw ConfigError("unknown repair loss mode");
}

Var loss_joint(const PointerVars& out, const Example& example, RepLossMode mode) {
  Var loss = loss_loc(out.loc, example.loc_target);
  if (example.is_buggy) loss = ad::add(loss, loss_rep(out.rep, example.rep_target, mode));
  return loss;
}

Var joint_loss(const BoundParams& p, const Example& example, const ModelConfig& config) {
  Var states = encode_sequence(p, example.token_ids, config);
  return loss_joint(pointer_heads(p, states, example.mask, config.mask_mode), example, config.rep_loss_mode);
}

Var repair_loss(const BoundParams& p, const HoleExample& example, const ModelConfig& config) {
  const Example& ex = example.example;
  Var states = encode_sequence(p, ex.token_ids, config);
  return loss_rep(repair_head(p, states, ex.mask, config.mask_mode), ex.rep_target, config.rep_loss_mode);
}

PointerOutput forward_joint(const ModelParams& params, const ModelConfig& config, const Example& example) {
  Tape tape;
  const BoundParams p = bind_frozen(tape, params);
  PointerVars out = pointer_heads(p, encode_sequence(p, example.token_ids, config), example.mask, config.mask_mode);
  return {{out.loc.value().begin(), out.loc.value().end()}, {out.rep.value().begin(), out.rep.value().end()}};
}

std::vector<double> forward_repair_only(const ModelParams& params, const ModelConfig& config,
                                        const HoleExample& example) {
  Tape tape;
  const BoundParams p = bind_frozen(tape, params);
  const Example& ex = example.example;
  Var rep = repair_head(p, encode_sequence(p, ex.token_ids, config), ex.mask, config.mask_mode);
  return {rep.value().begin(), rep.value().end()};
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw IndexOutOfRange("argmax of an empty sequence");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

}  // namespace vmr
