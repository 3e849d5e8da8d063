#pragma once

// Multi-headed pointer network: token embeddings feed a unidirectional LSTM;
// attention over its states yields a location distribution (position 0 is
// the no-fault position) and a repair distribution over the same positions.
//
// Layout note: states are kept n x h (one row per position), so the
// projections appear as S*W1 and h_n*W2.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vmr/datagen.hpp"
#include "vmr/tensor.hpp"

namespace vmr {

enum class MaskMode { None, Hidden, Logits };
enum class RepLossMode { SumProb, SumLog, MaxProb };

std::string_view to_string(MaskMode mode);
std::string_view to_string(RepLossMode mode);
/// Throws ConfigError.
MaskMode mask_mode_from_string(std::string_view name);
RepLossMode rep_loss_mode_from_string(std::string_view name);

/// Probability floor inside every log.
inline constexpr double kProbFloor = 1e-12;

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 64;
  std::size_t hidden_dim = 128;
  MaskMode mask_mode = MaskMode::Logits;
  RepLossMode rep_loss_mode = RepLossMode::SumProb;
  std::size_t max_tokens = 250;

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  /// Throws ConfigError.
  static ModelConfig from_json(const nlohmann::json& j);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ModelParams {
  ad::Tensor embedding;  // V x d
  ad::Tensor lstm_wx;    // d x 4h
  ad::Tensor lstm_wh;    // h x 4h
  ad::Tensor lstm_b;     // 1 x 4h
  ad::Tensor w1;         // h x h
  ad::Tensor w2;         // h x h
  ad::Tensor w_out;      // h x 2 (column 0: location, column 1: repair)

  static constexpr std::array<std::string_view, 7> kNames = {"embedding", "lstm_wx", "lstm_wh", "lstm_b",
                                                             "w1",        "w2",      "w_out"};
  static std::array<ad::Shape, 7> shapes(const ModelConfig& config);

  std::vector<ad::Tensor*> tensors();
  std::vector<const ad::Tensor*> tensors() const;
  /// Throws ShapeMismatch.
  void check_shapes(const ModelConfig& config) const;
  bool all_finite() const;
  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

/// Glorot-uniform matrices, U(-0.05, 0.05) embeddings, zero biases except a
/// forget-gate bias of 1.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Parameters as tape variables.
struct BoundParams {
  ad::Var embedding, lstm_wx, lstm_wh, lstm_b, w1, w2, w_out;
};
/// Trainable: backward accumulates into the tensors' grad slots.
BoundParams bind_params(ad::Tape& tape, ModelParams& params);
/// Frozen: read in place, no gradients.
BoundParams bind_frozen(ad::Tape& tape, const ModelParams& params);

/// n x h hidden states from a zero initial state. Throws IndexOutOfRange
/// (empty, longer than max_tokens, or an id outside the vocabulary).
ad::Var encode_sequence(const BoundParams& params, std::span<const std::int32_t> ids, const ModelConfig& config);

/// Both distributions as 1 x n rows.
struct PointerVars {
  ad::Var loc;
  ad::Var rep;
};

/// Throws DegenerateRow when a row's support is empty, ShapeMismatch when
/// the mask length differs from n.
PointerVars pointer_heads(const BoundParams& params, ad::Var states, std::span<const std::uint8_t> mask,
                          MaskMode mode);
/// Repair head alone; its support is always restricted to the mask.
ad::Var repair_head(const BoundParams& params, ad::Var states, std::span<const std::uint8_t> mask, MaskMode mode);

/// -log p[target]. Throws ShapeMismatch unless `loc` is one-hot of the
/// distribution's length.
ad::Var loss_loc(ad::Var loc_dist, std::span<const std::uint8_t> loc);
/// Throws EmptyTarget when `rep` has no ones, ShapeMismatch on length.
ad::Var loss_rep(ad::Var rep_dist, std::span<const std::uint8_t> rep, RepLossMode mode);
/// loss_loc, plus loss_rep for buggy examples.
ad::Var loss_joint(const PointerVars& out, const Example& example, RepLossMode mode);

/// Forward pass and joint loss for one example on `tape`.
ad::Var joint_loss(const BoundParams& params, const Example& example, const ModelConfig& config);
/// Forward pass and repair loss for one hole example on `tape`.
ad::Var repair_loss(const BoundParams& params, const HoleExample& example, const ModelConfig& config);

struct PointerOutput {
  std::vector<double> loc_dist;
  std::vector<double> rep_dist;
};

PointerOutput forward_joint(const ModelParams& params, const ModelConfig& config, const Example& example);
std::vector<double> forward_repair_only(const ModelParams& params, const ModelConfig& config,
                                        const HoleExample& example);

/// Index of the largest value; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace vmr
