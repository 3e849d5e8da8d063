#pragma once

// Binary checkpoints: an 8-byte magic, a little-endian u64 header length,
// a JSON header (version, model kind, vocab hash, model config, tensor names
// and shapes, optimizer state summary), then every parameter as
// little-endian float64 in header order, followed by the Adam first and
// second moments when present.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "vmr/model.hpp"
#include "vmr/tensor.hpp"

namespace vmr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class ModelKind { Joint, RepairOnly };
std::string_view to_string(ModelKind kind);
/// "joint" or "repair". Throws ConfigError.
ModelKind model_kind_from_string(std::string_view name);

struct Checkpoint {
  ModelKind kind = ModelKind::Joint;
  ModelConfig config;
  std::string vocab_hash;
  ModelParams params;
  ad::AdamConfig adam;
  ad::AdamState optimizer;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
/// Throws IoError (truncated or malformed), VersionMismatch, ShapeMismatch
/// (tensors disagree with the stored config).
Checkpoint deserialize_checkpoint(std::string_view bytes);

/// Atomic write. Throws IoError.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Also throws ShapeMismatch when the stored shapes differ from `expected`'s.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);

/// Human-readable summary: kind, d, h, vocabulary size, modes, vocab hash.
std::string model_card(const Checkpoint& checkpoint);

}  // namespace vmr
