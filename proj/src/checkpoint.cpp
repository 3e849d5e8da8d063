#include "vmr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <json.hpp>

#include "vmr/error.hpp"
#include "vmr/io.hpp"

namespace vmr {
namespace {

constexpr char kMagic[8] = {'V', 'M', 'R', 'C', 'K', 'P', 'T', '\0'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

std::uint64_t get_u64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

void put_doubles(std::string& out, std::span<const double> values) {
  for (double x : values) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

class Reader {
 public:
  Reader(std::string_view bytes, std::size_t pos) : bytes_(bytes), pos_(pos) {}
  void doubles(std::span<double> out) {
    if (bytes_.size() - pos_ < 8 * out.size()) throw IoError("checkpoint payload is truncated");
    for (double& x : out) {
      x = std::bit_cast<double>(get_u64(bytes_, pos_));
      pos_ += 8;
    }
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_;
};

}  // namespace

std::string_view to_string(ModelKind kind) { return kind == ModelKind::Joint ? "joint" : "repair"; }

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "joint") return ModelKind::Joint;
  if (name == "repair") return ModelKind::RepairOnly;
  throw ConfigError("unknown model kind '" + std::string(name) + "' (expected joint or repair)");
}

std::string serialize_checkpoint(const Checkpoint& c) {
  const auto tensors = c.params.tensors();
  const bool has_moments = !c.optimizer.m.empty();
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["model_kind"] = to_string(c.kind);
  header["vocab_hash"] = c.vocab_hash;
  header["config"] = c.config.to_json();
  header["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < tensors.size(); ++i)
    header["tensors"].push_back({{"name", ModelParams::kNames[i]}, {"shape", tensors[i]->shape()}});
  header["optimizer"] = {{"step", c.optimizer.step},   {"lr", c.adam.lr},   {"beta1", c.adam.beta1},
                         {"beta2", c.adam.beta2},      {"eps", c.adam.eps}, {"has_moments", has_moments}};
  const std::string text = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  for (const ad::Tensor* t : tensors) put_doubles(out, t->data());
  if (has_moments) {
    if (c.optimizer.m.size() != tensors.size() || c.optimizer.v.size() != tensors.size())
      throw ShapeMismatch("optimizer moments do not match the parameter list");
    for (const auto& m : c.optimizer.m) put_doubles(out, m);
    for (const auto& v : c.optimizer.v) put_doubles(out, v);
  }
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16) throw IoError("checkpoint is truncated (no header)");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw IoError("not a checkpoint file (bad magic)");
  const std::uint64_t header_len = get_u64(bytes, 8);
  if (header_len > bytes.size() - 16) throw IoError("checkpoint is truncated (header)");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint header: ") + e.what());
  }

  Checkpoint c;
  std::vector<ad::Shape> stored;
  bool has_moments = false;
  try {
    const auto version = header.at("version").get<std::uint32_t>();
    if (version != kCheckpointVersion)
      throw VersionMismatch("checkpoint version " + std::to_string(version) + ", expected " +
                            std::to_string(kCheckpointVersion));
    c.kind = model_kind_from_string(header.at("model_kind").get<std::string>());
    c.vocab_hash = header.at("vocab_hash").get<std::string>();
    c.config = ModelConfig::from_json(header.at("config"));
    const auto& tensors = header.at("tensors");
    if (tensors.size() != ModelParams::kNames.size()) throw ShapeMismatch("checkpoint has the wrong tensor count");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      if (tensors[i].at("name").get<std::string>() != ModelParams::kNames[i])
        throw ShapeMismatch("checkpoint tensor " + std::to_string(i) + " is not " +
                            std::string(ModelParams::kNames[i]));
      stored.push_back(tensors[i].at("shape").get<ad::Shape>());
    }
    const auto& opt = header.at("optimizer");
    c.optimizer.step = opt.at("step").get<std::size_t>();
    c.adam.lr = opt.at("lr").get<double>();
    c.adam.beta1 = opt.at("beta1").get<double>();
    c.adam.beta2 = opt.at("beta2").get<double>();
    c.adam.eps = opt.at("eps").get<double>();
    has_moments = opt.at("has_moments").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw IoError(std::string("malformed checkpoint header: ") + e.what());
  }

  const auto expected = ModelParams::shapes(c.config);
  for (std::size_t i = 0; i < stored.size(); ++i)
    if (stored[i] != expected[i])
      throw ShapeMismatch(std::string(ModelParams::kNames[i]) + " stored as " + ad::shape_string(stored[i]) +
                          " but the stored config implies " + ad::shape_string(expected[i]));

  Reader in(bytes, 16 + header_len);
  auto tensors = c.params.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    *tensors[i] = ad::Tensor(stored[i]);
    in.doubles(tensors[i]->data());
  }
  if (has_moments) {
    for (auto* moments : {&c.optimizer.m, &c.optimizer.v}) {
      for (const ad::Tensor* t : tensors) {
        moments->emplace_back(t->size());
        in.doubles(moments->back());
      }
    }
  }
  if (!in.at_end()) throw IoError("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize_checkpoint(io::read_file(path)); }

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint c = load_checkpoint(path);
  const auto want = ModelParams::shapes(expected);
  const auto have = ModelParams::shapes(c.config);
  for (std::size_t i = 0; i < want.size(); ++i)
    if (want[i] != have[i])
      throw ShapeMismatch(std::string(ModelParams::kNames[i]) + " is " + ad::shape_string(have[i]) +
                          " in the checkpoint but " + ad::shape_string(want[i]) + " in the requested config");
  return c;
}

std::string model_card(const Checkpoint& c) {
  std::string out;
  out += "model_kind: " + std::string(to_string(c.kind)) + "\n";
  out += "embed_dim: " + std::to_string(c.config.embed_dim) + "\n";
  out += "hidden_dim: " + std::to_string(c.config.hidden_dim) + "\n";
  out += "vocab_size: " + std::to_string(c.config.vocab_size) + "\n";
  out += "max_tokens: " + std::to_string(c.config.max_tokens) + "\n";
  out += "mask_mode: " + std::string(to_string(c.config.mask_mode)) + "\n";
  out += "rep_loss: " + std::string(to_string(c.config.rep_loss_mode)) + "\n";
  out += "vocab_hash: " + c.vocab_hash + "\n";
  out += "optimizer_steps: " + std::to_string(c.optimizer.step) + "\n";
  return out;
}

}  // namespace vmr
