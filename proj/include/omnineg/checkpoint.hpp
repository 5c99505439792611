#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "json.hpp"
#include "omnineg/encoder.hpp"

namespace omnineg {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'O', 'M', 'N', 'I', 'C', 'K', 'P', 'T'};

/// Everything needed to reproduce a text tower: weights with freeze flags,
/// temperature, vocabulary, and the run configuration that produced them.
template <typename Scalar>
struct Checkpoint {
  EncoderParams<Scalar> encoder;
  Temperature<Scalar> temperature;
  std::vector<std::string> vocab;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
};

namespace detail {

template <typename Scalar>
constexpr const char* element_type_name() {
  static_assert(std::is_same_v<Scalar, double> || std::is_same_v<Scalar, float>);
  return std::is_same_v<Scalar, double> ? "f64" : "f32";
}

template <typename T>
void put_le(std::ostream& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw Error(ErrorCode::MalformedRecord, "checkpoint payload is truncated");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline nlohmann::ordered_json encoder_config_json(const EncoderConfig& c) {
  nlohmann::ordered_json j;
  j["n_layers"] = c.n_layers;
  j["d_model"] = c.d_model;
  j["n_heads"] = c.n_heads;
  j["d_ff"] = c.d_ff;
  j["d_embed"] = c.d_embed;
  j["vocab_size"] = c.vocab_size;
  j["max_len"] = c.max_len;
  j["seed"] = c.seed;
  return j;
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.d_ff = j.at("d_ff").get<std::size_t>();
  c.d_embed = j.at("d_embed").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace detail

/// Layout: 8-byte magic, u64 little-endian manifest length, JSON manifest,
/// then each tensor's row-major little-endian IEEE-754 payload in manifest order.
template <typename Scalar>
void write_checkpoint(const Checkpoint<Scalar>& ckpt, const std::filesystem::path& path) {
  nlohmann::ordered_json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["element_type"] = detail::element_type_name<Scalar>();
  manifest["encoder"] = detail::encoder_config_json(ckpt.encoder.config);
  manifest["temperature_max"] = static_cast<double>(ckpt.temperature.max_value);
  manifest["vocab"] = ckpt.vocab;
  manifest["config"] = ckpt.config;
  auto tensors = nlohmann::ordered_json::array();
  auto describe = [&tensors](const std::string& name, Eigen::Index rows, Eigen::Index cols, bool trainable,
                             bool decay) {
    nlohmann::ordered_json t;
    t["name"] = name;
    t["shape"] = {rows, cols};
    t["trainable"] = trainable;
    t["decay"] = decay;
    tensors.push_back(std::move(t));
  };
  for (const auto& t : ckpt.encoder.tensors) describe(t.name, t.value.rows(), t.value.cols(), t.trainable, t.decay);
  describe("log_tau", 1, 1, ckpt.temperature.learnable, false);
  manifest["tensors"] = std::move(tensors);
  const std::string text = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ckpt.encoder.tensors) {
    for (Eigen::Index k = 0; k < t.value.size(); ++k) detail::put_le<Scalar>(out, t.value.data()[k]);
  }
  detail::put_le<Scalar>(out, ckpt.temperature.log_value);
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

template <typename Scalar>
Checkpoint<Scalar> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw Error(ErrorCode::MalformedRecord, path.string() + " is not a checkpoint");
  }
  const auto length = detail::get_le<std::uint64_t>(in);
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) {
    throw Error(ErrorCode::MalformedRecord, "checkpoint manifest is truncated");
  }
  nlohmann::ordered_json manifest;
  Checkpoint<Scalar> ckpt;
  try {
    manifest = nlohmann::ordered_json::parse(text);
    if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw Error(ErrorCode::MalformedRecord, "unsupported checkpoint format version");
    }
    if (manifest.at("element_type").get<std::string>() != detail::element_type_name<Scalar>()) {
      throw Error(ErrorCode::MalformedRecord, "checkpoint element type is " +
                                                  manifest.at("element_type").get<std::string>());
    }
    ckpt.encoder.config = detail::encoder_config_from_json(manifest.at("encoder"));
    ckpt.temperature.max_value = static_cast<Scalar>(manifest.at("temperature_max").get<double>());
    ckpt.vocab = manifest.at("vocab").get<std::vector<std::string>>();
    ckpt.config = manifest.at("config");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedRecord, std::string("checkpoint manifest: ") + e.what());
  }
  for (const auto& t : manifest.at("tensors")) {
    const auto rows = t.at("shape").at(0).get<Eigen::Index>();
    const auto cols = t.at("shape").at(1).get<Eigen::Index>();
    Matrix<Scalar> value(rows, cols);
    for (Eigen::Index k = 0; k < value.size(); ++k) value.data()[k] = detail::get_le<Scalar>(in);
    const auto name = t.at("name").get<std::string>();
    const bool trainable = t.at("trainable").get<bool>();
    if (name == "log_tau") {
      ckpt.temperature.log_value = value(0, 0);
      ckpt.temperature.learnable = trainable;
    } else {
      ckpt.encoder.tensors.push_back({name, std::move(value), trainable, t.at("decay").get<bool>()});
    }
  }
  const auto expected = init_encoder<Scalar>(ckpt.encoder.config);
  if (expected.tensors.size() != ckpt.encoder.tensors.size()) {
    throw Error(ErrorCode::MalformedRecord, "checkpoint tensor count does not match its encoder config");
  }
  for (std::size_t i = 0; i < expected.tensors.size(); ++i) {
    const auto& a = expected.tensors[i];
    const auto& b = ckpt.encoder.tensors[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) {
      throw Error(ErrorCode::MalformedRecord, "checkpoint tensor '" + b.name + "' does not match layout");
    }
  }
  return ckpt;
}

}  // namespace omnineg
