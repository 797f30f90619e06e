#pragma once

// Single-file model checkpoint:
//
//   magic "BATRULCK" | format u8 | header_len u32 | header JSON
//   | payload_len u64 | payload | crc32 u32
//
// Integers and floats are little-endian. The payload holds every parameter
// tensor (autoencoder, then LSTM, then head) at the bundle's precision. The
// CRC-32 covers every byte before it.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <iterator>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include <zlib.h>

#include "batrul/error.hpp"
#include "batrul/io.hpp"
#include "batrul/pipeline.hpp"

namespace batrul {

inline constexpr std::array<char, 8> kCheckpointMagic = {'B', 'A', 'T', 'R', 'U', 'L', 'C', 'K'};
inline constexpr std::uint8_t kCheckpointFormat = 1;

template <std::floating_point T>
constexpr const char* precision_name() {
  return std::is_same_v<T, float> ? "f32" : "f64";
}

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
  using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t,
                                  std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint8_t>>;
  const auto bits = std::bit_cast<Bits>(v);
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

template <class U>
U get_le(const unsigned char* p) {
  using Bits = std::conditional_t<sizeof(U) == 8, std::uint64_t,
                                  std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint8_t>>;
  Bits bits = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) bits |= static_cast<Bits>(p[b]) << (8 * b);
  return std::bit_cast<U>(bits);
}

inline std::uint32_t crc32_of(const unsigned char* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <std::floating_point T>
io::json layer_json(const nn::Dense<T>& d) {
  return {{"in", d.in_size()}, {"out", d.out_size()}, {"activation", std::string(nn::to_string(d.activation))}};
}

template <std::floating_point T>
nn::Dense<T> layer_from_json(const io::json& j) {
  const auto act = j.at("activation").get<std::string>();
  if (act != "tanh" && act != "linear") throw Error(Errc::CorruptCheckpoint, "unknown activation '" + act + "'");
  return nn::Dense<T>(j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>(),
                      act == "tanh" ? nn::Activation::Tanh : nn::Activation::Linear);
}

template <std::floating_point T>
void visit_bundle(ModelBundle<T>& b, auto&& f) {
  b.autoencoder.visit(f);
  b.rul.visit(f);
}

template <std::floating_point T>
void visit_bundle(const ModelBundle<T>& b, auto&& f) {
  b.autoencoder.visit(f);
  b.rul.visit(f);
}

}  // namespace detail

template <std::floating_point T>
io::json bundle_header(const ModelBundle<T>& b) {
  io::json enc = io::json::array(), dec = io::json::array();
  for (const auto& l : b.autoencoder.encoder) enc.push_back(detail::layer_json(l));
  for (const auto& l : b.autoencoder.decoder) dec.push_back(detail::layer_json(l));
  return {{"version", b.version},
          {"precision", precision_name<T>()},
          {"autoencoder", {{"encoder", enc}, {"decoder", dec}}},
          {"lstm", {{"input_size", b.rul.lstm.input_size}, {"hidden_size", b.rul.lstm.hidden_size}}},
          {"head", detail::layer_json(b.rul.head)},
          {"norm", io::to_json(b.norm)},
          {"config", io::to_json(b.config)},
          {"split", io::to_json(b.split)}};
}

template <std::floating_point T>
std::string serialize_bundle(const ModelBundle<T>& b) {
  validate_bundle(b);
  const std::string header = bundle_header(b).dump();
  std::string payload;
  detail::visit_bundle(b, [&payload](const nn::Tensor<T>& t) {
    for (const T v : t.values()) detail::put_le(payload, v);
  });
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  out.push_back(static_cast<char>(kCheckpointFormat));
  detail::put_le(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  detail::put_le(out, static_cast<std::uint64_t>(payload.size()));
  out += payload;
  detail::put_le(out, detail::crc32_of(reinterpret_cast<const unsigned char*>(out.data()), out.size()));
  return out;
}

template <std::floating_point T>
void save_bundle(const ModelBundle<T>& b, std::ostream& sink) {
  const auto bytes = serialize_bundle(b);
  sink.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!sink) throw Error(Errc::Io, "checkpoint write failed");
}

namespace detail {

struct CheckpointView {
  io::json header;
  const unsigned char* payload = nullptr;
  std::size_t payload_len = 0;
};

/// Validates framing, format byte and checksum.
inline CheckpointView open_checkpoint(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < kCheckpointMagic.size() + 1 || std::memcmp(p, kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
    throw Error(Errc::CorruptCheckpoint, "missing checkpoint magic");
  }
  const std::uint8_t format = p[kCheckpointMagic.size()];
  if (format != kCheckpointFormat) {
    throw Error(Errc::VersionMismatch, "checkpoint format " + std::to_string(format) + ", expected " +
                                           std::to_string(kCheckpointFormat));
  }
  std::size_t pos = kCheckpointMagic.size() + 1;
  auto need = [&](std::size_t k) {
    if (n < pos + k) throw Error(Errc::CorruptCheckpoint, "checkpoint truncated");
  };
  need(4);
  const auto header_len = get_le<std::uint32_t>(p + pos);
  pos += 4;
  need(header_len);
  const std::string header_text(bytes.data() + pos, header_len);
  pos += header_len;
  need(8);
  const auto payload_len = get_le<std::uint64_t>(p + pos);
  pos += 8;
  if (payload_len > n) throw Error(Errc::CorruptCheckpoint, "checkpoint truncated");
  need(static_cast<std::size_t>(payload_len));
  const std::size_t payload_pos = pos;
  pos += static_cast<std::size_t>(payload_len);
  need(4);
  const auto stored_crc = get_le<std::uint32_t>(p + pos);
  if (pos + 4 != n) throw Error(Errc::CorruptCheckpoint, "trailing bytes after checkpoint");
  if (crc32_of(p, pos) != stored_crc) throw Error(Errc::CorruptCheckpoint, "checksum mismatch");

  CheckpointView v;
  try {
    v.header = io::json::parse(header_text);
  } catch (const io::json::parse_error& e) {
    throw Error(Errc::CorruptCheckpoint, std::string("header: ") + e.what());
  }
  if (v.header.value("version", "") != kBundleVersion) {
    throw Error(Errc::VersionMismatch, "bundle version '" + v.header.value("version", "") + "'");
  }
  v.payload = p + payload_pos;
  v.payload_len = static_cast<std::size_t>(payload_len);
  return v;
}

}  // namespace detail

/// "f32" or "f64" as recorded in the checkpoint header.
inline std::string checkpoint_precision(const std::string& bytes) {
  return detail::open_checkpoint(bytes).header.at("precision").get<std::string>();
}

template <std::floating_point T>
ModelBundle<T> deserialize_bundle(const std::string& bytes) {
  const auto view = detail::open_checkpoint(bytes);
  const auto& h = view.header;
  if (h.at("precision").get<std::string>() != precision_name<T>()) {
    throw Error(Errc::InvalidConfig, "checkpoint precision is " + h.at("precision").get<std::string>());
  }
  ModelBundle<T> b;
  try {
    b.version = h.at("version").get<std::string>();
    for (const auto& l : h.at("autoencoder").at("encoder")) b.autoencoder.encoder.push_back(detail::layer_from_json<T>(l));
    for (const auto& l : h.at("autoencoder").at("decoder")) b.autoencoder.decoder.push_back(detail::layer_from_json<T>(l));
    b.rul.lstm = nn::LstmParams<T>(h.at("lstm").at("input_size").get<std::size_t>(),
                                   h.at("lstm").at("hidden_size").get<std::size_t>());
    b.rul.head = detail::layer_from_json<T>(h.at("head"));
    b.norm = io::norm_stats_from_json(h.at("norm"));
    b.config = io::train_config_from_json(h.at("config"));
    b.split = io::split_from_json(h.at("split"));
  } catch (const io::json::exception& e) {
    throw Error(Errc::CorruptCheckpoint, std::string("header: ") + e.what());
  }
  validate_bundle(b);
  std::size_t expected = 0;
  detail::visit_bundle(b, [&expected](const nn::Tensor<T>& t) { expected += t.size() * sizeof(T); });
  if (expected != view.payload_len) throw Error(Errc::CorruptCheckpoint, "payload size does not match shapes");
  const unsigned char* p = view.payload;
  detail::visit_bundle(b, [&p](nn::Tensor<T>& t) {
    for (auto& v : t.values()) {
      v = detail::get_le<T>(p);
      p += sizeof(T);
    }
  });
  return b;
}

template <std::floating_point T>
ModelBundle<T> load_bundle(std::istream& source) {
  const std::string bytes((std::istreambuf_iterator<char>(source)), std::istreambuf_iterator<char>());
  return deserialize_bundle<T>(bytes);
}

}  // namespace batrul
