#pragma once

// Self-describing binary checkpoint:
//
//   "ARCFLUXC"                      8-byte magic
//   u32 version
//   u32 n, n bytes                  JSON header {"model": ModelConfig, "meta": {...}}
//   u32 tensor count
//   per tensor: u32 name length, name, u32 rank, rank x u64 dims, f64 values
//   u32 CRC-32 of every preceding byte
//
// All integers and reals are little-endian. Decoding then re-encoding a file
// reproduces it byte for byte.

#include "arcflux/common.hpp"
#include "arcflux/model.hpp"

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace arcflux::checkpoint {

inline constexpr char kMagic[8] = {'A', 'R', 'C', 'F', 'L', 'U', 'X', 'C'};
inline constexpr std::uint32_t kVersion = 1;

struct Checkpoint {
  model::ModelParams<double> params;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
};

namespace detail {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<unsigned char>& buffer() { return out_; }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  Reader(const unsigned char* p, std::size_t n) : p_(p), end_(p + n) {}

  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end_ - p_) < n) throw TruncatedError("checkpoint: file is truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[i]) << (8 * i);
    p_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p_[i]) << (8 * i);
    p_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
  }
  std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }

 private:
  const unsigned char* p_;
  const unsigned char* end_;
};

inline std::uint32_t crc32_of(const unsigned char* p, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

}  // namespace detail

inline std::vector<unsigned char> encode(const Checkpoint& ck) {
  detail::Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(kVersion);
  nlohmann::ordered_json header;
  header["model"] = ck.params.cfg;
  header["meta"] = ck.meta;
  w.str(header.dump());
  const auto views = model::tensor_views(ck.params);
  w.u32(static_cast<std::uint32_t>(views.size()));
  for (const auto& v : views) {
    w.str(v.name);
    w.u32(static_cast<std::uint32_t>(v.shape.size()));
    for (std::size_t d : v.shape) w.u64(d);
    for (std::size_t i = 0; i < v.size; ++i) w.f64(v.data[i]);
  }
  auto& buf = w.buffer();
  w.u32(detail::crc32_of(buf.data(), buf.size()));
  return std::move(buf);
}

inline Checkpoint decode(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < sizeof kMagic + 8) throw TruncatedError("checkpoint: file is truncated");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw DataError("checkpoint: not an arcflux checkpoint");
  detail::Reader r(bytes.data() + sizeof kMagic, bytes.size() - sizeof kMagic);
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw VersionError("checkpoint: format version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kVersion) + ")");
  const std::uint32_t stored_crc =
      static_cast<std::uint32_t>(bytes[bytes.size() - 4]) | static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8 |
      static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16 | static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24;

  Checkpoint ck;
  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(r.str());
    ck.params = model::ModelParams<double>::zeros(header.at("model").get<model::ModelConfig>());
    ck.meta = header.at("meta");
  } catch (const nlohmann::json::exception& e) {
    if (detail::crc32_of(bytes.data(), bytes.size() - 4) != stored_crc)
      throw ChecksumError("checkpoint: checksum mismatch");
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  }

  auto views = model::tensor_views(ck.params);
  const std::uint32_t count = r.u32();
  if (count != views.size())
    throw DataError("checkpoint: " + std::to_string(count) + " tensors stored, config implies " +
                    std::to_string(views.size()));
  for (auto& v : views) {
    const std::string name = r.str();
    if (name != v.name) throw DataError("checkpoint: expected tensor '" + v.name + "', found '" + name + "'");
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = r.u64();
    if (shape != v.shape) throw ShapeError("checkpoint: tensor '" + name + "' has an unexpected shape");
    r.need(8 * v.size);
    for (std::size_t i = 0; i < v.size; ++i) v.data[i] = r.f64();
  }
  if (r.remaining() != 4) throw DataError("checkpoint: unexpected trailing bytes");
  if (detail::crc32_of(bytes.data(), bytes.size() - 4) != stored_crc) throw ChecksumError("checkpoint: checksum mismatch");
  return ck;
}

inline void save(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = encode(ck);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("checkpoint: cannot write " + path.string());
}

inline std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline Checkpoint load(const std::filesystem::path& path) { return decode(read_bytes(path)); }

}  // namespace arcflux::checkpoint
