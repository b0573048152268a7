#pragma once

// Synthetic arc / normal current windows, raw-signal windowing, stratified
// splits and the versioned on-disk dataset (binary blob + JSON manifest).

#include "arcflux/common.hpp"

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace arcflux::data {

inline constexpr std::size_t kWindowLen = 1024;
inline constexpr int kNormal = 0;
inline constexpr int kArc = 1;
inline constexpr int kUnlabeled = -1;
inline constexpr int kDatasetFormatVersion = 1;

struct WindowMeta {
  double voltage_tag = 0;  // nominal source voltage, informational only
  double burst_rate = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const WindowMeta&, const WindowMeta&) = default;
};

struct SignalWindow {
  std::vector<double> samples;
  int label = kUnlabeled;
  WindowMeta meta;

  friend bool operator==(const SignalWindow&, const SignalWindow&) = default;
};

/// Generator parameters. Defaults are desk-scale choices: a 1.7 A baseline with
/// a periodic ripple, a compact normal class and a dispersed arc class with
/// sparse heavy-tailed transients.
struct GenConfig {
  std::size_t n_per_class = 2000;
  std::size_t window_len = kWindowLen;
  double baseline = 1.7;
  double ripple_amplitude = 0.05;
  std::size_t period = 128;  // samples per ripple cycle
  double normal_sigma = 0.02;
  double arc_sigma = 0.03;
  double burst_rate = 0.02;
  double burst_scale = 0.25;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_per_class < 1 || window_len < 1 || period < 1)
      throw ConfigError("generate: n_per_class, window_len and period must be >= 1");
    if (!(normal_sigma >= 0.0)) throw ConfigError("generate: normal_sigma must be >= 0");
    if (!(arc_sigma > normal_sigma)) throw ConfigError("generate: arc_sigma must exceed normal_sigma");
    if (!(burst_rate >= 0.0 && burst_rate <= 1.0)) throw ConfigError("generate: burst_rate must lie in [0, 1]");
    if (!(burst_scale > 0.0)) throw ConfigError("generate: burst_scale must be > 0");
  }

  friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

inline void to_json(nlohmann::ordered_json& j, const GenConfig& c) {
  j = nlohmann::ordered_json{{"n_per_class", c.n_per_class},
                             {"window_len", c.window_len},
                             {"baseline", c.baseline},
                             {"ripple_amplitude", c.ripple_amplitude},
                             {"period", c.period},
                             {"normal_sigma", c.normal_sigma},
                             {"arc_sigma", c.arc_sigma},
                             {"burst_rate", c.burst_rate},
                             {"burst_scale", c.burst_scale},
                             {"seed", c.seed}};
}

inline void from_json(const nlohmann::ordered_json& j, GenConfig& c) {
  c.n_per_class = j.at("n_per_class").get<std::size_t>();
  c.window_len = j.at("window_len").get<std::size_t>();
  c.baseline = j.at("baseline").get<double>();
  c.ripple_amplitude = j.at("ripple_amplitude").get<double>();
  c.period = j.at("period").get<std::size_t>();
  c.normal_sigma = j.at("normal_sigma").get<double>();
  c.arc_sigma = j.at("arc_sigma").get<double>();
  c.burst_rate = j.at("burst_rate").get<double>();
  c.burst_scale = j.at("burst_scale").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// One window of the given class, fully determined by (cfg, label, window_seed).
inline SignalWindow generate_window(const GenConfig& cfg, int label, std::uint64_t window_seed) {
  static constexpr double kVoltages[] = {100.0, 150.0, 200.0, 300.0};
  std::mt19937_64 rng(window_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::exponential_distribution<double> tail(1.0);

  SignalWindow w;
  w.label = label;
  w.meta.seed = window_seed;
  w.meta.voltage_tag = kVoltages[rng() % 4];
  w.meta.burst_rate = label == kArc ? cfg.burst_rate : 0.0;
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  const double sigma = label == kArc ? cfg.arc_sigma : cfg.normal_sigma;
  w.samples.resize(cfg.window_len);
  for (std::size_t t = 0; t < cfg.window_len; ++t) {
    const double ripple =
        cfg.ripple_amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / static_cast<double>(cfg.period) + phase);
    // Draw order is fixed per sample so that a zero sigma or rate changes no other value.
    const double noise = gauss(rng);
    const double coin = unit(rng);
    const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    const double magnitude = tail(rng);
    double v = cfg.baseline + ripple + sigma * noise;
    if (label == kArc && coin < cfg.burst_rate) v = cfg.baseline + sign * cfg.burst_scale * magnitude;
    w.samples[t] = v;
  }
  return w;
}

/// n_per_class normal windows followed by n_per_class arc windows.
inline std::vector<SignalWindow> generate(const GenConfig& cfg) {
  cfg.validate();
  std::vector<SignalWindow> out;
  out.reserve(2 * cfg.n_per_class);
  for (int label : {kNormal, kArc})
    for (std::size_t i = 0; i < cfg.n_per_class; ++i) {
      const std::uint64_t index = static_cast<std::uint64_t>(label) * cfg.n_per_class + i;
      out.push_back(generate_window(cfg, label, splitmix64(cfg.seed ^ splitmix64(index))));
    }
  return out;
}

/// Non-overlapping consecutive windows; a trailing remainder is dropped.
inline std::vector<SignalWindow> window_signal(std::span<const double> raw, std::size_t len = kWindowLen) {
  if (len == 0) throw std::invalid_argument("window_signal: window length must be >= 1");
  if (raw.size() < len)
    throw DataError("window_signal: raw signal of " + std::to_string(raw.size()) + " samples is shorter than one window (" +
                    std::to_string(len) + ")");
  std::vector<SignalWindow> out(raw.size() / len);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i].samples.assign(raw.begin() + static_cast<std::ptrdiff_t>(i * len),
                          raw.begin() + static_cast<std::ptrdiff_t>((i + 1) * len));
  return out;
}

struct Splits {
  std::vector<SignalWindow> train;
  std::vector<SignalWindow> val;
  std::vector<SignalWindow> test;
};

/// Distributes `total` over classes proportionally to `counts` (largest
/// remainder, ties to the lower class index).
inline std::array<std::size_t, 2> allocate(std::size_t total, const std::array<std::size_t, 2>& counts) {
  const std::size_t n = counts[0] + counts[1];
  std::array<std::size_t, 2> q{};
  std::array<std::size_t, 2> rem{};
  std::size_t used = 0;
  for (int c = 0; c < 2; ++c) {
    q[c] = total * counts[c] / n;
    rem[c] = total * counts[c] % n;
    used += q[c];
  }
  if (used < total) q[rem[1] > rem[0] ? 1 : 0] += 1;
  return q;
}

inline constexpr double kValFraction = 0.1;

/// Stratified seeded split: test takes round(N*(1-ratio_train)); validation is
/// the last 10% of the remaining train portion.
inline Splits split(const std::vector<SignalWindow>& windows, double ratio_train, std::uint64_t seed) {
  if (!(ratio_train > 0.0 && ratio_train < 1.0)) throw ConfigError("split: ratio_train must lie in (0, 1)");
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const int label = windows[i].label;
    if (label != kNormal && label != kArc) throw DataError("split: window " + std::to_string(i) + " is unlabeled");
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) throw DataError("split: both classes must be present");

  const std::size_t n = windows.size();
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * (1.0 - ratio_train)));
  const std::size_t n_train_part = n - std::min(n, n_test);
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n_train_part) * kValFraction));
  if (n_test == 0 || n_val == 0 || n_train_part <= n_val)
    throw DataError("split: ratio " + std::to_string(ratio_train) + " on " + std::to_string(n) +
                    " windows leaves an empty split");

  const std::array<std::size_t, 2> counts{by_class[0].size(), by_class[1].size()};
  const auto test_q = allocate(n_test, counts);
  const auto val_q = allocate(n_val, {counts[0] - test_q[0], counts[1] - test_q[1]});

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train_idx, val_idx, test_idx;
  for (std::size_t c = 0; c < 2; ++c) {
    auto& idx = by_class[c];
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t train_end = idx.size() - test_q[c] - val_q[c];
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(train_end));
    val_idx.insert(val_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(train_end),
                   idx.begin() + static_cast<std::ptrdiff_t>(train_end + val_q[c]));
    test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(train_end + val_q[c]), idx.end());
  }
  Splits s;
  for (auto [idx, dst] : {std::pair{&train_idx, &s.train}, std::pair{&val_idx, &s.val}, std::pair{&test_idx, &s.test}}) {
    std::shuffle(idx->begin(), idx->end(), rng);
    dst->reserve(idx->size());
    for (std::size_t i : *idx) dst->push_back(windows[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// On-disk format
// ---------------------------------------------------------------------------

struct SplitCounts {
  std::size_t normal = 0;
  std::size_t arc = 0;

  std::size_t total() const { return normal + arc; }
  friend bool operator==(const SplitCounts&, const SplitCounts&) = default;
};

struct DatasetManifest {
  int format_version = kDatasetFormatVersion;
  std::size_t window_len = 0;
  std::size_t record_bytes = 0;
  SplitCounts train, val, test;
  GenConfig generator;
  double ratio_train = 0.7;
  std::uint64_t split_seed = 0;
  std::uint32_t checksum = 0;  // CRC-32 of windows.bin

  std::size_t records() const { return train.total() + val.total() + test.total(); }
};

inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "windows.bin";

/// samples (f64 LE) | label (u8) | voltage_tag (f64 LE) | burst_rate (f64 LE) | seed (u64 LE)
inline std::size_t record_bytes(std::size_t window_len) { return 8 * window_len + 1 + 24; }

namespace detail {

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline std::uint32_t crc32_of(const std::vector<unsigned char>& bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = ::crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

inline SplitCounts count(const std::vector<SignalWindow>& ws) {
  SplitCounts c;
  for (const auto& w : ws) (w.label == kArc ? c.arc : c.normal) += 1;
  return c;
}

inline std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

}  // namespace detail

inline nlohmann::ordered_json manifest_json(const DatasetManifest& m) {
  auto counts = [](const SplitCounts& c) { return nlohmann::ordered_json{{"normal", c.normal}, {"arc", c.arc}}; };
  return nlohmann::ordered_json{
      {"format_version", m.format_version},
      {"window_len", m.window_len},
      {"record_bytes", m.record_bytes},
      {"records", m.records()},
      {"counts", {{"train", counts(m.train)}, {"val", counts(m.val)}, {"test", counts(m.test)}}},
      {"generator", m.generator},
      {"split", {{"ratio_train", m.ratio_train}, {"seed", m.split_seed}}},
      {"checksum", {{"algorithm", "crc32"}, {"value", detail::hex32(m.checksum)}}}};
}

inline void save_dataset(const std::filesystem::path& dir, const Splits& s, const GenConfig& gen, double ratio_train,
                         std::uint64_t split_seed) {
  DatasetManifest m;
  m.window_len = s.train.empty() ? 0 : s.train.front().samples.size();
  m.record_bytes = record_bytes(m.window_len);
  m.train = detail::count(s.train);
  m.val = detail::count(s.val);
  m.test = detail::count(s.test);
  m.generator = gen;
  m.ratio_train = ratio_train;
  m.split_seed = split_seed;

  std::vector<unsigned char> blob;
  blob.reserve(m.records() * m.record_bytes);
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    for (const auto& w : *part) {
      if (w.samples.size() != m.window_len) throw ShapeError("save_dataset: windows have differing lengths");
      for (double v : w.samples) detail::put_u64(blob, std::bit_cast<std::uint64_t>(v));
      blob.push_back(static_cast<unsigned char>(w.label));
      detail::put_u64(blob, std::bit_cast<std::uint64_t>(w.meta.voltage_tag));
      detail::put_u64(blob, std::bit_cast<std::uint64_t>(w.meta.burst_rate));
      detail::put_u64(blob, w.meta.seed);
    }
  }
  m.checksum = detail::crc32_of(blob);

  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / kBlobFile, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    if (!f) throw DataError("save_dataset: cannot write " + (dir / kBlobFile).string());
  }
  std::ofstream f(dir / kManifestFile, std::ios::trunc);
  f << manifest_json(m).dump(2) << '\n';
  if (!f) throw DataError("save_dataset: cannot write " + (dir / kManifestFile).string());
}

struct LoadedDataset {
  DatasetManifest manifest;
  Splits splits;
};

inline LoadedDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / kManifestFile);
  if (!mf) throw DataError("load_dataset: cannot open " + (dir / kManifestFile).string());
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(mf);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("load_dataset: malformed manifest: ") + e.what());
  }

  LoadedDataset out;
  DatasetManifest& m = out.manifest;
  try {
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kDatasetFormatVersion)
      throw VersionError("load_dataset: manifest format_version " + std::to_string(m.format_version) +
                         " is not supported (expected " + std::to_string(kDatasetFormatVersion) + ")");
    m.window_len = j.at("window_len").get<std::size_t>();
    m.record_bytes = j.at("record_bytes").get<std::size_t>();
    auto counts = [&](const char* key) {
      return SplitCounts{j.at("counts").at(key).at("normal").get<std::size_t>(),
                         j.at("counts").at(key).at("arc").get<std::size_t>()};
    };
    m.train = counts("train");
    m.val = counts("val");
    m.test = counts("test");
    m.generator = j.at("generator").get<GenConfig>();
    m.ratio_train = j.at("split").at("ratio_train").get<double>();
    m.split_seed = j.at("split").at("seed").get<std::uint64_t>();
    m.checksum = static_cast<std::uint32_t>(std::stoul(j.at("checksum").at("value").get<std::string>(), nullptr, 16));
    if (j.at("records").get<std::size_t>() != m.records())
      throw DataError("load_dataset: manifest record count disagrees with its per-split counts");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("load_dataset: malformed manifest: ") + e.what());
  }
  if (m.record_bytes != record_bytes(m.window_len))
    throw DataError("load_dataset: record_bytes does not match window_len");

  std::ifstream bf(dir / kBlobFile, std::ios::binary);
  if (!bf) throw DataError("load_dataset: cannot open " + (dir / kBlobFile).string());
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());
  const std::size_t expected = m.records() * m.record_bytes;
  if (blob.size() < expected)
    throw TruncatedError("load_dataset: blob has " + std::to_string(blob.size()) + " bytes, manifest expects " +
                         std::to_string(expected));
  if (blob.size() > expected)
    throw DataError("load_dataset: blob has " + std::to_string(blob.size() - expected) + " trailing bytes");
  if (detail::crc32_of(blob) != m.checksum)
    throw ChecksumError("load_dataset: checksum mismatch (manifest " + detail::hex32(m.checksum) + ", blob " +
                        detail::hex32(detail::crc32_of(blob)) + ")");

  const unsigned char* p = blob.data();
  auto read_part = [&](std::size_t count, std::vector<SignalWindow>& dst) {
    dst.resize(count);
    for (auto& w : dst) {
      w.samples.resize(m.window_len);
      for (auto& v : w.samples) {
        v = std::bit_cast<double>(detail::get_u64(p));
        p += 8;
      }
      w.label = *p++;
      if (w.label != kNormal && w.label != kArc) throw DataError("load_dataset: invalid label byte");
      w.meta.voltage_tag = std::bit_cast<double>(detail::get_u64(p));
      w.meta.burst_rate = std::bit_cast<double>(detail::get_u64(p + 8));
      w.meta.seed = detail::get_u64(p + 16);
      p += 24;
    }
  };
  read_part(m.train.total(), out.splits.train);
  read_part(m.val.total(), out.splits.val);
  read_part(m.test.total(), out.splits.test);
  return out;
}

}  // namespace arcflux::data
