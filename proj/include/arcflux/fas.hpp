#pragma once

// Feature amplification: a window is reduced to its K largest values
// (descending) followed by its K smallest values (ascending).

#include "arcflux/common.hpp"

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace arcflux::fas {

struct FasConfig {
  std::size_t k = 512;
};

template <Real T = double>
struct FasFeatures {
  std::vector<T> values;  // 2K: top block then bottom block
  std::size_t source_len = 0;

  std::size_t k() const { return values.size() / 2; }
  std::span<const T> top() const { return std::span<const T>(values).first(k()); }
  std::span<const T> bottom() const { return std::span<const T>(values).last(k()); }
};

inline void check_k(std::size_t k, std::size_t len) {
  if (len == 0) throw std::invalid_argument("fas: empty window");
  if (k == 0) throw std::invalid_argument("fas: k must be >= 1");
  if (2 * k > len)
    throw std::invalid_argument("fas: 2k = " + std::to_string(2 * k) + " exceeds window length " +
                                std::to_string(len));
}

/// Allocation-free core. `scratch` must hold window.size() values and `out`
/// exactly 2k values.
template <Real T>
void fas_transform_into(std::span<const T> window, std::size_t k, std::span<T> scratch, std::span<T> out) {
  check_k(k, window.size());
  require(scratch.size() >= window.size(), "fas: scratch smaller than window");
  require(out.size() == 2 * k, "fas: output span must hold 2k values");
  const auto first = scratch.begin();
  const auto last = first + static_cast<std::ptrdiff_t>(window.size());
  const auto kk = static_cast<std::ptrdiff_t>(k);
  std::copy(window.begin(), window.end(), first);
  // Largest k to the front, then the smallest k of the remainder right after.
  // The remainder's smallest k are the window's smallest k because every
  // element removed by the first pass is >= every element left.
  std::nth_element(first, first + kk, last, std::greater<T>{});
  std::nth_element(first + kk, first + 2 * kk, last);
  std::sort(first, first + kk, std::greater<T>{});
  std::sort(first + kk, first + 2 * kk);
  std::copy(first, first + 2 * kk, out.begin());
}

template <Real T>
FasFeatures<T> fas_transform(std::span<const T> window, const FasConfig& cfg) {
  check_k(cfg.k, window.size());
  FasFeatures<T> f;
  f.source_len = window.size();
  f.values.resize(2 * cfg.k);
  std::vector<T> scratch(window.size());
  fas_transform_into<T>(window, cfg.k, scratch, f.values);
  return f;
}

template <Real T>
FasFeatures<T> fas_transform(const std::vector<T>& window, const FasConfig& cfg) {
  return fas_transform(std::span<const T>(window), cfg);
}

template <Real T>
std::vector<FasFeatures<T>> fas_batch(std::span<const std::vector<T>> windows, const FasConfig& cfg) {
  std::vector<FasFeatures<T>> out;
  if (windows.empty()) return out;
  const std::size_t len = windows.front().size();
  for (const auto& w : windows)
    if (w.size() != len) throw ShapeError("fas_batch: ragged batch (window lengths differ)");
  check_k(cfg.k, len);
  out.reserve(windows.size());
  std::vector<T> scratch(len);
  for (const auto& w : windows) {
    FasFeatures<T> f;
    f.source_len = len;
    f.values.resize(2 * cfg.k);
    fas_transform_into<T>(w, cfg.k, scratch, f.values);
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace arcflux::fas
