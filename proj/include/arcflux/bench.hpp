#pragma once

// Single-window inference latency: FAS (when enabled) followed by a forward
// pass, timed per iteration on a monotonic clock.

#include "arcflux/common.hpp"
#include "arcflux/fas.hpp"
#include "arcflux/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace arcflux::bench {

enum class Width { f64, f32 };

inline std::string_view to_string(Width w) { return w == Width::f64 ? "f64" : "f32"; }

inline Width width_from_string(std::string_view s) {
  if (s == "f64") return Width::f64;
  if (s == "f32") return Width::f32;
  throw ConfigError("unknown arithmetic width '" + std::string(s) + "' (expected f64 or f32)");
}

struct Percentiles {
  double p50 = 0, p95 = 0, mean = 0, min = 0, max = 0;
};

/// Nearest-rank percentiles of a sample (copied, then sorted).
inline Percentiles summarize(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("summarize: no samples");
  std::sort(v.begin(), v.end());
  auto rank = [&](double q) {
    const auto r = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
    return v[std::clamp<std::size_t>(r, 1, v.size()) - 1];
  };
  Percentiles p;
  p.p50 = rank(0.50);
  p.p95 = rank(0.95);
  p.min = v.front();
  p.max = v.back();
  p.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  p.mean = std::clamp(p.mean, p.min, p.max);
  return p;
}

struct LatencyStats {
  // End-to-end milliseconds.
  double p50 = 0, p95 = 0, mean = 0, min = 0, max = 0;
  std::size_t n_iters = 0;
  std::size_t warmup_iters = 0;
  model::ModelConfig model;
  std::size_t window_len = 0;
  unsigned threads = 1;
  Width width = Width::f64;
  Percentiles fas;      // FAS share alone (zeros when FAS is disabled)
  Percentiles forward;  // model forward alone
};

/// Preallocated single-window classifier. After the first call with a given
/// window length, classify() performs no heap allocation.
template <Real T>
class InferenceSession {
 public:
  explicit InferenceSession(model::ModelParams<T> params) : params_(std::move(params)) {
    params_.cfg.validate();
    ws_.record_tape = false;
  }

  const model::ModelParams<T>& params() const { return params_; }

  void reserve(std::size_t window_len) {
    const auto& cfg = params_.cfg;
    if (cfg.use_fas) {
      fas::check_k(cfg.k_fas, window_len);
      scratch_.resize(window_len);
      features_.resize(2 * cfg.k_fas);
      ws_.prepare(cfg, 2 * cfg.k_fas);
    } else {
      ws_.prepare(cfg, window_len);
    }
  }

  // FAS step only; returns the sequence the model will consume.
  std::span<const T> features(std::span<const T> window) {
    if (!params_.cfg.use_fas) return window;
    if (scratch_.size() < window.size()) reserve(window.size());
    fas::fas_transform_into<T>(window, params_.cfg.k_fas, scratch_, features_);
    return features_;
  }

  const std::array<T, 2>& run_model(std::span<const T> seq) {
    model::forward(params_, seq, ws_);
    return ws_.logits;
  }

  const std::array<T, 2>& classify(std::span<const T> window) { return run_model(features(window)); }

 private:
  model::ModelParams<T> params_;
  model::Workspace<T> ws_;
  std::vector<T> scratch_;
  std::vector<T> features_;
};

struct BenchConfig {
  std::size_t iters = 1000;
  std::size_t warmup = 100;
  std::size_t window_len = 1024;
  std::uint64_t seed = 0;
  Width width = Width::f64;
};

namespace detail {

template <Real T>
LatencyStats run(InferenceSession<T>& session, const BenchConfig& bc) {
  if (bc.iters < 1) throw ConfigError("bench: iters must be >= 1");
  std::mt19937_64 rng(bc.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<T> window(bc.window_len);
  for (auto& v : window) v = static_cast<T>(gauss(rng));
  session.reserve(bc.window_len);

  using clock = std::chrono::steady_clock;
  std::vector<double> total(bc.iters), fas_ms(bc.iters), fwd_ms(bc.iters);
  volatile T sink = 0;
  for (std::size_t i = 0; i < bc.warmup + bc.iters; ++i) {
    const auto t0 = clock::now();
    const auto seq = session.features(window);
    const auto t1 = clock::now();
    const auto& logits = session.run_model(seq);
    const auto t2 = clock::now();
    sink = sink + logits[0];
    if (i < bc.warmup) continue;
    const std::size_t j = i - bc.warmup;
    fas_ms[j] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    fwd_ms[j] = std::chrono::duration<double, std::milli>(t2 - t1).count();
    total[j] = std::chrono::duration<double, std::milli>(t2 - t0).count();
  }

  LatencyStats s;
  const Percentiles p = summarize(total);
  s.p50 = p.p50;
  s.p95 = p.p95;
  s.mean = p.mean;
  s.min = p.min;
  s.max = p.max;
  s.n_iters = bc.iters;
  s.warmup_iters = bc.warmup;
  s.model = session.params().cfg;
  s.window_len = bc.window_len;
  s.width = bc.width;
  if (session.params().cfg.use_fas) s.fas = summarize(fas_ms);
  s.forward = summarize(fwd_ms);
  return s;
}

}  // namespace detail

inline LatencyStats bench_inference(const model::ModelParams<double>& params, const BenchConfig& bc = {}) {
  if (bc.width == Width::f32) {
    InferenceSession<float> session(params.cast<float>());
    return detail::run(session, bc);
  }
  InferenceSession<double> session(params);
  return detail::run(session, bc);
}

inline nlohmann::ordered_json to_json(const Percentiles& p) {
  return {{"p50_ms", p.p50}, {"p95_ms", p.p95}, {"mean_ms", p.mean}, {"min_ms", p.min}, {"max_ms", p.max}};
}

inline nlohmann::ordered_json to_json(const LatencyStats& s) {
  nlohmann::ordered_json j = to_json(Percentiles{s.p50, s.p95, s.mean, s.min, s.max});
  j["n_iters"] = s.n_iters;
  j["warmup_iters"] = s.warmup_iters;
  j["fas"] = to_json(s.fas);
  j["forward"] = to_json(s.forward);
  j["environment"] = {{"threads", s.threads},
                      {"width", to_string(s.width)},
                      {"window_len", s.window_len},
                      {"hardware_concurrency", std::thread::hardware_concurrency()}};
  j["model"] = s.model;
  return j;
}

inline constexpr const char* kTsvHeader = "it_p50_ms\tit_p95_ms\tit_mean_ms";

inline std::string tsv_row(const LatencyStats& s) {
  std::ostringstream os;
  os.precision(6);
  os << s.p50 << '\t' << s.p95 << '\t' << s.mean;
  return os.str();
}

}  // namespace arcflux::bench
