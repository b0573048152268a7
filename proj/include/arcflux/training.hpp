#pragma once

// Cross-entropy, batched reverse-mode gradients, Adam with a cosine schedule
// and the epoch loop with validation tracking and best-checkpoint selection.

#include "arcflux/common.hpp"
#include "arcflux/fas.hpp"
#include "arcflux/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace arcflux::training {

enum class LrSchedule { constant, cosine_decay };

inline std::string_view to_string(LrSchedule s) {
  return s == LrSchedule::constant ? "constant" : "cosine-decay";
}

inline LrSchedule schedule_from_string(std::string_view s) {
  if (s == "constant") return LrSchedule::constant;
  if (s == "cosine-decay") return LrSchedule::cosine_decay;
  throw ConfigError("unknown lr_schedule '" + std::string(s) + "' (expected constant or cosine-decay)");
}

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  LrSchedule lr_schedule = LrSchedule::cosine_decay;
  // Cosine decay ends at lr * lr_final_ratio (1e-4 -> 1e-6 by default).
  double lr_final_ratio = 0.01;
  double clip_norm = 1.0;  // <= 0 disables clipping
  // Stop once validation accuracy reaches this value; <= 0 disables.
  double target_val_acc = 0.0;
  // Wall-clock budget in seconds; <= 0 disables. An epoch is only started
  // when the previous one suggests it will finish inside the budget, so runs
  // that use it are not reproducible across machines.
  double max_seconds = 0.0;

  void validate() const {
    if (epochs < 1 || batch_size < 1) throw ConfigError("train: epochs and batch_size must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError("train: lr must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
      throw ConfigError("train: adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be > 0");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double val_acc = 0;
  double lr = 0;  // learning rate at the last step of the epoch
  double wall_ms = 0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

/// One line per epoch, space separated key=value pairs.
inline std::string format_log_line(const EpochRecord& r) {
  std::ostringstream os;
  os.precision(6);
  os << "epoch=" << r.epoch << " train_loss=" << r.train_loss << " val_loss=" << r.val_loss
     << " val_acc=" << r.val_acc << " lr=" << r.lr << " wall_ms=" << r.wall_ms;
  return os.str();
}

/// Tab-separated history with a header row.
inline void write_history_tsv(std::ostream& os, std::span<const EpochRecord> history) {
  os << "epoch\ttrain_loss\tval_loss\tval_acc\tlr\twall_ms\n";
  os.precision(10);
  for (const auto& r : history)
    os << r.epoch << '\t' << r.train_loss << '\t' << r.val_loss << '\t' << r.val_acc << '\t' << r.lr << '\t'
       << r.wall_ms << '\n';
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// -log softmax(logits)[label] via log-sum-exp.
template <Real T>
T cross_entropy(const std::array<T, 2>& logits, int label) {
  // log(1 + exp(d)) with d the margin of the other logit, in a stable form.
  const auto l = static_cast<std::size_t>(label);
  const T d = logits[1 - l] - logits[l];
  return d > T(0) ? d + std::log1p(std::exp(-d)) : std::log1p(std::exp(d));
}

/// d loss / d logits = softmax(logits) - onehot(label).
template <Real T>
std::array<T, 2> cross_entropy_grad(const std::array<T, 2>& logits, int label) {
  auto p = model::softmax(logits);
  p[static_cast<std::size_t>(label)] -= T(1);
  return p;
}

struct Sample {
  std::span<const double> seq;
  int label;
};

/// Mean cross-entropy over the batch and its exact gradient (overwrites grads).
/// Samples are processed in batch order, so the summation order is fixed.
inline double batch_backward(const model::ModelParams<double>& p, std::span<const Sample> batch,
                             model::ModelParams<double>& grads, model::Workspace<double>& ws,
                             model::Mode mode = model::Mode::eval, std::mt19937_64* rng = nullptr) {
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");
  for (auto& v : model::tensor_views(grads)) std::fill_n(v.data, v.size, 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& s : batch) {
    model::forward(p, s.seq, ws, mode, rng);
    loss += cross_entropy(ws.logits, s.label);
    auto g = cross_entropy_grad(ws.logits, s.label);
    g[0] *= scale;
    g[1] *= scale;
    model::backward(p, ws, g, grads);
  }
  return loss * scale;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct TrainState {
  model::ModelParams<double> params;
  model::ModelParams<double> adam_m;
  model::ModelParams<double> adam_v;
  std::int64_t step = 0;
  std::mt19937_64 rng;
  std::vector<EpochRecord> history;

  static TrainState fresh(model::ModelParams<double> p, std::uint64_t seed) {
    TrainState s;
    s.adam_m = model::ModelParams<double>::zeros(p.cfg);
    s.adam_v = model::ModelParams<double>::zeros(p.cfg);
    s.params = std::move(p);
    s.rng.seed(seed);
    return s;
  }
};

inline double scheduled_lr(const TrainConfig& cfg, std::int64_t step, std::int64_t total_steps) {
  if (cfg.lr_schedule == LrSchedule::constant || total_steps <= 1) return cfg.lr;
  const double floor_lr = cfg.lr * cfg.lr_final_ratio;
  const double progress = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps - 1), 0.0, 1.0);
  return floor_lr + 0.5 * (cfg.lr - floor_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

inline double global_norm(const model::ModelParams<double>& g) {
  double sq = 0.0;
  for (const auto& v : model::tensor_views(g))
    for (std::size_t i = 0; i < v.size; ++i) sq += v.data[i] * v.data[i];
  return std::sqrt(sq);
}

/// Rescales grads in place so their global norm is at most max_norm.
inline void clip_global_norm(model::ModelParams<double>& g, double max_norm) {
  if (max_norm <= 0.0) return;
  const double norm = global_norm(g);
  if (norm <= max_norm) return;
  const double s = max_norm / norm;
  for (auto& v : model::tensor_views(g))
    for (std::size_t i = 0; i < v.size; ++i) v.data[i] *= s;
}

/// Bias-corrected Adam step at learning rate lr; increments state.step.
inline void adam_step(TrainState& state, const model::ModelParams<double>& grads, const TrainConfig& cfg, double lr) {
  ++state.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  auto p = model::tensor_views(state.params);
  auto m = model::tensor_views(state.adam_m);
  auto v = model::tensor_views(state.adam_v);
  auto g = model::tensor_views(grads);
  require(p.size() == g.size() && m.size() == g.size() && v.size() == g.size(),
          "adam: gradient tensors are not congruent with params");
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (p[t].size != g[t].size) throw ShapeError("adam: gradient tensor '" + g[t].name + "' has the wrong size");
    for (std::size_t i = 0; i < p[t].size; ++i) {
      const double gi = g[t].data[i];
      double& mi = m[t].data[i];
      double& vi = v[t].data[i];
      mi = b1 * mi + (1.0 - b1) * gi;
      vi = b2 * vi + (1.0 - b2) * gi * gi;
      p[t].data[i] -= lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.adam_eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Fit
// ---------------------------------------------------------------------------

/// A labeled split of raw windows. Windows are shared, not copied.
struct LabeledSet {
  std::vector<std::span<const double>> windows;
  std::vector<int> labels;

  std::size_t size() const { return windows.size(); }
};

/// Model input sequences for a set: FAS features when the model uses them,
/// otherwise the raw windows themselves.
inline std::vector<std::vector<double>> model_inputs(const model::ModelConfig& cfg, const LabeledSet& set) {
  std::vector<std::vector<double>> out;
  out.reserve(set.size());
  if (set.size() == 0) return out;
  const std::size_t len = set.windows.front().size();
  for (const auto& w : set.windows)
    if (w.size() != len) throw ShapeError("fit: ragged windows in one split");
  if (!cfg.use_fas) {
    for (const auto& w : set.windows) out.emplace_back(w.begin(), w.end());
    return out;
  }
  fas::check_k(cfg.k_fas, len);
  std::vector<double> scratch(len);
  for (const auto& w : set.windows) {
    std::vector<double> f(2 * cfg.k_fas);
    fas::fas_transform_into<double>(w, cfg.k_fas, scratch, f);
    out.push_back(std::move(f));
  }
  return out;
}

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
  std::vector<int> predictions;
};

inline int argmax(const std::array<double, 2>& z) { return z[1] > z[0] ? 1 : 0; }

/// Eval-mode loss, accuracy and predictions over prepared inputs.
inline EvalResult evaluate(const model::ModelParams<double>& p, const std::vector<std::vector<double>>& inputs,
                           std::span<const int> labels, model::Workspace<double>& ws) {
  EvalResult r;
  r.predictions.reserve(inputs.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    model::forward(p, std::span<const double>(inputs[i]), ws);
    r.loss += cross_entropy(ws.logits, labels[i]);
    const int pred = argmax(ws.logits);
    r.predictions.push_back(pred);
    correct += pred == labels[i] ? 1 : 0;
  }
  if (!inputs.empty()) {
    r.loss /= static_cast<double>(inputs.size());
    r.accuracy = static_cast<double>(correct) / static_cast<double>(inputs.size());
  }
  return r;
}

struct FitResult {
  TrainState state;
  model::ModelParams<double> best;
  EpochRecord best_record;
};

/// Trains from init_params(model_cfg, train_cfg.seed). `on_epoch` receives each
/// record as it is produced.
inline FitResult fit(const model::ModelConfig& model_cfg, const TrainConfig& cfg, const LabeledSet& train,
                     const LabeledSet& val, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  cfg.validate();
  model_cfg.validate();
  if (train.size() == 0 || val.size() == 0) throw DataError("fit: train and validation splits must be nonempty");

  const auto train_inputs = model_inputs(model_cfg, train);
  const auto val_inputs = model_inputs(model_cfg, val);

  FitResult out;
  out.state = TrainState::fresh(model::init_params<double>(model_cfg, cfg.seed), cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  TrainState& st = out.state;
  auto grads = model::ModelParams<double>::zeros(model_cfg);
  model::Workspace<double> ws;

  const std::size_t n = train.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const auto total_steps = static_cast<std::int64_t>(steps_per_epoch * cfg.epochs);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Sample> batch;
  batch.reserve(cfg.batch_size);
  bool have_best = false;
  const auto started = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), st.rng);
    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      batch.clear();
      for (std::size_t i = start; i < std::min(n, start + cfg.batch_size); ++i)
        batch.push_back({std::span<const double>(train_inputs[order[i]]), train.labels[order[i]]});
      const double loss = batch_backward(st.params, batch, grads, ws, model::Mode::train, &st.rng);
      if (!std::isfinite(loss)) throw NumericalError("non-finite training loss", st.step);
      loss_sum += loss * static_cast<double>(batch.size());
      clip_global_norm(grads, cfg.clip_norm);
      lr = scheduled_lr(cfg, st.step, total_steps);
      adam_step(st, grads, cfg, lr);
    }

    const EvalResult v = evaluate(st.params, val_inputs, val.labels, ws);
    if (!std::isfinite(v.loss)) throw NumericalError("non-finite validation loss", st.step);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.val_loss = v.loss;
    rec.val_acc = v.accuracy;
    rec.lr = lr;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    st.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const bool better = !have_best || rec.val_acc > out.best_record.val_acc ||
                        (rec.val_acc == out.best_record.val_acc && rec.val_loss < out.best_record.val_loss);
    if (better) {
      out.best = st.params;
      out.best_record = rec;
      have_best = true;
    }
    if (cfg.target_val_acc > 0.0 && rec.val_acc >= cfg.target_val_acc) break;
    if (cfg.max_seconds > 0.0) {
      const double spent = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (spent + rec.wall_ms / 1000.0 > cfg.max_seconds) break;
    }
  }
  return out;
}

}  // namespace arcflux::training
