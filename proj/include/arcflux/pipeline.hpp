#pragma once

// Glue shared by the command-line tool and the tests: train on a split, score
// the test portion, and run one ablation cell.

#include "arcflux/bench.hpp"
#include "arcflux/common.hpp"
#include "arcflux/data.hpp"
#include "arcflux/metrics.hpp"
#include "arcflux/model.hpp"
#include "arcflux/training.hpp"

#include <functional>
#include <string>
#include <vector>

namespace arcflux::pipeline {

inline training::LabeledSet labeled(const std::vector<data::SignalWindow>& ws) {
  training::LabeledSet s;
  s.windows.reserve(ws.size());
  s.labels.reserve(ws.size());
  for (const auto& w : ws) {
    s.windows.emplace_back(w.samples);
    s.labels.push_back(w.label);
  }
  return s;
}

/// Throws ShapeError when a model cannot consume windows of `window_len`.
inline void check_compatible(const model::ModelConfig& cfg, std::size_t window_len,
                             std::size_t trained_window_len = 0) {
  if (cfg.use_fas && 2 * cfg.k_fas > window_len)
    throw ShapeError("model k_fas = " + std::to_string(cfg.k_fas) + " needs windows of at least " +
                     std::to_string(2 * cfg.k_fas) + " samples, dataset windows have " + std::to_string(window_len));
  if (trained_window_len != 0 && trained_window_len != window_len)
    throw ShapeError("model (k_fas = " + std::to_string(cfg.k_fas) + ") was trained on windows of " +
                     std::to_string(trained_window_len) + " samples, dataset windows have " +
                     std::to_string(window_len));
}

inline training::EvalResult score(const model::ModelParams<double>& p, const std::vector<data::SignalWindow>& split) {
  const auto set = labeled(split);
  model::Workspace<double> ws;
  return training::evaluate(p, training::model_inputs(p.cfg, set), set.labels, ws);
}

struct TrainOutcome {
  training::FitResult fit;
  training::EvalResult test;
  metrics::EvalReport report;
};

/// Fits on splits.train / splits.val and scores the best checkpoint on splits.test.
inline TrainOutcome train_and_test(const model::ModelConfig& mcfg, const training::TrainConfig& tcfg,
                                   const data::Splits& splits,
                                   const std::function<void(const training::EpochRecord&)>& on_epoch = {}) {
  if (splits.train.empty() || splits.test.empty()) throw DataError("train: dataset has an empty split");
  check_compatible(mcfg, splits.train.front().samples.size());
  TrainOutcome out;
  out.fit = training::fit(mcfg, tcfg, labeled(splits.train), labeled(splits.val), on_epoch);
  out.test = score(out.fit.best, splits.test);
  std::vector<int> labels;
  for (const auto& w : splits.test) labels.push_back(w.label);
  out.report = metrics::report(metrics::confusion(out.test.predictions, labels));
  return out;
}

struct CellResult {
  std::string cell;
  metrics::EvalReport report;
  bench::LatencyStats latency;
  std::size_t epochs_run = 0;
};

inline CellResult run_cell(const std::string& name, const model::ModelConfig& mcfg, const training::TrainConfig& tcfg,
                           const data::Splits& splits, bench::BenchConfig bcfg) {
  CellResult r;
  r.cell = name;
  const auto outcome = train_and_test(mcfg, tcfg, splits);
  r.report = outcome.report;
  r.epochs_run = outcome.fit.state.history.size();
  bcfg.window_len = splits.test.front().samples.size();
  r.latency = bench::bench_inference(outcome.fit.best, bcfg);
  return r;
}

inline constexpr const char* kCellTsvHeader =
    "cell\tprecision\trecall\tf1\taccuracy\ttn\tfp\tfn\ttp\tit_p50_ms\tit_p95_ms\tit_mean_ms\tepochs";

inline std::string tsv_row(const CellResult& r) {
  return r.cell + '\t' + metrics::tsv_row(r.report) + '\t' + bench::tsv_row(r.latency) + '\t' +
         std::to_string(r.epochs_run);
}

}  // namespace arcflux::pipeline
