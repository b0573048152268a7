// Acceptance run: one PASS/FAIL line per criterion, details after each.
// Exit status is the number of failed criteria.

#include "arcflux/arcflux.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace arcflux;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void progress(const std::string& s) { std::cerr << "  .. " << s << std::endl; }

// Shared training budget for the end-to-end criteria.
struct Budget {
  data::GenConfig gen;
  model::ModelConfig model;
  training::TrainConfig train;

  Budget() {
    gen.n_per_class = 2000;
    gen.window_len = 256;
    model.d_model = 64;
    model.n_blocks = 4;
    model.k_fas = 32;
    train.epochs = 30;
    train.batch_size = 32;
    train.lr = 1e-3;
    train.target_val_acc = 0.99;
    // Both arms get the same 30 epochs and ten minutes of wall clock.
    train.max_seconds = 600.0;
  }
};

struct TrainedRun {
  double test_acc = 0;
  std::size_t epochs = 0;
  double seconds = 0;
};

TrainedRun train_once(const data::Splits& splits, model::ModelConfig mcfg, training::TrainConfig tcfg,
                      const std::string& label) {
  const auto t0 = Clock::now();
  const auto out = pipeline::train_and_test(mcfg, tcfg, splits, [&](const training::EpochRecord& r) {
    progress(label + " " + training::format_log_line(r));
  });
  TrainedRun run{out.test.accuracy, out.fit.state.history.size(), seconds_since(t0)};
  progress(label + " test_acc=" + fmt("%.4f", run.test_acc) + " epochs=" + std::to_string(run.epochs) +
           " wall_s=" + fmt("%.1f", run.seconds));
  return run;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

Verdict scan_forms() {
  Verdict v;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> n_dist(1, 16), len_dist(1, 128);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = oracle::random_discrete(rng, n_dist(rng));
    const auto x = oracle::random_vec(rng, len_dist(rng));
    const auto seq = ssm::scan_sequential<double>(d, x);
    const auto par = ssm::scan_parallel<double>(d, x);
    const auto conv = ssm::causal_convolve<double>(x, ssm::ssm_kernel(d, x.size()));
    worst = std::max({worst, oracle::max_rel(par, seq, 1e-9), oracle::max_rel(conv, seq, 1e-9)});
  }
  const double secs = seconds_since(t0);
  v.require(worst < 1e-9, "max relative error " + fmt("%.3g", worst));
  v.require(secs < 10.0, "runtime " + fmt("%.2f s", secs));
  v.note("100 instances, max rel err " + fmt("%.3g", worst) + ", " + fmt("%.3f s", secs));
  return v;
}

Verdict selective_oracle() {
  Verdict v;
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<std::size_t> len_dist(1, 8), small(1, 4);
  std::uniform_real_distribution<double> w(-0.8, 0.8);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t len = len_dist(rng), di = small(rng), n = small(rng);
    auto p = ssm::SelectiveParams<double>::zeros(di, n);
    for (auto* m : {&p.w_delta, &p.w_b, &p.w_c})
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = w(rng);
    for (Eigen::Index i = 0; i < p.b_delta.size(); ++i) p.b_delta[i] = w(rng) - 1.0;
    for (Eigen::Index i = 0; i < p.a_log.size(); ++i) p.a_log[i] = std::log(static_cast<double>(i + 1)) + 0.3 * w(rng);
    Mat<double> u(static_cast<Eigen::Index>(len), static_cast<Eigen::Index>(di));
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = 1.5 * w(rng);

    auto rows = [](const auto& m) {
      std::vector<std::vector<double>> out(static_cast<std::size_t>(m.rows()));
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)].push_back(m(r, c));
      return out;
    };
    const Mat<double> b_delta = p.b_delta;
    const Mat<double> a = p.a_diag();
    const auto ref = oracle::selective_dense(rows(u), rows(p.w_delta), rows(b_delta)[0], rows(p.w_b), rows(p.w_c),
                                             rows(a)[0]);
    const auto y = ssm::selective_scan(p, u);
    for (std::size_t r = 0; r < len; ++r)
      for (std::size_t c = 0; c < di; ++c)
        worst = std::max(worst, std::abs(y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) - ref[r][c]));
  }
  v.require(worst <= 1e-10, "max abs error " + fmt("%.3g", worst));
  v.note("50 instances, max abs err " + fmt("%.3g", worst));
  return v;
}

Verdict gradients() {
  Verdict v;
  const auto t0 = Clock::now();
  std::size_t checked = 0;
  for (auto head : {model::HeadKind::linear_last, model::HeadKind::linear_dropout, model::HeadKind::mlp,
                    model::HeadKind::mean_pool_linear}) {
    const auto mode = head == model::HeadKind::linear_dropout ? model::Mode::train : model::Mode::eval;
    const auto w = gradcheck::check(gradcheck::tiny(head), 5, gradcheck::tiny_sequence(), mode);
    checked += w.checked;
    v.require(w.rel < 1e-4, std::string(model::to_string(head)) + " " + w.tensor + "[" + std::to_string(w.index) +
                                "] rel " + fmt("%.3g", w.rel));
    v.note(std::string(model::to_string(head)) + " worst " + fmt("%.2g", w.rel) + " over " +
           std::to_string(w.tensors) + " tensors");
  }
  const double secs = seconds_since(t0);
  v.require(secs < 120.0, "runtime " + fmt("%.1f s", secs));
  v.note(std::to_string(checked) + " entries, " + fmt("%.2f s", secs));
  return v;
}

Verdict fas_oracle() {
  Verdict v;
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<std::size_t> len_dist(2, 1024);
  std::uniform_int_distribution<int> small(0, 3);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t len = len_dist(rng);
    std::vector<double> w;
    if (trial % 3 == 0) {
      w = oracle::random_vec(rng, len);
    } else if (trial % 3 == 1) {
      for (std::size_t i = 0; i < len; ++i) w.push_back(small(rng) * 0.5);
    } else {
      w.assign(len, 1.7);
    }
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, len / 2)(rng);
    auto got = fas::fas_transform(w, {k}).values;
    auto want = oracle::fas_full_sort(w, k);
    if (got != want) ++mismatches;
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    if (got != want) ++mismatches;
  }
  v.require(mismatches == 0, std::to_string(mismatches) + " mismatches");
  v.note("1000 windows (random, duplicate-heavy, constant)");
  return v;
}

Verdict metrics_arithmetic() {
  Verdict v;
  const metrics::ConfusionMatrix cm{2540, 102, 83, 2555};
  const auto r = metrics::report(cm);
  v.require(cm.tn + cm.tp == 5095 && cm.total() == 5280, "counts");
  v.require(r.accuracy == 5095.0 / 5280.0, "accuracy " + fmt("%.17g", r.accuracy));
  // Rational check: accuracy * 5280 rounds back to exactly 5095.
  v.require(r.accuracy * 5280.0 == 5095.0, "accuracy * 5280 != 5095");

  std::mt19937_64 rng(909);
  std::uniform_int_distribution<int> bit(0, 1);
  std::uniform_int_distribution<std::size_t> len(1, 300);
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> pred(len(rng)), label(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      pred[i] = trial % 7 == 0 ? 0 : bit(rng);
      label[i] = bit(rng);
    }
    const auto got = metrics::report(metrics::confusion(pred, label));
    const auto o = oracle::recount(pred, label);
    const bool same = got.cm == metrics::ConfusionMatrix{o.tn, o.fp, o.fn, o.tp} && got.accuracy == o.accuracy &&
                      std::abs(got.precision - o.precision) <= 1e-15 && std::abs(got.recall - o.recall) <= 1e-15 &&
                      std::abs(got.f1 - o.f1) <= 1e-15;
    bad += !same;
  }
  v.require(bad == 0, std::to_string(bad) + " of 1000 recounts differ");
  v.note("accuracy " + fmt("%.17g", r.accuracy) + " = 5095/5280; 1000 recounts agree");
  return v;
}

Verdict determinism_and_persistence() {
  Verdict v;
  const fs::path dir = fs::temp_directory_path() / "arcflux_acceptance";
  fs::remove_all(dir);

  data::GenConfig g;
  g.n_per_class = 60;
  g.window_len = 128;
  g.seed = 3;
  const auto splits = data::split(data::generate(g), 0.7, 3);
  model::ModelConfig m;
  m.d_model = 16;
  m.n_state = 4;
  m.n_blocks = 2;
  m.k_fas = 16;
  m.head = model::HeadKind::linear_dropout;
  training::TrainConfig t;
  t.epochs = 3;
  t.batch_size = 16;
  t.lr = 3e-3;
  t.seed = 11;
  const auto a = pipeline::train_and_test(m, t, splits);
  const auto b = pipeline::train_and_test(m, t, splits);
  const auto ca = checkpoint::encode({a.fit.best, {}});
  const auto cb = checkpoint::encode({b.fit.best, {}});
  v.require(ca == cb, "two fixed-seed runs produced different weights");
  bool same_history = a.fit.state.history.size() == b.fit.state.history.size();
  for (std::size_t i = 0; same_history && i < a.fit.state.history.size(); ++i)
    same_history = a.fit.state.history[i].train_loss == b.fit.state.history[i].train_loss &&
                   a.fit.state.history[i].val_loss == b.fit.state.history[i].val_loss;
  v.require(same_history, "loss histories differ");

  const auto ck = dir / "m.ckpt";
  checkpoint::save(ck, {a.fit.best, {{"note", "acceptance"}}});
  const auto bytes = checkpoint::read_bytes(ck);
  v.require(checkpoint::encode(checkpoint::load(ck)) == bytes, "checkpoint round trip not byte-identical");

  data::save_dataset(dir / "ds", splits, g, 0.7, 3);
  const auto loaded = data::load_dataset(dir / "ds");
  v.require(loaded.splits.train == splits.train && loaded.splits.val == splits.val &&
                loaded.splits.test == splits.test,
            "dataset round trip differs");

  auto expect_typed = [&](const std::string& what, auto&& fn, auto tag) {
    using E = typename decltype(tag)::type;
    try {
      fn();
      v.require(false, what + ": no error");
    } catch (const E&) {
    } catch (const std::exception& e) {
      v.require(false, what + ": wrong error type (" + e.what() + ")");
    }
  };
  auto flip = [](const fs::path& p, std::size_t at) {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(static_cast<std::streamoff>(at));
    const char c = static_cast<char>(f.get());
    f.seekp(static_cast<std::streamoff>(at));
    f.put(static_cast<char>(c ^ 0x20));
  };
  auto truncate = [](const fs::path& p, std::size_t drop) { fs::resize_file(p, fs::file_size(p) - drop); };
  struct Checksum { using type = ChecksumError; };
  struct Truncated { using type = TruncatedError; };
  struct Version { using type = VersionError; };

  flip(ck, bytes.size() / 2);
  expect_typed("checkpoint flipped byte", [&] { checkpoint::load(ck); }, Checksum{});
  checkpoint::save(ck, {a.fit.best, {}});
  truncate(ck, 5);
  expect_typed("checkpoint truncated", [&] { checkpoint::load(ck); }, Truncated{});
  checkpoint::save(ck, {a.fit.best, {}});
  flip(ck, 8);
  expect_typed("checkpoint version", [&] { checkpoint::load(ck); }, Version{});

  const auto blob = dir / "ds" / data::kBlobFile;
  flip(blob, fs::file_size(blob) / 2);
  expect_typed("dataset flipped byte", [&] { data::load_dataset(dir / "ds"); }, Checksum{});
  data::save_dataset(dir / "ds", splits, g, 0.7, 3);
  truncate(blob, 3);
  expect_typed("dataset truncated", [&] { data::load_dataset(dir / "ds"); }, Truncated{});

  fs::remove_all(dir);
  v.note("fixed-seed runs identical, round trips bit-exact, corruption typed");
  return v;
}

}  // namespace

// With arguments, only the listed criteria run: `acceptance 1 2 9`.
int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  std::vector<std::pair<int, Verdict>> results;
  auto record = [&](int id, const std::function<Verdict()>& fn) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) return;
    std::cerr << "criterion " << id << " ..." << std::endl;
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << v.detail << std::endl;
    results.emplace_back(id, v);
  };

  record(1, scan_forms);
  record(2, selective_oracle);
  record(3, gradients);
  record(4, fas_oracle);

  // End-to-end criteria share one dataset and one training budget.
  const Budget budget;
  const auto splits = data::split(data::generate(budget.gen), 0.7, 0);
  std::vector<TrainedRun> with_fas, raw;
  auto ensure_runs = [&] {
    if (!with_fas.empty()) return;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto t = budget.train;
      t.seed = seed;
      with_fas.push_back(train_once(splits, budget.model, t, "fas seed " + std::to_string(seed)));
      auto m = budget.model;
      m.use_fas = false;
      raw.push_back(train_once(splits, m, t, "raw seed " + std::to_string(seed)));
    }
  };

  record(5, [&] {
    Verdict v;
    ensure_runs();
    const auto& r = with_fas.front();
    v.require(r.test_acc >= 0.95, "test accuracy " + fmt("%.4f", r.test_acc));
    v.require(r.epochs <= 30, "epochs " + std::to_string(r.epochs));
    v.require(r.seconds < 600.0, "wall " + fmt("%.1f s", r.seconds));
    v.note("test acc " + fmt("%.4f", r.test_acc) + " after " + std::to_string(r.epochs) + " epochs in " +
           fmt("%.1f s", r.seconds));
    return v;
  });

  record(6, [&] {
    Verdict v;
    ensure_runs();
    std::vector<double> fa, ra;
    std::string per_seed;
    for (std::size_t i = 0; i < with_fas.size(); ++i) {
      fa.push_back(with_fas[i].test_acc);
      ra.push_back(raw[i].test_acc);
      per_seed += " s" + std::to_string(i) + "=" + fmt("%.4f", fa.back()) + "/" + fmt("%.4f", ra.back());
    }
    const double mf = median3(fa), mr = median3(ra);
    v.require(mf >= mr + 0.02, "median fas " + fmt("%.4f", mf) + " vs raw " + fmt("%.4f", mr));
    v.note("median fas " + fmt("%.4f", mf) + " raw " + fmt("%.4f", mr) + " (fas/raw:" + per_seed + ")");
    return v;
  });

  record(7, [&] {
    Verdict v;
    std::vector<double> p50;
    std::string lat;
    for (std::size_t blocks : {2u, 4u, 8u, 16u}) {
      auto m = budget.model;
      m.n_blocks = blocks;
      bench::BenchConfig bc;
      bc.iters = 200;
      bc.warmup = 20;
      bc.window_len = budget.gen.window_len;
      const auto s = bench::bench_inference(model::init_params<double>(m, 0), bc);
      p50.push_back(s.p50);
      lat += " " + std::to_string(blocks) + ":" + fmt("%.3f", s.p50);
    }
    v.require(std::is_sorted(p50.begin(), p50.end()), "p50 not non-decreasing:" + lat);
    ensure_runs();
    auto m16 = budget.model;
    m16.n_blocks = 16;
    const auto r16 = train_once(splits, m16, budget.train, "16 blocks seed 0");
    const double a4 = with_fas.front().test_acc;
    v.require(a4 >= r16.test_acc - 0.01, "acc 4 blocks " + fmt("%.4f", a4) + " vs 16 blocks " + fmt("%.4f", r16.test_acc));
    v.note("p50 ms" + lat + "; acc 4 blocks " + fmt("%.4f", a4) + ", 16 blocks " + fmt("%.4f", r16.test_acc));
    return v;
  });

  record(8, [&] {
    Verdict v;
    bench::BenchConfig bc;
    bc.iters = 200;
    bc.warmup = 20;
    bc.window_len = data::kWindowLen;
    const model::ModelConfig defaults;
    const auto s = bench::bench_inference(model::init_params<double>(defaults, 0), bc);
    v.require(s.p50 < 50.0, "p50 " + fmt("%.3f ms", s.p50));
    v.note("default config, window " + std::to_string(bc.window_len) + ": p50 " + fmt("%.3f ms", s.p50) + " (fas " +
           fmt("%.3f", s.fas.p50) + ", forward " + fmt("%.3f", s.forward.p50) +
           "), single thread CPU; reference GPU figure 1.87 ms (RTX 4090) is not comparable");
    return v;
  });

  record(9, metrics_arithmetic);
  record(10, determinism_and_persistence);

  int failed = 0;
  for (const auto& [id, v] : results) failed += !v.pass;
  std::cout << (failed ? "FAILED " : "ALL PASSED ") << results.size() - static_cast<std::size_t>(failed) << "/"
            << results.size() << std::endl;
  return failed;
}
