#pragma once

// Independent reference implementations used only by the tests. They favour
// obviousness over speed: every intermediate is materialized.

#include "arcflux/data.hpp"
#include "arcflux/metrics.hpp"
#include "arcflux/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

// exp by its Taylor series (enough terms for |x| <= 2).
inline long double taylor_exp(long double x) {
  long double term = 1.0L, sum = 1.0L;
  for (int k = 1; k < 50; ++k) {
    term *= x / k;
    sum += term;
  }
  return sum;
}

// y_k = sum_{j<=k} c . (a_bar^(k-j) * b_bar) x_j, accumulated in long double.
inline std::vector<double> ssm_direct(const arcflux::ssm::DiscreteSsm<double>& d, const std::vector<double>& x) {
  std::vector<double> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    long double acc = 0;
    for (std::size_t j = 0; j <= k; ++j)
      for (std::size_t n = 0; n < d.a_bar.size(); ++n)
        acc += static_cast<long double>(d.c_vec[n]) * std::pow(static_cast<long double>(d.a_bar[n]), k - j) *
               d.b_bar[n] * x[j];
    y[k] = static_cast<double>(acc);
  }
  return y;
}

// Selective scan with every per-step matrix written out: A_bar_t = diag(exp(delta a)),
// B_bar_t = delta B_t, dense N x N products per channel.
inline std::vector<std::vector<double>> selective_dense(const std::vector<std::vector<double>>& u,
                                                        const std::vector<std::vector<double>>& w_delta,
                                                        const std::vector<double>& b_delta,
                                                        const std::vector<std::vector<double>>& w_b,
                                                        const std::vector<std::vector<double>>& w_c,
                                                        const std::vector<double>& a_diag) {
  const std::size_t len = u.size(), di = b_delta.size(), n = a_diag.size();
  std::vector<std::vector<double>> y(len, std::vector<double>(di, 0.0));
  std::vector<std::vector<double>> h(di, std::vector<double>(n, 0.0));
  for (std::size_t t = 0; t < len; ++t) {
    std::vector<double> bt(n, 0.0), ct(n, 0.0);
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t i = 0; i < di; ++i) {
        bt[m] += u[t][i] * w_b[i][m];
        ct[m] += u[t][i] * w_c[i][m];
      }
    for (std::size_t d = 0; d < di; ++d) {
      double pre = b_delta[d];
      for (std::size_t i = 0; i < di; ++i) pre += u[t][i] * w_delta[i][d];
      const double delta = std::log1p(std::exp(-std::abs(pre))) + std::max(pre, 0.0);
      std::vector<std::vector<double>> abar(n, std::vector<double>(n, 0.0));
      for (std::size_t m = 0; m < n; ++m) abar[m][m] = std::exp(delta * a_diag[m]);
      std::vector<double> next(n, 0.0);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) next[r] += abar[r][c] * h[d][c];
        next[r] += delta * bt[r] * u[t][d];
      }
      h[d] = next;
      for (std::size_t m = 0; m < n; ++m) y[t][d] += ct[m] * h[d][m];
    }
  }
  return y;
}

// FAS by sorting the entire window.
inline std::vector<double> fas_full_sort(std::vector<double> w, std::size_t k) {
  std::sort(w.begin(), w.end());
  std::vector<double> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(w[w.size() - 1 - i]);
  for (std::size_t i = 0; i < k; ++i) out.push_back(w[i]);
  return out;
}

struct Recount {
  std::uint64_t tn = 0, fp = 0, fn = 0, tp = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
};

// Brute-force metrics straight from the definitions, class by class.
inline Recount recount(const std::vector<int>& pred, const std::vector<int>& label) {
  Recount r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (label[i] == 1 && pred[i] == 1) ++r.tp;
    if (label[i] == 0 && pred[i] == 0) ++r.tn;
    if (label[i] == 0 && pred[i] == 1) ++r.fp;
    if (label[i] == 1 && pred[i] == 0) ++r.fn;
  }
  auto safe = [](double a, double b) { return b == 0 ? 0.0 : a / b; };
  double p_sum = 0, r_sum = 0;
  for (int cls : {0, 1}) {
    double hit = 0, predicted = 0, actual = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      hit += (pred[i] == cls && label[i] == cls);
      predicted += pred[i] == cls;
      actual += label[i] == cls;
    }
    p_sum += safe(hit, predicted);
    r_sum += safe(hit, actual);
  }
  double correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == label[i];
  r.accuracy = correct / static_cast<double>(pred.size());
  r.precision = p_sum / 2;
  r.recall = r_sum / 2;
  r.f1 = r.precision + r.recall == 0 ? 0 : 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

// Max over elements of |a-b| / max(|b|, floor): relative error with an absolute floor for near-zero entries.
inline double max_rel(const std::vector<double>& a, const std::vector<double>& b, double floor = 1e-12) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), floor));
  return worst;
}

inline arcflux::ssm::DiscreteSsm<double> random_discrete(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> decay(0.05, 0.99), coef(-1.0, 1.0);
  arcflux::ssm::DiscreteSsm<double> d;
  d.delta = 0.1;
  for (std::size_t i = 0; i < n; ++i) {
    d.a_bar.push_back(decay(rng));
    d.b_bar.push_back(coef(rng));
    d.c_vec.push_back(coef(rng));
  }
  return d;
}

inline std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace oracle
