#pragma once

// Diagonal state-space machinery: ZOH discretization, the three equivalent
// LTI evaluation routes (recurrence, prefix scan, convolution kernel) and the
// input-dependent selective scan used inside each model block.

#include "arcflux/common.hpp"

#include <algorithm>
#include <bit>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

namespace arcflux::ssm {

/// Continuous-time system h' = A h + B x, y = C h with A diagonal.
template <Real T = double>
struct ContinuousSsm {
  std::vector<T> a_diag;
  std::vector<T> b_vec;
  std::vector<T> c_vec;

  std::size_t state_size() const { return a_diag.size(); }

  void validate() const {
    if (a_diag.empty()) throw std::invalid_argument("ssm: state size must be >= 1");
    if (b_vec.size() != a_diag.size() || c_vec.size() != a_diag.size())
      throw ShapeError("ssm: a_diag, b_vec and c_vec must share one length");
  }

  /// The default stable diagonal a[n] = -(n+1).
  static ContinuousSsm with_default_diagonal(std::vector<T> b, std::vector<T> c) {
    ContinuousSsm s{std::vector<T>(b.size()), std::move(b), std::move(c)};
    for (std::size_t n = 0; n < s.a_diag.size(); ++n) s.a_diag[n] = -T(n + 1);
    return s;
  }
};

template <Real T = double>
struct DiscreteSsm {
  std::vector<T> a_bar;
  std::vector<T> b_bar;
  std::vector<T> c_vec;
  T delta{};

  std::size_t state_size() const { return a_bar.size(); }

  void validate() const {
    if (a_bar.empty()) throw std::invalid_argument("ssm: state size must be >= 1");
    if (b_bar.size() != a_bar.size() || c_vec.size() != a_bar.size())
      throw ShapeError("ssm: a_bar, b_bar and c_vec must share one length");
  }
};

/// ZOH on a diagonal: a_bar = exp(delta a), b_bar = (delta a)^-1 (exp(delta a) - 1) delta b.
template <Real T>
DiscreteSsm<T> discretize_zoh(const ContinuousSsm<T>& s, T delta) {
  s.validate();
  if (!(delta > T(0))) throw std::invalid_argument("discretize_zoh: delta must be > 0");
  DiscreteSsm<T> d;
  d.delta = delta;
  d.c_vec = s.c_vec;
  d.a_bar.resize(s.state_size());
  d.b_bar.resize(s.state_size());
  for (std::size_t n = 0; n < s.state_size(); ++n) {
    const T a = s.a_diag[n];
    if (a == T(0)) throw std::invalid_argument("discretize_zoh: a_diag entries must be nonzero");
    const T da = delta * a;
    d.a_bar[n] = std::exp(da);
    // (da)^-1 * expm1(da) * delta * b == expm1(da) / a * b; expm1 keeps small delta exact.
    d.b_bar[n] = std::expm1(da) / a * s.b_vec[n];
  }
  return d;
}

/// One step h -> decay * h + load of a scalar linear recurrence.
template <Real T = double>
struct ScanElement {
  T decay{1};
  T load{0};

  static constexpr ScanElement identity() { return {T(1), T(0)}; }
  constexpr T apply(T h) const { return decay * h + load; }
  friend bool operator==(const ScanElement&, const ScanElement&) = default;
};

/// Apply e1 first, then e2.
template <Real T>
constexpr ScanElement<T> compose(const ScanElement<T>& e1, const ScanElement<T>& e2) {
  return {e2.decay * e1.decay, e2.decay * e1.load + e2.load};
}

template <Real T>
std::vector<T> scan_sequential(const DiscreteSsm<T>& d, std::span<const T> x) {
  d.validate();
  if (x.empty()) throw std::invalid_argument("scan: sequence length must be >= 1");
  const std::size_t n_state = d.state_size();
  std::vector<T> h(n_state, T(0));
  std::vector<T> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    T acc = T(0);
    for (std::size_t n = 0; n < n_state; ++n) {
      h[n] = d.a_bar[n] * h[n] + d.b_bar[n] * x[k];
      acc += d.c_vec[n] * h[n];
    }
    y[k] = acc;
  }
  return y;
}

namespace detail {

// Work-efficient exclusive scan (up-sweep / down-sweep) followed by one
// composition per element to make it inclusive. size must be a power of two.
template <Real T>
void blelloch_inclusive(std::vector<ScanElement<T>>& e) {
  const std::size_t size = e.size();
  std::vector<ScanElement<T>> leaf = e;
  for (std::size_t stride = 1; stride < size; stride *= 2)
    for (std::size_t i = 2 * stride - 1; i < size; i += 2 * stride)
      e[i] = compose(e[i - stride], e[i]);
  e[size - 1] = ScanElement<T>::identity();
  for (std::size_t stride = size / 2; stride >= 1; stride /= 2) {
    for (std::size_t i = 2 * stride - 1; i < size; i += 2 * stride) {
      const ScanElement<T> left = e[i - stride];
      e[i - stride] = e[i];
      e[i] = compose(e[i], left);
    }
  }
  for (std::size_t i = 0; i < size; ++i) e[i] = compose(e[i], leaf[i]);
}

}  // namespace detail

/// Prefix-scan evaluation of the recurrence. Each state channel is an
/// independent scan; channels are spread over `workers` threads and summed
/// in fixed order, so the result does not depend on the worker count.
template <Real T>
std::vector<T> scan_parallel(const DiscreteSsm<T>& d, std::span<const T> x, unsigned workers = 1) {
  d.validate();
  if (x.empty()) throw std::invalid_argument("scan: sequence length must be >= 1");
  const std::size_t n_state = d.state_size();
  const std::size_t len = x.size();
  const std::size_t padded = std::bit_ceil(len);
  std::vector<std::vector<T>> states(n_state, std::vector<T>(len));

  auto run_channel = [&](std::size_t n) {
    std::vector<ScanElement<T>> e(padded, ScanElement<T>::identity());
    for (std::size_t k = 0; k < len; ++k) e[k] = {d.a_bar[n], d.b_bar[n] * x[k]};
    detail::blelloch_inclusive(e);
    for (std::size_t k = 0; k < len; ++k) states[n][k] = e[k].load;
  };

  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n_state)));
  if (workers == 1) {
    for (std::size_t n = 0; n < n_state; ++n) run_channel(n);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t n = w; n < n_state; n += workers) run_channel(n);
      });
  }

  std::vector<T> y(len, T(0));
  for (std::size_t k = 0; k < len; ++k) {
    T acc = T(0);
    for (std::size_t n = 0; n < n_state; ++n) acc += d.c_vec[n] * states[n][k];
    y[k] = acc;
  }
  return y;
}

/// K[j] = <c, a_bar^j * b_bar>, j = 0..length-1.
template <Real T>
std::vector<T> ssm_kernel(const DiscreteSsm<T>& d, std::size_t length) {
  d.validate();
  if (length < 1) throw std::invalid_argument("ssm_kernel: length must be >= 1");
  std::vector<T> pow_b = d.b_bar;
  std::vector<T> k(length);
  for (std::size_t j = 0; j < length; ++j) {
    T acc = T(0);
    for (std::size_t n = 0; n < d.state_size(); ++n) {
      acc += d.c_vec[n] * pow_b[n];
      pow_b[n] *= d.a_bar[n];
    }
    k[j] = acc;
  }
  return k;
}

/// y[t] = sum_{j<=t} kernel[j] * x[t-j]; output length equals x.size().
template <Real T>
std::vector<T> causal_convolve(std::span<const T> x, std::span<const T> kernel) {
  std::vector<T> y(x.size(), T(0));
  for (std::size_t t = 0; t < x.size(); ++t) {
    const std::size_t taps = std::min(t + 1, kernel.size());
    T acc = T(0);
    for (std::size_t j = 0; j < taps; ++j) acc += kernel[j] * x[t - j];
    y[t] = acc;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Selective scan
// ---------------------------------------------------------------------------

template <Real T>
using StateMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <Real T>
using ConstStateMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// Elementwise softplus: max(x, 0) + log(1 + exp(-|x|)) in one vectorized pass.
/// Below x = -30 that form loses the tail (1 + e rounds to 1), so those
/// entries take exp(x) instead, whose error there is below e^2/2. The result is
/// floored at the smallest normal value so a step size never underflows to zero.
template <Real T>
void softplus_into(const Mat<T>& x, Mat<T>& y) {
  y.resize(x.rows(), x.cols());
  y.array() = x.array().max(T(0)) + (T(1) + (-x.array().abs()).exp()).log();
  const T* in = x.data();
  T* out = y.data();
  for (Eigen::Index i = 0; i < x.size(); ++i)
    if (in[i] < T(-30)) out[i] = std::max(std::exp(in[i]), std::numeric_limits<T>::min());
}

/// Input-dependent parameters over D_inner channels and N states.
///   delta[t,d] = softplus(u[t] . w_delta[:,d] + b_delta[d])
///   B[t] = u[t] w_b,  C[t] = u[t] w_c
/// The shared diagonal is stored as a_log with a = -exp(a_log) so that it
/// stays negative under gradient updates.
template <Real T = double>
struct SelectiveParams {
  Mat<T> w_delta;  // D_inner x D_inner
  Vec<T> b_delta;  // D_inner
  Mat<T> w_b;      // D_inner x N
  Mat<T> w_c;      // D_inner x N
  Vec<T> a_log;    // N

  std::size_t inner() const { return static_cast<std::size_t>(w_delta.rows()); }
  std::size_t state_size() const { return static_cast<std::size_t>(a_log.size()); }

  Vec<T> a_diag() const { return -a_log.array().exp().matrix(); }

  static SelectiveParams zeros(std::size_t inner, std::size_t n_state) {
    const auto di = static_cast<Eigen::Index>(inner);
    const auto n = static_cast<Eigen::Index>(n_state);
    return {Mat<T>::Zero(di, di), Vec<T>::Zero(di), Mat<T>::Zero(di, n), Mat<T>::Zero(di, n),
            Vec<T>::Zero(n)};
  }

  void validate() const {
    const auto di = w_delta.rows();
    require(w_delta.cols() == di && b_delta.size() == di, "selective: delta map must be D_inner x D_inner");
    require(w_b.rows() == di && w_c.rows() == di, "selective: B/C maps must have D_inner rows");
    require(w_b.cols() == a_log.size() && w_c.cols() == a_log.size(), "selective: B/C maps must have N columns");
    require(di >= 1 && a_log.size() >= 1, "selective: D_inner and N must be >= 1");
  }

  template <Real U>
  SelectiveParams<U> cast() const {
    return {w_delta.template cast<U>(), b_delta.template cast<U>(), w_b.template cast<U>(),
            w_c.template cast<U>(), a_log.template cast<U>()};
  }
};

/// Activations cached by the forward pass for the reverse pass. Buffers are
/// resized only when the shape changes.
template <Real T = double>
struct SelectiveTape {
  Mat<T> pre;    // L x D_inner, delta pre-activation
  Mat<T> delta;  // L x D_inner
  Mat<T> b;      // L x N
  Mat<T> c;      // L x N
  Vec<T> a;      // N
  // Flat L*D_inner*N buffers. Eigen storage keeps the base address aligned,
  // so vectorized reductions over them round the same way on every run.
  Eigen::Array<T, Eigen::Dynamic, 1> decay;  // exp(delta * a)
  Eigen::Array<T, Eigen::Dynamic, 1> state;  // h after each step
  // false: keep only the two most recent state blocks (inference, no reverse pass).
  bool record = true;

  std::size_t slot(std::size_t t) const { return record ? t : t % 2; }

  void resize(std::size_t len, std::size_t inner, std::size_t n_state) {
    const auto l = static_cast<Eigen::Index>(len);
    pre.resize(l, static_cast<Eigen::Index>(inner));
    delta.resize(l, static_cast<Eigen::Index>(inner));
    b.resize(l, static_cast<Eigen::Index>(n_state));
    c.resize(l, static_cast<Eigen::Index>(n_state));
    a.resize(static_cast<Eigen::Index>(n_state));
    const std::size_t steps = record ? len : std::min<std::size_t>(len, 2);
    decay.resize(static_cast<Eigen::Index>(steps * inner * n_state));
    state.resize(static_cast<Eigen::Index>(steps * inner * n_state));
  }
};

/// Forward selective scan of u (L x D_inner) into y; fills the tape.
/// Each step updates the whole D_inner x N state block at once.
template <Real T>
void selective_scan_forward(const SelectiveParams<T>& p, const Mat<T>& u, SelectiveTape<T>& tape, Mat<T>& y) {
  const std::size_t len = static_cast<std::size_t>(u.rows());
  const std::size_t inner = p.inner();
  const std::size_t n_state = p.state_size();
  require(static_cast<std::size_t>(u.cols()) == inner, "selective_scan: u width must equal D_inner");
  require(len >= 1, "selective_scan: sequence length must be >= 1");
  tape.resize(len, inner, n_state);
  y.resize(u.rows(), u.cols());

  tape.pre.noalias() = u * p.w_delta;
  tape.pre.rowwise() += p.b_delta;
  softplus_into(tape.pre, tape.delta);
  tape.b.noalias() = u * p.w_b;
  tape.c.noalias() = u * p.w_c;
  tape.a = -p.a_log.array().exp();

  const auto di = static_cast<Eigen::Index>(inner);
  const auto ns = static_cast<Eigen::Index>(n_state);
  const std::size_t block = inner * n_state;
  for (std::size_t t = 0; t < len; ++t) {
    const auto ti = static_cast<Eigen::Index>(t);
    StateMap<T> decay(tape.decay.data() + tape.slot(t) * block, di, ns);
    StateMap<T> h(tape.state.data() + tape.slot(t) * block, di, ns);
    ConstStateMap<T> prev(tape.state.data() + tape.slot(t > 0 ? t - 1 : 0) * block, di, ns);
    decay.matrix().noalias() = tape.delta.row(ti).transpose() * tape.a;
    decay = decay.exp();
    // Row d of the state only sees channel d's step size and drive.
    const auto b = tape.b.row(ti).array();
    for (Eigen::Index d = 0; d < di; ++d) {
      const T drive = tape.delta(ti, d) * u(ti, d);
      if (t > 0)
        h.row(d) = decay.row(d) * prev.row(d) + drive * b;
      else
        h.row(d) = drive * b;
    }
    y.row(ti).transpose().noalias() = h.matrix() * tape.c.row(ti).transpose();
  }
}

/// Reverse pass. Accumulates parameter gradients into `grads` (+=) and writes
/// the input gradient into `gu` (overwritten). The remaining arguments are
/// caller-owned scratch.
template <Real T>
void selective_scan_backward(const SelectiveParams<T>& p, const Mat<T>& u, const SelectiveTape<T>& tape,
                             const Mat<T>& gy, SelectiveParams<T>& grads, Mat<T>& gu, Mat<T>& g_delta,
                             Mat<T>& g_b, Mat<T>& g_c, Mat<T>& carry, Mat<T>& tmp) {
  require(tape.record, "selective_scan: reverse pass needs a recorded tape");
  const std::size_t len = static_cast<std::size_t>(u.rows());
  const auto di = static_cast<Eigen::Index>(p.inner());
  const auto ns = static_cast<Eigen::Index>(p.state_size());
  const std::size_t block = p.inner() * p.state_size();

  gu.resize(u.rows(), u.cols());
  g_delta.resize(u.rows(), u.cols());
  g_b.resize(u.rows(), ns);
  g_c.resize(u.rows(), ns);
  carry.setZero(di, ns);  // dL/dh_t, carried backwards through the decay
  tmp.resize(di, ns);
  Vec<T> g_a = Vec<T>::Zero(ns);

  for (std::size_t tt = len; tt-- > 0;) {
    const auto ti = static_cast<Eigen::Index>(tt);
    ConstStateMap<T> h(tape.state.data() + tt * block, di, ns);
    ConstStateMap<T> decay(tape.decay.data() + tt * block, di, ns);

    carry.noalias() += gy.row(ti).transpose() * tape.c.row(ti);
    g_c.row(ti).noalias() = gy.row(ti) * h.matrix();
    // s[d] = sum_n gh[d,n] B[t,n]: gradient reaching the drive delta*u.
    const auto s = (carry * tape.b.row(ti).transpose()).transpose();
    gu.row(ti) = s.cwiseProduct(tape.delta.row(ti));
    g_delta.row(ti) = s.cwiseProduct(u.row(ti));
    g_b.row(ti).noalias() = tape.delta.row(ti).cwiseProduct(u.row(ti)) * carry;
    if (tt > 0) {
      ConstStateMap<T> prev(tape.state.data() + (tt - 1) * block, di, ns);
      tmp.array() = carry.array() * prev * decay;
      g_delta.row(ti).noalias() += (tmp * tape.a.transpose()).transpose();
      g_a.noalias() += tape.delta.row(ti) * tmp;
    }
    carry.array() *= decay;
  }

  // Through softplus and the three input projections.
  g_delta.array() *= (T(1) + (-tape.pre.array()).exp()).inverse();
  grads.w_delta.noalias() += u.transpose() * g_delta;
  grads.b_delta += g_delta.colwise().sum();
  grads.w_b.noalias() += u.transpose() * g_b;
  grads.w_c.noalias() += u.transpose() * g_c;
  grads.a_log += g_a.cwiseProduct(tape.a);
  gu.noalias() += g_delta * p.w_delta.transpose();
  gu.noalias() += g_b * p.w_b.transpose();
  gu.noalias() += g_c * p.w_c.transpose();
}

/// Convenience value-returning selective scan.
template <Real T>
Mat<T> selective_scan(const SelectiveParams<T>& p, const Mat<T>& u) {
  p.validate();
  SelectiveTape<T> tape;
  Mat<T> y;
  selective_scan_forward(p, u, tape, y);
  return y;
}

}  // namespace arcflux::ssm
