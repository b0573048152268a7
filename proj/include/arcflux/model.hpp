#pragma once

// The classifier: scalar lift, pre-norm residual stack of gated selective-scan
// blocks, final RMSNorm and a two-logit head. Forward and reverse passes run
// against a reusable Workspace so that steady-state inference does not touch
// the heap.

#include "arcflux/common.hpp"
#include "arcflux/fas.hpp"
#include "arcflux/ssm.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace arcflux::model {

inline constexpr double kRmsEps = 1e-5;

enum class HeadKind { linear_last, linear_dropout, mlp, mean_pool_linear };

inline std::string_view to_string(HeadKind h) {
  switch (h) {
    case HeadKind::linear_last: return "linear-last";
    case HeadKind::linear_dropout: return "linear-dropout";
    case HeadKind::mlp: return "mlp";
    case HeadKind::mean_pool_linear: return "mean-pool-linear";
  }
  return "?";
}

inline HeadKind head_from_string(std::string_view s) {
  for (auto h : {HeadKind::linear_last, HeadKind::linear_dropout, HeadKind::mlp, HeadKind::mean_pool_linear})
    if (to_string(h) == s) return h;
  throw ConfigError("unknown head kind '" + std::string(s) +
                    "' (expected linear-last, linear-dropout, mlp or mean-pool-linear)");
}

enum class Mode { eval, train };

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t expand = 2;
  std::size_t n_state = 16;
  std::size_t n_blocks = 4;
  std::size_t conv_width = 4;
  std::size_t k_fas = 512;
  HeadKind head = HeadKind::linear_last;
  double dropout_p = 0.1;
  // false: the model reads the raw window as its sequence (FAS ablation).
  bool use_fas = true;

  std::size_t inner() const { return expand * d_model; }

  void validate() const {
    if (d_model < 1 || expand < 1 || n_state < 1 || conv_width < 1 || k_fas < 1)
      throw ConfigError("model: d_model, expand, n_state, conv_width and k_fas must all be >= 1");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("model: dropout_p must lie in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::ordered_json& j, const ModelConfig& c) {
  j = nlohmann::ordered_json{{"d_model", c.d_model},     {"expand", c.expand},
                             {"n_state", c.n_state},     {"n_blocks", c.n_blocks},
                             {"conv_width", c.conv_width}, {"k_fas", c.k_fas},
                             {"head", to_string(c.head)}, {"dropout_p", c.dropout_p},
                             {"use_fas", c.use_fas}};
}

inline void from_json(const nlohmann::ordered_json& j, ModelConfig& c) {
  c.d_model = j.at("d_model").get<std::size_t>();
  c.expand = j.at("expand").get<std::size_t>();
  c.n_state = j.at("n_state").get<std::size_t>();
  c.n_blocks = j.at("n_blocks").get<std::size_t>();
  c.conv_width = j.at("conv_width").get<std::size_t>();
  c.k_fas = j.at("k_fas").get<std::size_t>();
  c.head = head_from_string(j.at("head").get<std::string>());
  c.dropout_p = j.at("dropout_p").get<double>();
  c.use_fas = j.at("use_fas").get<bool>();
}

template <Real T = double>
struct BlockParams {
  Mat<T> w_in;   // D x 2*D_inner
  Vec<T> b_in;   // 2*D_inner
  Mat<T> conv;   // D_inner x conv_width; column conv_width-1 is the current step
  ssm::SelectiveParams<T> ssm;
  Mat<T> w_out;  // D_inner x D
  Vec<T> b_out;  // D
  Vec<T> norm_gain;  // D, pre-norm gain

  template <Real U>
  BlockParams<U> cast() const {
    return {w_in.template cast<U>(),  b_in.template cast<U>(),  conv.template cast<U>(),
            ssm.template cast<U>(),   w_out.template cast<U>(), b_out.template cast<U>(),
            norm_gain.template cast<U>()};
  }
};

template <Real T = double>
struct HeadParams {
  Mat<T> w_hidden;  // D x D, mlp only
  Vec<T> b_hidden;
  Mat<T> w;  // in x 2
  Vec<T> b;  // 2

  template <Real U>
  HeadParams<U> cast() const {
    return {w_hidden.template cast<U>(), b_hidden.template cast<U>(), w.template cast<U>(), b.template cast<U>()};
  }
};

template <Real T = double>
struct ModelParams {
  ModelConfig cfg;
  Vec<T> lift_w;  // D
  Vec<T> lift_b;  // D
  std::vector<BlockParams<T>> blocks;
  Vec<T> final_gain;  // D
  HeadParams<T> head;

  /// All-zero tensors with the shapes implied by cfg; also used as a gradient
  /// or optimizer-moment shadow.
  static ModelParams zeros(const ModelConfig& cfg) {
    cfg.validate();
    const auto d = static_cast<Eigen::Index>(cfg.d_model);
    const auto di = static_cast<Eigen::Index>(cfg.inner());
    ModelParams p;
    p.cfg = cfg;
    p.lift_w = Vec<T>::Zero(d);
    p.lift_b = Vec<T>::Zero(d);
    p.blocks.resize(cfg.n_blocks);
    for (auto& b : p.blocks) {
      b.w_in = Mat<T>::Zero(d, 2 * di);
      b.b_in = Vec<T>::Zero(2 * di);
      b.conv = Mat<T>::Zero(di, static_cast<Eigen::Index>(cfg.conv_width));
      b.ssm = ssm::SelectiveParams<T>::zeros(cfg.inner(), cfg.n_state);
      b.w_out = Mat<T>::Zero(di, d);
      b.b_out = Vec<T>::Zero(d);
      b.norm_gain = Vec<T>::Zero(d);
    }
    p.final_gain = Vec<T>::Zero(d);
    if (cfg.head == HeadKind::mlp) {
      p.head.w_hidden = Mat<T>::Zero(d, d);
      p.head.b_hidden = Vec<T>::Zero(d);
    }
    p.head.w = Mat<T>::Zero(d, 2);
    p.head.b = Vec<T>::Zero(2);
    return p;
  }

  template <Real U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.cfg = cfg;
    out.lift_w = lift_w.template cast<U>();
    out.lift_b = lift_b.template cast<U>();
    for (const auto& b : blocks) out.blocks.push_back(b.template cast<U>());
    out.final_gain = final_gain.template cast<U>();
    out.head = head.template cast<U>();
    return out;
  }
};

/// Calls f(name, tensor) for every learnable tensor in a fixed order. Works on
/// const and mutable params alike.
template <typename Params, typename F>
void visit_tensors(Params& p, F&& f) {
  f(std::string("lift.w"), p.lift_w);
  f(std::string("lift.b"), p.lift_b);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    const std::string pre = "blocks." + std::to_string(i) + ".";
    f(pre + "norm.gain", b.norm_gain);
    f(pre + "in.w", b.w_in);
    f(pre + "in.b", b.b_in);
    f(pre + "conv", b.conv);
    f(pre + "ssm.delta.w", b.ssm.w_delta);
    f(pre + "ssm.delta.b", b.ssm.b_delta);
    f(pre + "ssm.b.w", b.ssm.w_b);
    f(pre + "ssm.c.w", b.ssm.w_c);
    f(pre + "ssm.a_log", b.ssm.a_log);
    f(pre + "out.w", b.w_out);
    f(pre + "out.b", b.b_out);
  }
  f(std::string("final_norm.gain"), p.final_gain);
  if (p.cfg.head == HeadKind::mlp) {
    f(std::string("head.hidden.w"), p.head.w_hidden);
    f(std::string("head.hidden.b"), p.head.b_hidden);
  }
  f(std::string("head.w"), p.head.w);
  f(std::string("head.b"), p.head.b);
}

/// Flat view of one tensor: name, storage and shape (rank 1 for vectors).
template <typename T>
struct TensorView {
  std::string name;
  T* data;
  std::size_t size;
  std::vector<std::size_t> shape;
};

template <typename Params>
auto tensor_views(Params& p) {
  using Scalar = std::conditional_t<std::is_const_v<Params>, const typename std::remove_cvref_t<decltype(p.lift_w)>::Scalar,
                                    typename std::remove_cvref_t<decltype(p.lift_w)>::Scalar>;
  std::vector<TensorView<Scalar>> out;
  visit_tensors(p, [&](const std::string& name, auto& t) {
    using M = std::remove_cvref_t<decltype(t)>;
    std::vector<std::size_t> shape;
    if constexpr (M::RowsAtCompileTime == 1)
      shape = {static_cast<std::size_t>(t.size())};
    else
      shape = {static_cast<std::size_t>(t.rows()), static_cast<std::size_t>(t.cols())};
    out.push_back({name, t.data(), static_cast<std::size_t>(t.size()), std::move(shape)});
  });
  return out;
}

/// Closed-form learnable parameter count.
inline std::size_t param_count(const ModelConfig& c) {
  const std::size_t d = c.d_model, di = c.inner(), n = c.n_state, w = c.conv_width;
  const std::size_t per_block = d                  // pre-norm gain
                                + d * 2 * di + 2 * di  // input projection
                                + di * w               // depthwise conv
                                + di * di + di         // delta map
                                + 2 * di * n           // B and C maps
                                + n                    // a_log
                                + di * d + d;          // output projection
  std::size_t head = 2 * d + 2;
  if (c.head == HeadKind::mlp) head += d * d + d;
  return 2 * d + c.n_blocks * per_block + d + head;
}

template <Real T>
ModelParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams<T> p = ModelParams<T>::zeros(cfg);
  std::mt19937_64 rng(seed);
  auto fill = [&](auto& t, double fan_in) {
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(u(rng));
  };
  const double d = static_cast<double>(cfg.d_model);
  const double di = static_cast<double>(cfg.inner());
  fill(p.lift_w, 1.0);
  fill(p.lift_b, 1.0);
  std::uniform_real_distribution<double> log_dt(std::log(1e-3), std::log(1e-1));
  for (auto& b : p.blocks) {
    b.norm_gain.setOnes();
    fill(b.w_in, d);
    fill(b.b_in, d);
    fill(b.conv, static_cast<double>(cfg.conv_width));
    fill(b.ssm.w_delta, di);
    for (Eigen::Index i = 0; i < b.ssm.b_delta.size(); ++i) {
      // inverse softplus, so softplus(b_delta) is log-uniform in [1e-3, 1e-1]
      const double dt = std::exp(log_dt(rng));
      b.ssm.b_delta[i] = static_cast<T>(dt + std::log(-std::expm1(-dt)));
    }
    fill(b.ssm.w_b, di);
    fill(b.ssm.w_c, di);
    for (Eigen::Index n = 0; n < b.ssm.a_log.size(); ++n) b.ssm.a_log[n] = static_cast<T>(std::log(double(n + 1)));
    fill(b.w_out, di);
    fill(b.b_out, di);
  }
  p.final_gain.setOnes();
  if (cfg.head == HeadKind::mlp) {
    fill(p.head.w_hidden, d);
    fill(p.head.b_hidden, d);
  }
  fill(p.head.w, d);
  fill(p.head.b, d);
  return p;
}

// ---------------------------------------------------------------------------
// RMSNorm
// ---------------------------------------------------------------------------

/// Row-wise y = x * gain / sqrt(mean(x^2) + eps); keeps 1/rms per row.
template <Real T>
void rmsnorm_rows(const Mat<T>& x, const Vec<T>& gain, Mat<T>& y, Vec<T>& inv_rms) {
  y.resize(x.rows(), x.cols());
  inv_rms.resize(x.rows());
  const T dim = static_cast<T>(x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const T r = T(1) / std::sqrt(x.row(t).squaredNorm() / dim + static_cast<T>(kRmsEps));
    inv_rms[t] = r;
    y.row(t) = x.row(t).cwiseProduct(gain) * r;
  }
}

/// Writes dL/dx into gx (overwritten) and accumulates dL/dgain.
template <Real T>
void rmsnorm_rows_backward(const Mat<T>& x, const Vec<T>& gain, const Vec<T>& inv_rms, const Mat<T>& gy,
                           Vec<T>& g_gain, Mat<T>& gx) {
  gx.resize(x.rows(), x.cols());
  const T dim = static_cast<T>(x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const T r = inv_rms[t];
    g_gain += gy.row(t).cwiseProduct(x.row(t)) * r;
    const T dot = (gy.row(t).cwiseProduct(gain)).dot(x.row(t));
    gx.row(t) = gy.row(t).cwiseProduct(gain) * r - x.row(t) * (r * r * r * dot / dim);
  }
}

template <Real T>
std::vector<T> rmsnorm(std::span<const T> x, std::span<const T> gain) {
  require(x.size() == gain.size() && !x.empty(), "rmsnorm: x and gain must share a nonzero length");
  T ms = T(0);
  for (T v : x) ms += v * v;
  const T r = T(1) / std::sqrt(ms / static_cast<T>(x.size()) + static_cast<T>(kRmsEps));
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * gain[i] * r;
  return y;
}

// ---------------------------------------------------------------------------
// Workspace
// ---------------------------------------------------------------------------

template <Real T = double>
struct BlockTape {
  Mat<T> xin;  // residual stream entering the block
  Mat<T> xn;   // normalized input
  Vec<T> inv_rms;
  Mat<T> proj, x1, z, xc, u, ys, gate, o;
  ssm::SelectiveTape<T> scan;
};

template <Real T = double>
struct Workspace {
  // false: forward keeps no per-step scan state, so backward is unavailable.
  bool record_tape = true;
  std::size_t len = 0;
  std::vector<T> seq;
  Mat<T> x;          // residual stream; after forward it holds the stack output
  Mat<T> block_out;
  std::vector<BlockTape<T>> blocks;
  Mat<T> xf;         // final-normalized stream
  Vec<T> inv_rms_f;
  Vec<T> head_in;    // vector fed to the output layer (after pooling/dropout/hidden)
  Vec<T> pooled;     // pooled or last-position vector before dropout/hidden
  Vec<T> mask;       // dropout multipliers
  Vec<T> hidden_pre;
  std::array<T, 2> logits{};

  // reverse-pass scratch
  Mat<T> gx, g_stream, g_norm, go, gys, gz, gu, gxc, gproj, g_delta, g_b, g_c;
  Vec<T> gv;
  Mat<T> carry, carry_tmp;

  void prepare(const ModelConfig& cfg, std::size_t seq_len) {
    const auto l = static_cast<Eigen::Index>(seq_len);
    const auto d = static_cast<Eigen::Index>(cfg.d_model);
    const auto di = static_cast<Eigen::Index>(cfg.inner());
    len = seq_len;
    seq.resize(seq_len);
    x.resize(l, d);
    block_out.resize(l, d);
    blocks.resize(cfg.n_blocks);
    for (auto& b : blocks) {
      b.xin.resize(l, d);
      b.xn.resize(l, d);
      b.inv_rms.resize(l);
      b.proj.resize(l, 2 * di);
      b.x1.resize(l, di);
      b.z.resize(l, di);
      b.xc.resize(l, di);
      b.u.resize(l, di);
      b.ys.resize(l, di);
      b.gate.resize(l, di);
      b.o.resize(l, di);
      b.scan.record = record_tape;
      b.scan.resize(seq_len, cfg.inner(), cfg.n_state);
    }
    xf.resize(l, d);
    inv_rms_f.resize(l);
    head_in.resize(d);
    pooled.resize(d);
    mask.resize(d);
    hidden_pre.resize(d);
  }
};

// ---------------------------------------------------------------------------
// Block
// ---------------------------------------------------------------------------

/// Gated selective-scan block on an already-normalized input x (L x D):
/// project to 2*D_inner, split into x1 | z, x1 -> causal depthwise conv -> SiLU
/// -> selective scan, gate with SiLU(z), project back to D. The residual add
/// is the caller's.
template <Real T>
void block_forward_into(const BlockParams<T>& p, const Mat<T>& x, BlockTape<T>& tape, Mat<T>& out) {
  const Eigen::Index len = x.rows();
  const Eigen::Index di = p.conv.rows();
  const Eigen::Index width = p.conv.cols();
  require(x.cols() == p.w_in.rows(), "block: input width must equal d_model");
  tape.proj.noalias() = x * p.w_in;
  tape.proj.rowwise() += p.b_in;
  tape.x1 = tape.proj.leftCols(di);
  tape.z = tape.proj.rightCols(di);
  // Causal depthwise conv: tap j of width W reaches back W-1-j steps.
  tape.xc.setZero(len, di);
  for (Eigen::Index j = 0; j < width; ++j) {
    const Eigen::Index lag = width - 1 - j;
    if (lag >= len) continue;
    tape.xc.bottomRows(len - lag).array() +=
        tape.x1.topRows(len - lag).array().rowwise() * p.conv.col(j).transpose().array();
  }
  silu_into(tape.xc, tape.u);
  ssm::selective_scan_forward(p.ssm, tape.u, tape.scan, tape.ys);
  silu_into(tape.z, tape.gate);
  tape.o = tape.ys.cwiseProduct(tape.gate);
  out.noalias() = tape.o * p.w_out;
  out.rowwise() += p.b_out;
}

template <Real T>
Mat<T> block_forward(const BlockParams<T>& p, const Mat<T>& x) {
  BlockTape<T> tape;
  Mat<T> out(x.rows(), p.w_out.cols());
  block_forward_into(p, x, tape, out);
  return out;
}

/// Reverse of block_forward_into. g_out is dL/d(block output); writes dL/dx to
/// ws.g_norm and accumulates parameter gradients into g.
template <Real T>
void block_backward(const BlockParams<T>& p, const BlockTape<T>& tape, const Mat<T>& g_out, BlockParams<T>& g,
                    Workspace<T>& ws) {
  const Eigen::Index len = tape.xn.rows();
  const Eigen::Index di = p.conv.rows();
  const Eigen::Index width = p.conv.cols();

  g.w_out.noalias() += tape.o.transpose() * g_out;
  g.b_out += g_out.colwise().sum();
  ws.go.noalias() = g_out * p.w_out.transpose();
  ws.gys = ws.go.cwiseProduct(tape.gate);
  silu_grad_into(tape.z, ws.gz);
  ws.gz.array() *= ws.go.array() * tape.ys.array();

  ssm::selective_scan_backward(p.ssm, tape.u, tape.scan, ws.gys, g.ssm, ws.gu, ws.g_delta, ws.g_b, ws.g_c, ws.carry,
                              ws.carry_tmp);

  silu_grad_into(tape.xc, ws.gxc);
  ws.gxc.array() *= ws.gu.array();

  ws.gproj.setZero(len, 2 * di);
  for (Eigen::Index t = 0; t < len; ++t) {
    for (Eigen::Index j = 0; j < width; ++j) {
      const Eigen::Index src = t - (width - 1) + j;
      if (src < 0) continue;
      for (Eigen::Index d = 0; d < di; ++d) {
        g.conv(d, j) += ws.gxc(t, d) * tape.x1(src, d);
        ws.gproj(src, d) += ws.gxc(t, d) * p.conv(d, j);
      }
    }
  }
  ws.gproj.rightCols(di) = ws.gz;
  g.w_in.noalias() += tape.xn.transpose() * ws.gproj;
  g.b_in += ws.gproj.colwise().sum();
  ws.g_norm.noalias() = ws.gproj * p.w_in.transpose();
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Full forward pass over one input sequence; logits land in ws.logits.
/// Train mode applies dropout (linear-dropout head) drawing from `rng`.
template <Real T>
void forward(const ModelParams<T>& p, std::span<const T> seq, Workspace<T>& ws, Mode mode = Mode::eval,
             std::mt19937_64* rng = nullptr) {
  const ModelConfig& cfg = p.cfg;
  require(!seq.empty(), "model: empty input sequence");
  if (cfg.use_fas && seq.size() != 2 * cfg.k_fas)
    throw ShapeError("model: feature length " + std::to_string(seq.size()) + " does not match 2*k_fas = " +
                     std::to_string(2 * cfg.k_fas));
  if (ws.len != seq.size() || ws.blocks.size() != cfg.n_blocks || ws.x.cols() != static_cast<Eigen::Index>(cfg.d_model) ||
      (!ws.blocks.empty() && (ws.blocks.front().u.cols() != static_cast<Eigen::Index>(cfg.inner()) ||
                              ws.blocks.front().scan.record != ws.record_tape)))
    ws.prepare(cfg, seq.size());
  const auto len = static_cast<Eigen::Index>(seq.size());
  std::copy(seq.begin(), seq.end(), ws.seq.begin());

  for (Eigen::Index t = 0; t < len; ++t) ws.x.row(t) = seq[static_cast<std::size_t>(t)] * p.lift_w + p.lift_b;

  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& tape = ws.blocks[i];
    tape.xin = ws.x;
    rmsnorm_rows(tape.xin, p.blocks[i].norm_gain, tape.xn, tape.inv_rms);
    block_forward_into(p.blocks[i], tape.xn, tape, ws.block_out);
    ws.x += ws.block_out;
  }
  rmsnorm_rows(ws.x, p.final_gain, ws.xf, ws.inv_rms_f);

  if (cfg.head == HeadKind::mean_pool_linear)
    ws.pooled = ws.xf.colwise().mean();
  else
    ws.pooled = ws.xf.row(len - 1);

  switch (cfg.head) {
    case HeadKind::linear_last:
    case HeadKind::mean_pool_linear:
      ws.head_in = ws.pooled;
      break;
    case HeadKind::linear_dropout:
      if (mode == Mode::train && cfg.dropout_p > 0.0) {
        require(rng != nullptr, "model: train-mode dropout needs a randomness source");
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        const T keep_scale = static_cast<T>(1.0 / (1.0 - cfg.dropout_p));
        for (Eigen::Index i = 0; i < ws.mask.size(); ++i) ws.mask[i] = coin(*rng) < cfg.dropout_p ? T(0) : keep_scale;
      } else {
        ws.mask.setOnes();
      }
      ws.head_in = ws.pooled.cwiseProduct(ws.mask);
      break;
    case HeadKind::mlp:
      ws.hidden_pre.noalias() = ws.pooled * p.head.w_hidden;
      ws.hidden_pre += p.head.b_hidden;
      ws.head_in = ws.hidden_pre.cwiseMax(T(0));
      break;
  }
  for (int c = 0; c < 2; ++c) ws.logits[c] = ws.head_in.dot(p.head.w.col(c)) + p.head.b[c];
}

/// Reverse pass for the most recent forward on ws. Accumulates into grads.
template <Real T>
void backward(const ModelParams<T>& p, Workspace<T>& ws, const std::array<T, 2>& g_logits, ModelParams<T>& grads) {
  const ModelConfig& cfg = p.cfg;
  const auto len = static_cast<Eigen::Index>(ws.len);
  const auto d = static_cast<Eigen::Index>(cfg.d_model);

  for (int c = 0; c < 2; ++c) {
    grads.head.w.col(c) += ws.head_in.transpose() * g_logits[c];
    grads.head.b[c] += g_logits[c];
  }
  ws.gv = p.head.w.col(0).transpose() * g_logits[0] + p.head.w.col(1).transpose() * g_logits[1];
  if (cfg.head == HeadKind::mlp) {
    for (Eigen::Index i = 0; i < d; ++i)
      if (ws.hidden_pre[i] <= T(0)) ws.gv[i] = T(0);
    grads.head.w_hidden.noalias() += ws.pooled.transpose() * ws.gv;
    grads.head.b_hidden += ws.gv;
    ws.gv = (ws.gv * p.head.w_hidden.transpose()).eval();
  } else if (cfg.head == HeadKind::linear_dropout) {
    ws.gv = ws.gv.cwiseProduct(ws.mask);
  }

  ws.g_stream.setZero(len, d);
  if (cfg.head == HeadKind::mean_pool_linear)
    ws.g_stream.rowwise() += ws.gv / static_cast<T>(len);
  else
    ws.g_stream.row(len - 1) = ws.gv;

  rmsnorm_rows_backward(ws.x, p.final_gain, ws.inv_rms_f, ws.g_stream, grads.final_gain, ws.gx);

  for (std::size_t i = p.blocks.size(); i-- > 0;) {
    const auto& tape = ws.blocks[i];
    block_backward(p.blocks[i], tape, ws.gx, grads.blocks[i], ws);
    rmsnorm_rows_backward(tape.xin, p.blocks[i].norm_gain, tape.inv_rms, ws.g_norm, grads.blocks[i].norm_gain,
                          ws.g_stream);
    ws.gx += ws.g_stream;
  }

  for (Eigen::Index t = 0; t < len; ++t) grads.lift_w += ws.gx.row(t) * ws.seq[static_cast<std::size_t>(t)];
  grads.lift_b += ws.gx.colwise().sum();
}

/// Eval-mode logits for a raw input sequence.
template <Real T>
std::array<T, 2> model_forward_sequence(const ModelParams<T>& p, std::span<const T> seq) {
  Workspace<T> ws;
  forward(p, seq, ws);
  return ws.logits;
}

/// Eval-mode logits for FAS features.
template <Real T>
std::array<T, 2> model_forward(const ModelParams<T>& p, const fas::FasFeatures<T>& f) {
  if (!p.cfg.use_fas) throw ShapeError("model: configured for raw windows but given FAS features");
  return model_forward_sequence(p, std::span<const T>(f.values));
}

template <Real T>
std::array<T, 2> softmax(const std::array<T, 2>& z) {
  const T m = std::max(z[0], z[1]);
  const T e0 = std::exp(z[0] - m), e1 = std::exp(z[1] - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

}  // namespace arcflux::model
