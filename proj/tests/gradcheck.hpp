#pragma once

// Central finite-difference check of model::backward over every learnable tensor.

#include "arcflux/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace gradcheck {

struct Worst {
  std::string tensor;
  std::size_t index = 0;
  double rel = 0;
  double analytic = 0, numeric = 0;
  std::size_t checked = 0;
  std::size_t tensors = 0;
};

// Loss is g . logits for a fixed g. Dropout masks are reproduced by reseeding
// the generator before every forward.
inline Worst check(const arcflux::model::ModelConfig& cfg, std::uint64_t seed, const std::vector<double>& seq,
                   arcflux::model::Mode mode, double h = 1e-5) {
  using namespace arcflux::model;
  auto p = init_params<double>(cfg, seed);
  const std::array<double, 2> g{0.3, -0.7};
  auto logits = [&](const ModelParams<double>& params, Workspace<double>& ws) {
    std::mt19937_64 rng(seed + 99);
    forward(params, std::span<const double>(seq), ws, mode, &rng);
    return g[0] * ws.logits[0] + g[1] * ws.logits[1];
  };

  Workspace<double> ws;
  logits(p, ws);
  auto grads = ModelParams<double>::zeros(cfg);
  backward(p, ws, g, grads);

  auto pv = tensor_views(p);
  const auto gv = tensor_views(std::as_const(grads));
  Worst w;
  w.tensors = pv.size();
  Workspace<double> probe;
  for (std::size_t t = 0; t < pv.size(); ++t) {
    for (std::size_t i = 0; i < pv[t].size; ++i) {
      const double keep = pv[t].data[i];
      pv[t].data[i] = keep + h;
      const double up = logits(p, probe);
      pv[t].data[i] = keep - h;
      const double down = logits(p, probe);
      pv[t].data[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double an = gv[t].data[i];
      // Relative error with a floor so that gradients that are zero up to
      // finite-difference noise do not divide by ~0.
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      ++w.checked;
      if (rel >= w.rel) w = {pv[t].name, i, rel, an, fd, w.checked, w.tensors};
    }
  }
  return w;
}

inline arcflux::model::ModelConfig tiny(arcflux::model::HeadKind head) {
  arcflux::model::ModelConfig c;
  c.d_model = 4;
  c.expand = 2;
  c.n_state = 2;
  c.n_blocks = 1;
  c.k_fas = 4;
  c.head = head;
  return c;
}

inline std::vector<double> tiny_sequence() { return {1.9, 1.8, 1.75, 1.72, 1.6, 1.62, 1.65, 1.68}; }

}  // namespace gradcheck
