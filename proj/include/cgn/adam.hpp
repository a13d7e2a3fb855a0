#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cgn/errors.hpp"
#include "cgn/tensor.hpp"

namespace cgn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers mirroring the parameter list, plus step count.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;
};

/// Bias-corrected Adam update. Gradients are checked for NaN/Inf before any
/// parameter or moment is touched.
inline void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
                      double lr, const AdamConfig& cfg = {}) {
  if (params.size() != grads.size())
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape != grads[i].shape)
      throw DimensionError("adam_step: gradient " + std::to_string(i) + " has shape " +
                           shape_str(grads[i].shape) + ", parameter " + shape_str(params[i]->shape));
    if (!grads[i].all_finite())
      throw NumericError("adam_step: non-finite gradient for parameter " + std::to_string(i));
  }
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: state does not mirror parameters");

  ++state.t;
  const double corr1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double corr2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    auto& p = params[i]->data;
    const auto& g = grads[i].data;
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double mhat = m[k] / corr1;
      const double vhat = v[k] / corr2;
      p[k] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace cgn
