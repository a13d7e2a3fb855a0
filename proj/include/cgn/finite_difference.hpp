// Central-difference gradient estimates; the independent oracle for backward().
#pragma once

#include <functional>
#include <string>

#include "cgn/errors.hpp"
#include "cgn/tensor.hpp"

namespace cgn {

/// Estimates d f / d point[i] as (f(x + h e_i) - f(x - h e_i)) / 2h for every
/// coordinate. Exceptions thrown by `f` at a probe are rethrown with the
/// coordinate index prepended.
inline Tensor finite_difference(const std::function<double(const Tensor&)>& f, const Tensor& point,
                                double h = 1e-5) {
  if (!(h > 0.0)) throw ContractError("finite_difference: step must be positive");
  Tensor probe = point;
  Tensor grad = Tensor::zeros(point.shape);
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double x = point.data[i];
    double fp = 0.0, fm = 0.0;
    try {
      probe.data[i] = x + h;
      fp = f(probe);
      probe.data[i] = x - h;
      fm = f(probe);
    } catch (const NumericError& e) {
      throw NumericError("finite_difference at coordinate " + std::to_string(i) + ": " + e.what());
    } catch (const Error& e) {
      throw ContractError("finite_difference at coordinate " + std::to_string(i) + ": " + e.what());
    }
    probe.data[i] = x;
    grad.data[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

/// |a - b| measured against max(|a|, |b|), with `abs_floor` as the smallest
/// admissible absolute error. Returns the ratio; <= rel_tol means a match.
inline double gradient_mismatch(double a, double b, double rel_tol, double abs_floor) {
  const double diff = std::abs(a - b);
  const double allowed = std::max(rel_tol * std::max(std::abs(a), std::abs(b)), abs_floor);
  return diff / allowed * rel_tol;
}

}  // namespace cgn
