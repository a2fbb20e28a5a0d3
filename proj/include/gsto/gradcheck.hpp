#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "gsto/tensor.hpp"

namespace gsto {

/// Central differences of f with respect to every element of x.
///
/// x is perturbed in place and restored exactly after each element, so f may
/// read x through any handle that shares its storage (e.g. a parameter).
/// Throws NumericError when f returns a non-finite value.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, Tensor<T> x,
                           T eps = T(1e-4));

/// Same oracle restricted to the listed flat indices; other entries are zero.
template <typename T>
Tensor<T> finite_diff_grad_at(const std::function<T(const Tensor<T>&)>& f, Tensor<T> x,
                              const std::vector<std::size_t>& indices, T eps = T(1e-4));

struct RiddersEstimate {
  double value;
  double error;  // extrapolation error estimate
};

/// Ridders' extrapolation of central differences at one element, starting at
/// step h0 and shrinking by 1.4 per stage; returns the tableau entry with the
/// smallest error estimate. Slower, but resolves derivatives far below the
/// rounding floor of a single small-step difference.
template <typename T>
RiddersEstimate finite_diff_ridders(const std::function<T(const Tensor<T>&)>& f, Tensor<T> x,
                                    std::size_t index, double h0 = 1e-3);

struct GradMismatch {
  std::size_t index;
  double analytic;
  double numeric;
  double error;
};

struct GradReport {
  double max_error = 0.0;
  bool passed = true;
  std::size_t checked = 0;
  std::vector<GradMismatch> worst;  // descending error, at most 5
  std::string summary() const;
};

/// Per-element relative error |a-n| / max(1e-8, |a|+|n|); passes iff max < tol.
/// When indices is non-empty only those elements are compared.
template <typename T>
GradReport grad_check(const std::vector<T>& analytic, const std::vector<T>& numeric, double tol,
                      const std::vector<std::size_t>& indices = {});

template <typename T>
GradReport grad_check(const Tensor<T>& analytic, const Tensor<T>& numeric, double tol) {
  if (analytic.shape() != numeric.shape()) {
    throw ShapeError("grad_check shape mismatch " + analytic.shape().str() + " vs " +
                     numeric.shape().str());
  }
  return grad_check(analytic.values(), numeric.values(), tol);
}

}  // namespace gsto
