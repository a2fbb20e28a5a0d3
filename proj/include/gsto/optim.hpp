#pragma once

#include "gsto/param_store.hpp"

namespace gsto::train {

struct OptimState {
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double power = 0.9;
  int max_iter = 1;
  int current_iter = 0;

  bool operator==(const OptimState&) const = default;

  /// Throws std::invalid_argument unless 0 <= current_iter <= max_iter, max_iter > 0,
  /// base_lr >= 0 and weight_decay >= 0.
  void validate() const;
};

/// base_lr * (1 - current_iter / max_iter)^power.
double poly_lr(const OptimState& state);

/// v = momentum * v + (grad + wd * p) (decay on weight and gate kernels only);
/// p -= lr * v with lr = poly_lr(state); gradients are cleared afterwards.
/// Does not advance current_iter. Throws TapeError if a trainable entry has no gradient.
template <typename T>
void sgd_step(ParamStore<T>& params, const OptimState& state);

}  // namespace gsto::train
