#include "gsto/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace gsto::train {

void OptimState::validate() const {
  if (max_iter <= 0) throw std::invalid_argument("OptimState: max_iter must be positive");
  if (current_iter < 0 || current_iter > max_iter) {
    throw std::invalid_argument("OptimState: current_iter outside [0, max_iter]");
  }
  if (!(base_lr >= 0.0)) throw std::invalid_argument("OptimState: base_lr must be non-negative");
  if (!(weight_decay >= 0.0)) {
    throw std::invalid_argument("OptimState: weight_decay must be non-negative");
  }
}

double poly_lr(const OptimState& state) {
  state.validate();
  const double frac = 1.0 - static_cast<double>(state.current_iter) / state.max_iter;
  return state.base_lr * std::pow(frac, state.power);
}

template <typename T>
void sgd_step(ParamStore<T>& params, const OptimState& state) {
  const T lr = static_cast<T>(poly_lr(state));
  const T mu = static_cast<T>(state.momentum);
  const T wd = static_cast<T>(state.weight_decay);
  for (auto& e : params.entries()) {
    if (e.trainable() && !e.value.has_grad()) {
      throw TapeError("sgd_step: no gradient for '" + e.name + "'");
    }
  }
  for (auto& e : params.entries()) {
    if (!e.trainable()) continue;
    auto p = e.value.data_mut();
    const auto g = e.value.grad_mut();
    const T decay = e.decays() ? wd : T(0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      e.momentum[i] = mu * e.momentum[i] + (g[i] + decay * p[i]);
      p[i] -= lr * e.momentum[i];
    }
    e.value.zero_grad();
  }
}

template void sgd_step<float>(ParamStore<float>&, const OptimState&);
template void sgd_step<double>(ParamStore<double>&, const OptimState&);

}  // namespace gsto::train
