#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "gsto/ops.hpp"
#include "gsto/param_store.hpp"

namespace gsto::nn {

struct ConvSpec {
  int in = 1;
  int out = 1;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int dilation = 1;
  bool bias = true;
};

struct NormConfig {
  double momentum = 0.1;
  double eps = 1e-5;
};

enum class Init {
  kaiming,  // N(0, 2 / fan_in): kernels feeding a ReLU
  fan_in,   // N(0, 1 / fan_in): gate, predictor and classifier kernels
  zeros,
};

/// Registers `<name>.weight` (and `<name>.bias`) and initializes the weight
/// from the (seed, name) stream, so identical names get identical values
/// regardless of construction order.
template <typename T>
Conv2dParams<T> make_conv(ParamStore<T>& store, const std::string& name, const ConvSpec& spec,
                          std::uint64_t seed, Init init = Init::kaiming,
                          ParamKind kind = ParamKind::weight);

/// gamma = 1, beta = 0, running mean 0, running variance 1.
template <typename T>
NormParams<T> make_norm(ParamStore<T>& store, const std::string& name, int channels,
                        T momentum = T(0.1), T eps = T(1e-5));

/// Conv, optional BatchNorm, optional ReLU. A conv followed by BatchNorm has no bias.
template <typename T>
struct Cbr {
  Conv2dParams<T> conv;
  std::optional<NormParams<T>> norm;
  bool relu = true;
};

template <typename T>
Cbr<T> make_cbr(ParamStore<T>& store, const std::string& name, ConvSpec spec, std::uint64_t seed,
                bool with_norm = true, bool with_relu = true, T bn_momentum = T(0.1),
                T bn_eps = T(1e-5));

template <typename T>
Tensor<T> apply_cbr(const Tensor<T>& x, Cbr<T>& block, NormMode mode);

}  // namespace gsto::nn
