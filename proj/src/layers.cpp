#include "gsto/layers.hpp"

#include <cmath>

#include "gsto/rng.hpp"

namespace gsto::nn {

template <typename T>
Conv2dParams<T> make_conv(ParamStore<T>& store, const std::string& name, const ConvSpec& spec,
                          std::uint64_t seed, Init init, ParamKind kind) {
  Conv2dParams<T> p;
  p.weight = store.add(name + ".weight", Shape{spec.out, spec.in, spec.kernel, spec.kernel}, kind);
  if (spec.bias) p.bias = store.add(name + ".bias", Shape{1, spec.out, 1, 1}, ParamKind::bias);
  p.stride = spec.stride;
  p.padding = spec.padding;
  p.dilation = spec.dilation;

  if (init != Init::zeros) {
    const double fan_in = static_cast<double>(spec.in) * spec.kernel * spec.kernel;
    const double stddev = std::sqrt((init == Init::kaiming ? 2.0 : 1.0) / fan_in);
    SplitMix64 rng = SplitMix64::stream(seed, name + ".weight");
    for (T& v : p.weight.data_mut()) v = static_cast<T>(stddev * rng.normal());
  }
  return p;
}

template <typename T>
NormParams<T> make_norm(ParamStore<T>& store, const std::string& name, int channels, T momentum,
                        T eps) {
  NormParams<T> p;
  const Shape s{1, channels, 1, 1};
  p.gamma = store.add(name + ".gamma", s, ParamKind::norm);
  p.beta = store.add(name + ".beta", s, ParamKind::norm);
  p.running_mean = store.add(name + ".running_mean", s, ParamKind::buffer);
  p.running_var = store.add(name + ".running_var", s, ParamKind::buffer);
  for (T& v : p.gamma.data_mut()) v = T(1);
  for (T& v : p.running_var.data_mut()) v = T(1);
  p.momentum = momentum;
  p.eps = eps;
  return p;
}

template <typename T>
Cbr<T> make_cbr(ParamStore<T>& store, const std::string& name, ConvSpec spec, std::uint64_t seed,
                bool with_norm, bool with_relu, T bn_momentum, T bn_eps) {
  Cbr<T> b;
  spec.bias = !with_norm;
  b.conv = make_conv(store, name + ".conv", spec, seed);
  if (with_norm) b.norm = make_norm(store, name + ".bn", spec.out, bn_momentum, bn_eps);
  b.relu = with_relu;
  return b;
}

template <typename T>
Tensor<T> apply_cbr(const Tensor<T>& x, Cbr<T>& block, NormMode mode) {
  Tensor<T> y = conv2d(x, block.conv);
  if (block.norm) {
    block.norm->mode = mode;
    y = batch_norm(y, *block.norm);
  }
  if (block.relu) y = relu(y);
  return y;
}

#define GSTO_INSTANTIATE(T)                                                                    \
  template Conv2dParams<T> make_conv<T>(ParamStore<T>&, const std::string&, const ConvSpec&,  \
                                        std::uint64_t, Init, ParamKind);                      \
  template NormParams<T> make_norm<T>(ParamStore<T>&, const std::string&, int, T, T);          \
  template Cbr<T> make_cbr<T>(ParamStore<T>&, const std::string&, ConvSpec, std::uint64_t,     \
                              bool, bool, T, T);                                               \
  template Tensor<T> apply_cbr<T>(const Tensor<T>&, Cbr<T>&, NormMode);

GSTO_INSTANTIATE(float)
GSTO_INSTANTIATE(double)
#undef GSTO_INSTANTIATE

}  // namespace gsto::nn
