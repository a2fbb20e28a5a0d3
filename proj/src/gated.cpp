#include "gsto/gated.hpp"

#include <stdexcept>

namespace gsto::gated {

const char* to_string(GateMode mode) {
  switch (mode) {
    case GateMode::none:
      return "none";
    case GateMode::unsupervised:
      return "unsupervised";
    case GateMode::supervised:
      return "supervised";
  }
  return "?";
}

GateMode parse_gate_mode(const std::string& s) {
  if (s == "none") return GateMode::none;
  if (s == "unsupervised" || s == "unsup") return GateMode::unsupervised;
  if (s == "supervised" || s == "sup") return GateMode::supervised;
  throw std::invalid_argument("unknown gate mode '" + s + "'");
}

namespace {

void check_spec(const Shape& s, const ScaleTransferSpec& spec) {
  auto fail = [&](const std::string& why) {
    throw ShapeError("inconsistent scale-transfer spec for " + s.str() + ": " + why);
  };
  if (spec.out_h < 1 || spec.out_w < 1 || spec.out_c < 1) fail("non-positive target");
  switch (spec.direction) {
    case Direction::same:
      if (spec.out_h != s.h || spec.out_w != s.w) fail("direction 'same' with a new size");
      break;
    case Direction::up:
      if (spec.out_h < s.h || spec.out_w < s.w) fail("direction 'up' to a smaller size");
      break;
    case Direction::down:
      if (spec.out_h > s.h || spec.out_w > s.w) fail("direction 'down' to a larger size");
      if (s.h % spec.out_h != 0 || s.w % spec.out_w != 0 ||
          s.h / spec.out_h != s.w / spec.out_w) {
        fail("down-sampling needs one integer factor for both axes");
      }
      break;
  }
  if (!spec.channel_conv && s.c != spec.out_c) fail("channel conv skipped but C != C'");
}

}  // namespace

template <typename T>
Tensor<T> st_transfer(const Tensor<T>& f, const ScaleTransferSpec& spec, ChannelMap<T>& channel,
                      nn::NormMode mode) {
  check_spec(f.shape(), spec);
  Tensor<T> mapped = f;
  if (spec.channel_conv) {
    if (channel.conv.kernel() != 1 || channel.conv.in_channels() != f.shape().c ||
        channel.conv.out_channels() != spec.out_c) {
      throw ShapeError("st_transfer: channel conv must be 1x1 " + std::to_string(f.shape().c) +
                       "->" + std::to_string(spec.out_c));
    }
    mapped = nn::apply_cbr(f, channel, mode);
  }
  switch (spec.direction) {
    case Direction::same:
      return mapped;
    case Direction::up:
      return nn::bilinear_upsample(mapped, spec.out_h, spec.out_w);
    case Direction::down:
      return nn::avg_pool_down(mapped, f.shape().h / spec.out_h);
  }
  return mapped;
}

template <typename T>
GateMap<T> compute_gate_unsupervised(const Tensor<T>& f, const nn::Conv2dParams<T>& rho) {
  if (rho.kernel() != 1 || rho.out_channels() != 1 || rho.in_channels() != f.shape().c) {
    throw ShapeError("unsupervised gate: rho must have length " + std::to_string(f.shape().c));
  }
  return {nn::sigmoid(nn::conv2d(f, rho))};
}

template <typename T>
GateMap<T> gate_from_probability(const ProbabilityMap<T>& p, const nn::Conv2dParams<T>& theta) {
  if (theta.kernel() != 1 || theta.out_channels() != 1 ||
      theta.in_channels() != p.logits.shape().c) {
    throw ShapeError("supervised gate: theta length must equal class count " +
                     std::to_string(p.logits.shape().c));
  }
  return {nn::sigmoid(nn::conv2d(p.logits, theta))};
}

template <typename T>
std::pair<GateMap<T>, ProbabilityMap<T>> compute_gate_supervised(
    const Tensor<T>& f, const GatePredictorParams<T>& params) {
  if (params.mode != GateMode::supervised) {
    throw std::invalid_argument("compute_gate_supervised: parameters are in mode " +
                                std::string(to_string(params.mode)));
  }
  if (params.predictor.kernel() != 1 || params.predictor.in_channels() != f.shape().c) {
    throw ShapeError("supervised gate: predictor must be 1x1 from " + std::to_string(f.shape().c) +
                     " channels");
  }
  ProbabilityMap<T> p{nn::conv2d(f, params.predictor)};
  GateMap<T> g = gate_from_probability(p, params.theta);
  return {std::move(g), std::move(p)};
}

template <typename T>
Tensor<T> apply_gate(const Tensor<T>& f, const GateMap<T>& g) {
  const Shape& fs = f.shape();
  const Shape& gs = g.values.shape();
  if (gs.c != 1 || gs.n != fs.n || gs.h != fs.h || gs.w != fs.w) {
    throw ShapeError("apply_gate: gate " + gs.str() + " does not fit feature " + fs.str());
  }
  return nn::mul_spatial(f, g.values);
}

template <typename T>
GstoResult<T> gsto_transfer(const Tensor<T>& f, const GstoSpec<T>& spec, GstoParams<T>& params,
                            nn::NormMode mode) {
  if (spec.gate_mode != GateMode::none && params.gate.mode != spec.gate_mode) {
    throw std::invalid_argument(std::string("gsto_transfer: spec gate mode ") +
                                to_string(spec.gate_mode) + " but parameters are " +
                                to_string(params.gate.mode));
  }
  GstoResult<T> result;
  Tensor<T> gated = f;
  if (spec.gate_mode == GateMode::supervised) {
    // P is produced even under an override so the auxiliary loss stays defined.
    if (params.gate.predictor.in_channels() != f.shape().c) {
      throw ShapeError("gsto_transfer: predictor input width mismatch");
    }
    result.probability = ProbabilityMap<T>{nn::conv2d(f, params.gate.predictor)};
  }
  if (spec.gate_override) {
    result.gate = *spec.gate_override;
  } else if (spec.gate_mode == GateMode::unsupervised) {
    result.gate = compute_gate_unsupervised(f, params.gate.rho);
  } else if (spec.gate_mode == GateMode::supervised) {
    result.gate = gate_from_probability(*result.probability, params.gate.theta);
  }
  if (result.gate) gated = apply_gate(f, *result.gate);
  result.output = st_transfer(gated, spec.scale, params.channel, mode);
  return result;
}

std::size_t gate_param_count(int channels, int classes, GateMode mode) {
  const auto c = static_cast<std::size_t>(channels);
  const auto k = static_cast<std::size_t>(classes);
  switch (mode) {
    case GateMode::none:
      return 0;
    case GateMode::unsupervised:
      return c + 1;
    case GateMode::supervised:
      return (c * k + k) + (k + 1);
  }
  return 0;
}

template <typename T>
GatePredictorParams<T> make_gate_params(ParamStore<T>& store, const std::string& name,
                                        int channels, int classes, GateMode mode,
                                        std::uint64_t seed) {
  GatePredictorParams<T> p;
  p.mode = mode;
  const auto kind = ParamKind::gate;
  if (mode == GateMode::unsupervised) {
    p.rho = nn::make_conv(store, name + ".rho", nn::ConvSpec{.in = channels, .out = 1}, seed,
                          nn::Init::fan_in, kind);
  } else if (mode == GateMode::supervised) {
    p.predictor = nn::make_conv(store, name + ".predictor",
                                nn::ConvSpec{.in = channels, .out = classes}, seed,
                                nn::Init::fan_in, kind);
    p.theta = nn::make_conv(store, name + ".theta", nn::ConvSpec{.in = classes, .out = 1}, seed,
                            nn::Init::fan_in, kind);
  }
  return p;
}

template <typename T>
ChannelMap<T> make_channel_map(ParamStore<T>& store, const std::string& name, int in_channels,
                               int out_channels, std::uint64_t seed, bool with_norm,
                               bool with_relu) {
  return nn::make_cbr(store, name, nn::ConvSpec{.in = in_channels, .out = out_channels}, seed,
                      with_norm, with_relu);
}

#define GSTO_INSTANTIATE(T)                                                                   \
  template Tensor<T> st_transfer<T>(const Tensor<T>&, const ScaleTransferSpec&, ChannelMap<T>&, \
                                    nn::NormMode);                                            \
  template GateMap<T> compute_gate_unsupervised<T>(const Tensor<T>&, const nn::Conv2dParams<T>&); \
  template GateMap<T> gate_from_probability<T>(const ProbabilityMap<T>&,                      \
                                               const nn::Conv2dParams<T>&);                   \
  template std::pair<GateMap<T>, ProbabilityMap<T>> compute_gate_supervised<T>(               \
      const Tensor<T>&, const GatePredictorParams<T>&);                                       \
  template Tensor<T> apply_gate<T>(const Tensor<T>&, const GateMap<T>&);                      \
  template GstoResult<T> gsto_transfer<T>(const Tensor<T>&, const GstoSpec<T>&, GstoParams<T>&, \
                                          nn::NormMode);                                      \
  template GatePredictorParams<T> make_gate_params<T>(ParamStore<T>&, const std::string&, int, \
                                                      int, GateMode, std::uint64_t);          \
  template ChannelMap<T> make_channel_map<T>(ParamStore<T>&, const std::string&, int, int,    \
                                             std::uint64_t, bool, bool);

GSTO_INSTANTIATE(float)
GSTO_INSTANTIATE(double)
#undef GSTO_INSTANTIATE

}  // namespace gsto::gated
