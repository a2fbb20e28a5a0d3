#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "gsto/layers.hpp"
#include "gsto/ops.hpp"
#include "gsto/param_store.hpp"

// Gated scale transfer.
//
// A conventional scale transfer maps a feature F (C x H x W) to another
// resolution and width: a 1x1 convolution changes the channel count
// (F~ = conv1x1(F)) and an up- or down-sampling step changes the resolution
// (F' = ST(F~)). The gated form first multiplies F by a per-pixel gate
// g in (0, 1), broadcast over channels, and then performs the same transfer
// on the gated feature. The gate is computed either directly from F
// (unsupervised: g = sigmoid(rho . F + b)) or from an auxiliary class-score
// map P = conv1x1(F) that is trained against the labels (supervised:
// g = sigmoid(theta . P + b)).

namespace gsto::gated {

enum class GateMode { none, unsupervised, supervised };
enum class Direction { same, up, down };

const char* to_string(GateMode mode);
GateMode parse_gate_mode(const std::string& s);

/// Target of a scale transfer.
struct ScaleTransferSpec {
  int out_h = 1;
  int out_w = 1;
  int out_c = 1;
  Direction direction = Direction::same;
  /// When false the 1x1 channel convolution is skipped (requires C == out_c).
  bool channel_conv = true;
};

/// Single-channel spatial gate, shape (N, 1, H, W), values in (0, 1).
template <typename T>
struct GateMap {
  Tensor<T> values;

  static GateMap constant(int n, int h, int w, T value) {
    return {Tensor<T>::full(Shape{n, 1, h, w}, value)};
  }
};

/// Class-score map P (pre-softmax logits), shape (N, c0, H, W).
template <typename T>
struct ProbabilityMap {
  Tensor<T> logits;
};

/// Parameters of the gate branch. Only the members used by `mode` are set.
template <typename T>
struct GatePredictorParams {
  GateMode mode = GateMode::none;
  nn::Conv2dParams<T> rho;        // unsupervised: C -> 1, 1x1 with bias
  nn::Conv2dParams<T> predictor;  // supervised: C -> c0, 1x1 with bias
  nn::Conv2dParams<T> theta;      // supervised: c0 -> 1, 1x1 with bias
};

/// Channel-modifying block of the transfer: a 1x1 conv with optional BN/ReLU.
/// With neither BN nor ReLU this is exactly F~ = conv1x1(F) + bias.
template <typename T>
using ChannelMap = nn::Cbr<T>;

template <typename T>
struct GstoParams {
  GatePredictorParams<T> gate;
  ChannelMap<T> channel;
};

template <typename T>
struct GstoSpec {
  ScaleTransferSpec scale;
  GateMode gate_mode = GateMode::none;
  /// Replaces gate computation (not application). Test and inspection hook.
  std::optional<GateMap<T>> gate_override;
};

template <typename T>
struct GstoResult {
  Tensor<T> output;
  std::optional<ProbabilityMap<T>> probability;  // supervised mode only
  std::optional<GateMap<T>> gate;                // gate actually applied
};

/// Conventional transfer: 1x1 channel conv at the source resolution, then
/// bilinear up-sampling or average-pool down-sampling to the target.
template <typename T>
Tensor<T> st_transfer(const Tensor<T>& f, const ScaleTransferSpec& spec, ChannelMap<T>& channel,
                      nn::NormMode mode = nn::NormMode::train);

/// g = sigmoid(sum_m rho_m F_m + b).
template <typename T>
GateMap<T> compute_gate_unsupervised(const Tensor<T>& f, const nn::Conv2dParams<T>& rho);

/// g = sigmoid(sum_n theta_n P_n + b) for a given class-score map P.
template <typename T>
GateMap<T> gate_from_probability(const ProbabilityMap<T>& p, const nn::Conv2dParams<T>& theta);

/// P = conv1x1(F) with the predictor, then gate_from_probability.
template <typename T>
std::pair<GateMap<T>, ProbabilityMap<T>> compute_gate_supervised(const Tensor<T>& f,
                                                                 const GatePredictorParams<T>& params);

/// F^g_mij = g_ij * F_mij.
template <typename T>
Tensor<T> apply_gate(const Tensor<T>& f, const GateMap<T>& g);

/// Gate (computed or overridden) applied at the source resolution, then st_transfer.
template <typename T>
GstoResult<T> gsto_transfer(const Tensor<T>& f, const GstoSpec<T>& spec, GstoParams<T>& params,
                            nn::NormMode mode = nn::NormMode::train);

/// Learnable gate parameters for one transfer site:
/// unsupervised C + 1; supervised (C*c0 + c0) + (c0 + 1); none 0.
std::size_t gate_param_count(int channels, int classes, GateMode mode);

/// Registers gate parameters under `<name>.rho`, `<name>.predictor`, `<name>.theta`.
template <typename T>
GatePredictorParams<T> make_gate_params(ParamStore<T>& store, const std::string& name,
                                        int channels, int classes, GateMode mode,
                                        std::uint64_t seed);

/// Registers the 1x1 channel block under `<name>`.
template <typename T>
ChannelMap<T> make_channel_map(ParamStore<T>& store, const std::string& name, int in_channels,
                               int out_channels, std::uint64_t seed, bool with_norm = false,
                               bool with_relu = false);

}  // namespace gsto::gated
