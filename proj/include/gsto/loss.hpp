#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "gsto/labels.hpp"
#include "gsto/msnet.hpp"
#include "gsto/tensor.hpp"

namespace gsto::train {

struct LossSpec {
  std::array<double, 4> stage_weights{0.2, 0.3, 0.5, 1.0};
  std::int32_t ignore_index = 255;
  /// Stage 1 contributes nothing, whether or not a stage-1 map exists.
  bool drop_loss1 = false;

  bool operator==(const LossSpec&) const = default;

  /// Throws std::invalid_argument on negative weights or a final weight other than 1.
  void validate() const;
};

/// Mean softmax cross-entropy over pixels whose label is not ignore_index.
/// logits (N, c0, H, W); labels (N, H, W).
template <typename T>
Tensor<T> pixel_cross_entropy(const Tensor<T>& logits, const LabelMap& labels,
                              std::int32_t ignore_index);

/// w1*l1 + w2*l2 + w3*l3 + w4*main, accumulated in that order. Stages with zero
/// weight are skipped; a missing stage with nonzero weight is an error unless it
/// is stage 1 and drop_loss1 is set.
template <typename T>
Tensor<T> total_loss(const Tensor<T>& main, const std::array<std::optional<Tensor<T>>, 3>& aux,
                     const LossSpec& spec);

template <typename T>
struct NetworkLoss {
  Tensor<T> total;
  std::array<std::optional<double>, 4> stages;  // unweighted l1..l4
};

/// Cross-entropy of the main logits and of every stage map (bilinearly
/// upsampled to label resolution), combined with total_loss. Stages the
/// network produces no map for contribute nothing.
template <typename T>
NetworkLoss<T> network_loss(const msnet::NetOutput<T>& out, const LabelMap& labels,
                            const LossSpec& spec);

}  // namespace gsto::train
