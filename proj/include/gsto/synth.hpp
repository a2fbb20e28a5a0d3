#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "gsto/labels.hpp"
#include "gsto/tensor.hpp"

namespace gsto::train {

/// Synthetic multi-scale scenes: background plus large, medium and small
/// objects (rectangles or disks), drawn in that order so later shapes occlude.
struct SynthSpec {
  static constexpr int kClasses = 4;  // 0 background, 1 large, 2 medium, 3 small

  struct Range {
    int lo;
    int hi;
    bool operator==(const Range&) const = default;
  };

  int height = 64;
  int width = 64;
  /// Objects per image for classes 1..3.
  std::array<Range, 3> counts{Range{1, 1}, Range{1, 3}, Range{2, 4}};
  double disk_prob = 0.5;
  /// Per-pixel Gaussian noise standard deviation.
  double noise = 0.05;
  /// Per-object uniform colour offset in [-jitter, jitter] per channel.
  double color_jitter = 0.0;
  std::uint64_t seed = 1;
  int n_train = 16;
  int n_val = 16;

  bool operator==(const SynthSpec&) const = default;

  /// Side-length range of class 1..3 objects: [S/2, 3S/4], [S/8, S/4], [2, 6] with S = min(H, W).
  Range side_range(int cls) const;
  /// Throws std::invalid_argument on a malformed spec.
  void validate() const;
};

/// Base RGB colour of each class.
const std::array<std::array<double, 3>, SynthSpec::kClasses>& class_colors();

template <typename T>
struct Sample {
  Tensor<T> image;  // (1, 3, H, W)
  LabelMap labels;  // (1, H, W)
};

/// Pure function of (spec, index). Train images use indices [0, n_train),
/// validation images [n_train, n_train + n_val).
template <typename T>
Sample<T> synth_generate(const SynthSpec& spec, std::uint64_t index);

/// Stacks samples along the batch axis, mirroring those with flip[i] set.
template <typename T>
Sample<T> make_batch(const std::vector<Sample<T>>& samples, const std::vector<bool>& flip = {});

}  // namespace gsto::train
