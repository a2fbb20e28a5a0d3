#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gsto/labels.hpp"

namespace gsto::train {

/// classes x classes pixel counts; rows are ground truth, columns predictions.
class ConfusionMatrix {
 public:
  ConfusionMatrix(int classes, std::int32_t ignore_index);

  /// Throws ShapeError on a shape mismatch and std::invalid_argument on
  /// predictions outside [0, classes) or labels outside [0, classes) ∪ {ignore}.
  void add(const LabelMap& pred, const LabelMap& gt);
  void add(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& gt);

  int classes() const { return classes_; }
  std::uint64_t at(int gt, int pred) const { return counts_[gt * classes_ + pred]; }
  std::uint64_t total() const;

  /// TP / (TP + FP + FN); empty for classes absent from both prediction and ground truth.
  std::vector<std::optional<double>> iou() const;
  /// Mean over classes with a defined IoU; 0 when none is defined.
  double miou() const;
  /// Throws std::invalid_argument when no pixel was counted.
  double pixel_accuracy() const;

 private:
  int classes_;
  std::int32_t ignore_;
  std::vector<std::uint64_t> counts_;
};

struct MiouResult {
  std::vector<std::optional<double>> per_class;
  double mean = 0.0;
};

MiouResult miou(const LabelMap& pred, const LabelMap& gt, int classes, std::int32_t ignore_index);
double pixel_accuracy(const LabelMap& pred, const LabelMap& gt, std::int32_t ignore_index);

}  // namespace gsto::train
