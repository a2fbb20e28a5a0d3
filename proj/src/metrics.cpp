#include "gsto/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

#include "gsto/tensor.hpp"

namespace gsto::train {

ConfusionMatrix::ConfusionMatrix(int classes, std::int32_t ignore_index)
    : classes_(classes), ignore_(ignore_index) {
  if (classes < 1) throw std::invalid_argument("ConfusionMatrix: classes must be positive");
  counts_.assign(static_cast<std::size_t>(classes) * classes, 0);
}

void ConfusionMatrix::add(const LabelMap& pred, const LabelMap& gt) {
  if (!pred.same_shape(gt)) {
    throw ShapeError("confusion matrix: prediction " + pred.str() + " vs labels " + gt.str());
  }
  add(pred.values, gt.values);
}

void ConfusionMatrix::add(const std::vector<std::int32_t>& pred,
                          const std::vector<std::int32_t>& gt) {
  if (pred.size() != gt.size()) {
    throw ShapeError("confusion matrix: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(gt.size()) + " labels");
  }
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const std::int32_t p = pred[i];
    const std::int32_t g = gt[i];
    if (p < 0 || p >= classes_) {
      throw std::invalid_argument("confusion matrix: prediction " + std::to_string(p) +
                                  " out of range");
    }
    if (g == ignore_) continue;
    if (g < 0 || g >= classes_) {
      throw std::invalid_argument("confusion matrix: label " + std::to_string(g) + " out of range");
    }
    ++counts_[g * classes_ + p];
  }
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

std::vector<std::optional<double>> ConfusionMatrix::iou() const {
  std::vector<std::optional<double>> out(classes_);
  for (int c = 0; c < classes_; ++c) {
    std::uint64_t row = 0;
    std::uint64_t col = 0;
    for (int k = 0; k < classes_; ++k) {
      row += at(c, k);
      col += at(k, c);
    }
    const std::uint64_t tp = at(c, c);
    const std::uint64_t denom = row + col - tp;
    if (denom > 0) out[c] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return out;
}

double ConfusionMatrix::miou() const {
  double acc = 0.0;
  int n = 0;
  for (const auto& v : iou()) {
    if (!v) continue;
    acc += *v;
    ++n;
  }
  return n == 0 ? 0.0 : acc / n;
}

double ConfusionMatrix::pixel_accuracy() const {
  const std::uint64_t all = total();
  if (all == 0) throw std::invalid_argument("pixel accuracy: every pixel is ignored");
  std::uint64_t correct = 0;
  for (int c = 0; c < classes_; ++c) correct += at(c, c);
  return static_cast<double>(correct) / static_cast<double>(all);
}

MiouResult miou(const LabelMap& pred, const LabelMap& gt, int classes, std::int32_t ignore_index) {
  ConfusionMatrix cm(classes, ignore_index);
  cm.add(pred, gt);
  return {cm.iou(), cm.miou()};
}

double pixel_accuracy(const LabelMap& pred, const LabelMap& gt, std::int32_t ignore_index) {
  if (!pred.same_shape(gt)) {
    throw ShapeError("pixel_accuracy: prediction " + pred.str() + " vs labels " + gt.str());
  }
  std::uint64_t counted = 0;
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt.values[i] == ignore_index) continue;
    ++counted;
    if (pred.values[i] == gt.values[i]) ++correct;
  }
  if (counted == 0) throw std::invalid_argument("pixel_accuracy: every pixel is ignored");
  return static_cast<double>(correct) / static_cast<double>(counted);
}

}  // namespace gsto::train
