#include "gsto/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gsto/ops.hpp"

namespace gsto::train {

void LossSpec::validate() const {
  for (double w : stage_weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("LossSpec: stage weights must be non-negative");
  }
  if (stage_weights[3] != 1.0) throw std::invalid_argument("LossSpec: final-stage weight must be 1");
}

template <typename T>
Tensor<T> pixel_cross_entropy(const Tensor<T>& logits, const LabelMap& labels,
                              std::int32_t ignore_index) {
  const Shape& s = logits.shape();
  if (labels.n != s.n || labels.h != s.h || labels.w != s.w) {
    throw ShapeError("pixel_cross_entropy: logits " + s.str() + " vs labels " + labels.str());
  }
  const int classes = s.c;
  const std::size_t plane = s.plane();
  const auto x = logits.data();

  std::size_t count = 0;
  for (std::int32_t y : labels.values) {
    if (y == ignore_index) continue;
    if (y < 0 || y >= classes) {
      throw std::invalid_argument("pixel_cross_entropy: label " + std::to_string(y) +
                                  " outside [0, " + std::to_string(classes) + ")");
    }
    ++count;
  }
  if (count == 0) throw std::invalid_argument("pixel_cross_entropy: every pixel is ignored");

  // Softmax per pixel, kept for the backward pass.
  std::vector<T> prob(x.size());
  double acc = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t base = static_cast<std::size_t>(n) * classes * plane + p;
      T mx = x[base];
      for (int c = 1; c < classes; ++c) mx = std::max(mx, x[base + c * plane]);
      T z = T(0);
      for (int c = 0; c < classes; ++c) {
        const T e = std::exp(x[base + c * plane] - mx);
        prob[base + c * plane] = e;
        z += e;
      }
      for (int c = 0; c < classes; ++c) prob[base + c * plane] /= z;
      const std::int32_t y = labels.values[n * plane + p];
      if (y == ignore_index) continue;
      acc += static_cast<double>(std::log(z) - (x[base + y * plane] - mx));
    }
  }

  Tape<T>* tape = detail::recording_tape<T>({&logits});
  Tensor<T> out = detail::make_output(Shape{1, 1, 1, 1}, tape);
  out.data_mut()[0] = static_cast<T>(acc / static_cast<double>(count));
  if (tape != nullptr) {
    auto* xn = logits.ptr().get();
    auto* on = out.ptr().get();
    std::vector<std::int32_t> ys = labels.values;
    tape->record("pixel_cross_entropy", {logits.ptr()}, out.ptr(),
                 [=, prob = std::move(prob), ys = std::move(ys)]() {
                   const T g = on->grad[0] / static_cast<T>(count);
                   for (int n = 0; n < s.n; ++n) {
                     for (std::size_t p = 0; p < plane; ++p) {
                       const std::int32_t y = ys[n * plane + p];
                       if (y == ignore_index) continue;
                       const std::size_t base = static_cast<std::size_t>(n) * classes * plane + p;
                       for (int c = 0; c < classes; ++c) {
                         const T target = c == y ? T(1) : T(0);
                         xn->grad[base + c * plane] += g * (prob[base + c * plane] - target);
                       }
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& main, const std::array<std::optional<Tensor<T>>, 3>& aux,
                     const LossSpec& spec) {
  spec.validate();
  if (main.numel() != 1) throw ShapeError("total_loss: main loss must be a scalar");
  std::optional<Tensor<T>> acc;
  for (int i = 0; i < 3; ++i) {
    const double w = spec.stage_weights[i];
    if (w == 0.0 || (i == 0 && spec.drop_loss1)) continue;
    if (!aux[i]) {
      throw std::invalid_argument("total_loss: stage " + std::to_string(i + 1) +
                                  " has weight " + std::to_string(w) + " but no loss");
    }
    if (aux[i]->numel() != 1) throw ShapeError("total_loss: stage losses must be scalars");
    Tensor<T> term = nn::scale(*aux[i], static_cast<T>(w));
    acc = acc ? nn::add(*acc, term) : term;
  }
  Tensor<T> last = nn::scale(main, static_cast<T>(spec.stage_weights[3]));
  return acc ? nn::add(*acc, last) : last;
}

template <typename T>
NetworkLoss<T> network_loss(const msnet::NetOutput<T>& out, const LabelMap& labels,
                            const LossSpec& spec) {
  NetworkLoss<T> result;
  std::array<std::optional<Tensor<T>>, 3> aux;
  for (int i = 0; i < 3; ++i) {
    if (!out.stage_logits[i]) continue;
    const Tensor<T> up = nn::bilinear_upsample(*out.stage_logits[i], labels.h, labels.w);
    aux[i] = pixel_cross_entropy(up, labels, spec.ignore_index);
    result.stages[i] = static_cast<double>(aux[i]->item());
  }
  const Tensor<T> main = pixel_cross_entropy(out.logits, labels, spec.ignore_index);
  result.stages[3] = static_cast<double>(main.item());
  // Stages the network has no map for (no supervised gate, no stage-1 head)
  // drop out; the remaining weights are not renormalized.
  LossSpec present = spec;
  for (int i = 0; i < 3; ++i) {
    if (!aux[i]) present.stage_weights[i] = 0.0;
  }
  result.total = total_loss(main, aux, present);
  return result;
}

#define GSTO_INSTANTIATE(T)                                                                  \
  template Tensor<T> pixel_cross_entropy<T>(const Tensor<T>&, const LabelMap&, std::int32_t); \
  template Tensor<T> total_loss<T>(const Tensor<T>&,                                         \
                                   const std::array<std::optional<Tensor<T>>, 3>&,            \
                                   const LossSpec&);                                          \
  template NetworkLoss<T> network_loss<T>(const msnet::NetOutput<T>&, const LabelMap&,       \
                                          const LossSpec&);

GSTO_INSTANTIATE(float)
GSTO_INSTANTIATE(double)
#undef GSTO_INSTANTIATE

}  // namespace gsto::train
