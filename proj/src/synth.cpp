#include "gsto/synth.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "gsto/rng.hpp"

namespace gsto::train {

SynthSpec::Range SynthSpec::side_range(int cls) const {
  const int s = std::min(height, width);
  switch (cls) {
    case 1:
      return {s / 2, 3 * s / 4};
    case 2:
      return {std::max(1, s / 8), std::max(1, s / 4)};
    case 3:
      return {2, 6};
    default:
      throw std::invalid_argument("side_range: class " + std::to_string(cls) + " has no size");
  }
}

void SynthSpec::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("SynthSpec: " + why); };
  if (height < 16 || width < 16) fail("canvas must be at least 16x16");
  for (const Range& r : counts) {
    if (r.lo < 0 || r.hi < r.lo) fail("object counts need 0 <= lo <= hi");
  }
  if (!(disk_prob >= 0.0 && disk_prob <= 1.0)) fail("disk_prob must lie in [0, 1]");
  if (!(noise >= 0.0)) fail("noise must be non-negative");
  if (!(color_jitter >= 0.0)) fail("color_jitter must be non-negative");
  if (n_train < 0 || n_val < 0) fail("split sizes must be non-negative");
}

const std::array<std::array<double, 3>, SynthSpec::kClasses>& class_colors() {
  static const std::array<std::array<double, 3>, SynthSpec::kClasses> colors{{
      {0.20, 0.20, 0.20},
      {0.80, 0.35, 0.30},
      {0.30, 0.75, 0.35},
      {0.30, 0.40, 0.85},
  }};
  return colors;
}

template <typename T>
Sample<T> synth_generate(const SynthSpec& spec, std::uint64_t index) {
  spec.validate();
  const int h = spec.height;
  const int w = spec.width;
  SplitMix64 rng = SplitMix64::stream(spec.seed, "synth.scene", index);

  LabelMap labels(1, h, w, 0);
  std::vector<std::array<double, 3>> color(static_cast<std::size_t>(h) * w, class_colors()[0]);

  for (int cls = 1; cls < SynthSpec::kClasses; ++cls) {
    const SynthSpec::Range cr = spec.counts[cls - 1];
    const int count = rng.uniform_int(cr.lo, cr.hi);
    const SynthSpec::Range sr = spec.side_range(cls);
    for (int k = 0; k < count; ++k) {
      const int sh = std::min(h, rng.uniform_int(sr.lo, sr.hi));
      const int sw = std::min(w, rng.uniform_int(sr.lo, sr.hi));
      const int y0 = rng.uniform_int(0, h - sh);
      const int x0 = rng.uniform_int(0, w - sw);
      const bool disk = rng.uniform() < spec.disk_prob;
      std::array<double, 3> c = class_colors()[cls];
      for (double& v : c) v += spec.color_jitter * (2.0 * rng.uniform() - 1.0);
      const double cy = y0 + sh / 2.0;
      const double cx = x0 + sw / 2.0;
      for (int y = y0; y < y0 + sh; ++y) {
        for (int x = x0; x < x0 + sw; ++x) {
          if (disk) {
            const double dy = (y + 0.5 - cy) / (sh / 2.0);
            const double dx = (x + 0.5 - cx) / (sw / 2.0);
            if (dy * dy + dx * dx > 1.0) continue;
          }
          labels.at(0, y, x) = cls;
          color[y * w + x] = c;
        }
      }
    }
  }

  Tensor<T> image = Tensor<T>::zeros(Shape{1, 3, h, w});
  auto px = image.data_mut();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ch = 0; ch < 3; ++ch) {
    for (std::size_t p = 0; p < plane; ++p) {
      px[ch * plane + p] = static_cast<T>(color[p][ch] + spec.noise * rng.normal());
    }
  }
  return {std::move(image), std::move(labels)};
}

template <typename T>
Sample<T> make_batch(const std::vector<Sample<T>>& samples, const std::vector<bool>& flip) {
  if (samples.empty()) throw std::invalid_argument("make_batch: no samples");
  if (!flip.empty() && flip.size() != samples.size()) {
    throw std::invalid_argument("make_batch: one flip flag per sample");
  }
  const Shape s0 = samples.front().image.shape();
  const int n = static_cast<int>(samples.size());
  Sample<T> out{Tensor<T>::zeros(Shape{n, s0.c, s0.h, s0.w}), LabelMap(n, s0.h, s0.w)};
  auto dst = out.image.data_mut();
  const std::size_t img = static_cast<std::size_t>(s0.c) * s0.plane();
  for (int b = 0; b < n; ++b) {
    const Sample<T>& s = samples[b];
    if (s.image.shape() != s0 || s.labels.h != s0.h || s.labels.w != s0.w || s.labels.n != 1) {
      throw ShapeError("make_batch: sample " + std::to_string(b) + " has a different shape");
    }
    const bool mirror = !flip.empty() && flip[b];
    const auto src = s.image.data();
    for (int c = 0; c < s0.c; ++c) {
      for (int y = 0; y < s0.h; ++y) {
        for (int x = 0; x < s0.w; ++x) {
          const int sx = mirror ? s0.w - 1 - x : x;
          dst[b * img + (c * s0.h + y) * s0.w + x] = src[(c * s0.h + y) * s0.w + sx];
          if (c == 0) out.labels.at(b, y, x) = s.labels.at(0, y, sx);
        }
      }
    }
  }
  return out;
}

template Sample<float> synth_generate<float>(const SynthSpec&, std::uint64_t);
template Sample<double> synth_generate<double>(const SynthSpec&, std::uint64_t);
template Sample<float> make_batch<float>(const std::vector<Sample<float>>&, const std::vector<bool>&);
template Sample<double> make_batch<double>(const std::vector<Sample<double>>&,
                                           const std::vector<bool>&);

}  // namespace gsto::train
