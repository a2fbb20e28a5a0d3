#include "gsto/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace gsto::nn {

using detail::make_output;
using detail::recording_tape;

namespace {

template <typename T>
using Node = detail::Node<T>;

// Output positions o in [lo, hi) whose input index o*stride + offset lies in [0, in_len).
struct Range {
  int lo;
  int hi;
};

Range valid_range(int out_len, int in_len, int stride, int offset) {
  int lo = 0;
  if (offset < 0) lo = (-offset + stride - 1) / stride;
  const int last = in_len - 1 - offset;
  int hi = last < 0 ? 0 : last / stride + 1;
  hi = std::min(hi, out_len);
  return {lo, std::max(lo, hi)};
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

}  // namespace

int conv_out_extent(int in, int kernel, int stride, int padding, int dilation) {
  return (in + 2 * padding - dilation * (kernel - 1) - 1) / stride + 1;
}

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Conv2dParams<T>& p) {
  const Shape& xs = x.shape();
  const Shape& ws = p.weight.shape();
  require(ws.h == ws.w, "conv2d: kernel must be square");
  require(p.stride >= 1 && p.dilation >= 1 && p.padding >= 0, "conv2d: invalid stride/padding/dilation");
  require(xs.c == ws.c, "conv2d: input has " + std::to_string(xs.c) + " channels, kernel expects " +
                            std::to_string(ws.c));
  const int k = ws.h;
  const int ho = conv_out_extent(xs.h, k, p.stride, p.padding, p.dilation);
  const int wo = conv_out_extent(xs.w, k, p.stride, p.padding, p.dilation);
  require(ho >= 1 && wo >= 1, "conv2d: non-positive output extent for input " + xs.str());
  const bool has_bias = p.bias.defined();
  if (has_bias) require(p.bias.numel() == static_cast<std::size_t>(ws.n), "conv2d: bias length mismatch");

  Tape<T>* tape = recording_tape<T>({&x, &p.weight, has_bias ? &p.bias : nullptr});
  const Shape os{xs.n, ws.n, ho, wo};
  Tensor<T> out = make_output(os, tape);

  const int cin = xs.c;
  const int cout = ws.n;
  const int s = p.stride;
  const int pad = p.padding;
  const int d = p.dilation;
  const std::size_t in_plane = xs.plane();
  const std::size_t out_plane = os.plane();

  // Precomputed valid output ranges per kernel tap.
  std::vector<Range> rows(k);
  std::vector<Range> cols(k);
  for (int t = 0; t < k; ++t) {
    rows[t] = valid_range(ho, xs.h, s, t * d - pad);
    cols[t] = valid_range(wo, xs.w, s, t * d - pad);
  }

  const T* xd = x.data().data();
  const T* wd = p.weight.data().data();
  T* od = out.data_mut().data();
  for (int n = 0; n < xs.n; ++n) {
    for (int co = 0; co < cout; ++co) {
      T* o = od + (static_cast<std::size_t>(n) * cout + co) * out_plane;
      for (int ci = 0; ci < cin; ++ci) {
        const T* in = xd + (static_cast<std::size_t>(n) * cin + ci) * in_plane;
        const T* wk = wd + (static_cast<std::size_t>(co) * cin + ci) * k * k;
        for (int kh = 0; kh < k; ++kh) {
          const Range r = rows[kh];
          for (int kw = 0; kw < k; ++kw) {
            const T wv = wk[kh * k + kw];
            const Range c = cols[kw];
            const int xoff = kw * d - pad;
            for (int oy = r.lo; oy < r.hi; ++oy) {
              const T* irow = in + static_cast<std::size_t>(oy * s + kh * d - pad) * xs.w;
              T* orow = o + static_cast<std::size_t>(oy) * wo;
              if (s == 1) {
                const T* src = irow + xoff;
                for (int ox = c.lo; ox < c.hi; ++ox) orow[ox] += wv * src[ox];
              } else {
                for (int ox = c.lo; ox < c.hi; ++ox) orow[ox] += wv * irow[ox * s + xoff];
              }
            }
          }
        }
      }
      if (has_bias) {
        const T b = p.bias.data()[co];
        for (std::size_t i = 0; i < out_plane; ++i) o[i] += b;
      }
    }
  }

  if (tape != nullptr) {
    Node<T>* xn = x.ptr().get();
    Node<T>* wn = p.weight.ptr().get();
    Node<T>* bn = has_bias ? p.bias.ptr().get() : nullptr;
    Node<T>* on = out.ptr().get();
    std::vector<typename Tape<T>::NodePtr> inputs{x.ptr(), p.weight.ptr()};
    if (has_bias) inputs.push_back(p.bias.ptr());
    tape->record("conv2d", std::move(inputs), out.ptr(),
                 [=]() {
                   const T* g = on->grad.data();
                   const T* xv = xn->data.data();
                   const T* wv = wn->data.data();
                   for (int n = 0; n < xs.n; ++n) {
                     for (int co = 0; co < cout; ++co) {
                       const T* go = g + (static_cast<std::size_t>(n) * cout + co) * out_plane;
                       if (bn != nullptr && bn->requires_grad) {
                         T acc = T(0);
                         for (std::size_t i = 0; i < out_plane; ++i) acc += go[i];
                         bn->grad[co] += acc;
                       }
                       for (int ci = 0; ci < cin; ++ci) {
                         const std::size_t in_off = (static_cast<std::size_t>(n) * cin + ci) * in_plane;
                         const std::size_t w_off = (static_cast<std::size_t>(co) * cin + ci) * k * k;
                         for (int kh = 0; kh < k; ++kh) {
                           const Range r = rows[kh];
                           for (int kw = 0; kw < k; ++kw) {
                             const Range c = cols[kw];
                             const int xoff = kw * d - pad;
                             const T wk = wv[w_off + kh * k + kw];
                             T wacc = T(0);
                             for (int oy = r.lo; oy < r.hi; ++oy) {
                               const std::size_t irow =
                                   in_off + static_cast<std::size_t>(oy * s + kh * d - pad) * xs.w;
                               const T* grow = go + static_cast<std::size_t>(oy) * wo;
                               if (xn->requires_grad) {
                                 T* gx = xn->grad.data() + irow;
                                 for (int ox = c.lo; ox < c.hi; ++ox) gx[ox * s + xoff] += wk * grow[ox];
                               }
                               if (wn->requires_grad) {
                                 const T* xr = xv + irow;
                                 for (int ox = c.lo; ox < c.hi; ++ox) wacc += grow[ox] * xr[ox * s + xoff];
                               }
                             }
                             if (wn->requires_grad) wn->grad[w_off + kh * k + kw] += wacc;
                           }
                         }
                       }
                     }
                   }
                 });
  }
  return out;
}

// ---------------------------------------------------------------------------
// batch_norm

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, NormParams<T>& p) {
  const Shape& xs = x.shape();
  const int channels = xs.c;
  require(p.gamma.numel() == static_cast<std::size_t>(channels) &&
              p.beta.numel() == static_cast<std::size_t>(channels),
          "batch_norm: parameter length does not match " + std::to_string(channels) + " channels");
  require(p.eps >= T(0), "batch_norm: eps must be non-negative");
  const std::size_t plane = xs.plane();
  const std::size_t count = static_cast<std::size_t>(xs.n) * plane;
  const bool train = p.mode == NormMode::train;
  if (train) require(count > 1, "batch_norm: train mode needs more than one value per channel");

  Tape<T>* tape = recording_tape<T>({&x, &p.gamma, &p.beta});
  Tensor<T> out = make_output(xs, tape);
  std::vector<T> xhat(xs.numel());
  std::vector<T> inv_std(channels);

  const T* xd = x.data().data();
  T* od = out.data_mut().data();
  const T* gamma = p.gamma.data().data();
  const T* beta = p.beta.data().data();
  T* rmean = p.running_mean.data_mut().data();
  T* rvar = p.running_var.data_mut().data();

  for (int c = 0; c < channels; ++c) {
    T mean;
    T var;
    if (train) {
      T acc = T(0);
      for (int n = 0; n < xs.n; ++n) {
        const T* src = xd + (static_cast<std::size_t>(n) * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) acc += src[i];
      }
      mean = acc / static_cast<T>(count);
      T sq = T(0);
      for (int n = 0; n < xs.n; ++n) {
        const T* src = xd + (static_cast<std::size_t>(n) * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const T dv = src[i] - mean;
          sq += dv * dv;
        }
      }
      var = sq / static_cast<T>(count);
      const T unbiased = sq / static_cast<T>(count - 1);
      rmean[c] = (T(1) - p.momentum) * rmean[c] + p.momentum * mean;
      rvar[c] = (T(1) - p.momentum) * rvar[c] + p.momentum * unbiased;
    } else {
      mean = rmean[c];
      var = rvar[c];
    }
    const T denom = std::sqrt(var + p.eps);
    if (!(denom > T(0))) throw NumericError("batch_norm: zero variance with eps = 0");
    inv_std[c] = T(1) / denom;
    for (int n = 0; n < xs.n; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const T h = (xd[off + i] - mean) * inv_std[c];
        xhat[off + i] = h;
        od[off + i] = gamma[c] * h + beta[c];
      }
    }
  }

  if (tape != nullptr) {
    Node<T>* xn = x.ptr().get();
    Node<T>* gn = p.gamma.ptr().get();
    Node<T>* bn = p.beta.ptr().get();
    Node<T>* on = out.ptr().get();
    tape->record("batch_norm", {x.ptr(), p.gamma.ptr(), p.beta.ptr()}, out.ptr(),
                 [=, xhat = std::move(xhat), inv_std = std::move(inv_std)]() {
                   const T* g = on->grad.data();
                   const T m = static_cast<T>(count);
                   for (int c = 0; c < channels; ++c) {
                     T sum_g = T(0);
                     T sum_gx = T(0);
                     for (int n = 0; n < xs.n; ++n) {
                       const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
                       for (std::size_t i = 0; i < plane; ++i) {
                         sum_g += g[off + i];
                         sum_gx += g[off + i] * xhat[off + i];
                       }
                     }
                     if (gn->requires_grad) gn->grad[c] += sum_gx;
                     if (bn->requires_grad) bn->grad[c] += sum_g;
                     if (!xn->requires_grad) continue;
                     const T gam = gn->data[c];
                     for (int n = 0; n < xs.n; ++n) {
                       const std::size_t off = (static_cast<std::size_t>(n) * channels + c) * plane;
                       for (std::size_t i = 0; i < plane; ++i) {
                         if (train) {
                           xn->grad[off + i] += gam * inv_std[c] / m *
                                                (m * g[off + i] - sum_g - xhat[off + i] * sum_gx);
                         } else {
                           xn->grad[off + i] += g[off + i] * gam * inv_std[c];
                         }
                       }
                     }
                   }
                 });
  }
  return out;
}

// ---------------------------------------------------------------------------
// element-wise

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tape<T>* tape = recording_tape<T>({&x});
  Tensor<T> out = make_output(x.shape(), tape);
  const auto src = x.data();
  auto dst = out.data_mut();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
  if (tape != nullptr) {
    Node<T>* xn = x.ptr().get();
    Node<T>* on = out.ptr().get();
    tape->record("relu", {x.ptr()}, out.ptr(), [=]() {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        if (xn->data[i] > T(0)) xn->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
T sigmoid_scalar(T x) {
  T y;
  if (x >= T(0)) {
    y = T(1) / (T(1) + std::exp(-x));
  } else {
    const T e = std::exp(x);
    y = e / (T(1) + e);
  }
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  return std::clamp(y, lo, hi);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tape<T>* tape = recording_tape<T>({&x});
  Tensor<T> out = make_output(x.shape(), tape);
  const auto src = x.data();
  auto dst = out.data_mut();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = sigmoid_scalar(src[i]);
  if (tape != nullptr) {
    Node<T>* xn = x.ptr().get();
    Node<T>* on = out.ptr().get();
    tape->record("sigmoid", {x.ptr()}, out.ptr(), [=]() {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const T y = on->data[i];
        xn->grad[i] += on->grad[i] * y * (T(1) - y);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// scale transfer primitives

namespace {

template <typename T>
struct Lerp {
  int i0;
  int i1;
  T w1;  // weight of i1; i0 gets 1 - w1
};

template <typename T>
std::vector<Lerp<T>> lerp_table(int in, int out) {
  std::vector<Lerp<T>> table(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    int i0 = static_cast<int>(src);
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    table[o] = {i0, i1, static_cast<T>(src - i0)};
  }
  return table;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int out_h, int out_w) {
  const Shape& xs = x.shape();
  require(out_h >= xs.h && out_w >= xs.w,
          "bilinear_upsample: target " + std::to_string(out_h) + "x" + std::to_string(out_w) +
              " is smaller than input " + xs.str() + "; use avg_pool_down");
  Tape<T>* tape = recording_tape<T>({&x});
  const Shape os{xs.n, xs.c, out_h, out_w};
  Tensor<T> out = make_output(os, tape);
  auto ty = lerp_table<T>(xs.h, out_h);
  auto tx = lerp_table<T>(xs.w, out_w);
  const T* xd = x.data().data();
  T* od = out.data_mut().data();
  const std::size_t planes = static_cast<std::size_t>(xs.n) * xs.c;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* in = xd + pl * xs.plane();
    T* o = od + pl * os.plane();
    for (int oy = 0; oy < out_h; ++oy) {
      const Lerp<T> ly = ty[oy];
      const T* r0 = in + static_cast<std::size_t>(ly.i0) * xs.w;
      const T* r1 = in + static_cast<std::size_t>(ly.i1) * xs.w;
      for (int ox = 0; ox < out_w; ++ox) {
        const Lerp<T> lx = tx[ox];
        const T top = (T(1) - lx.w1) * r0[lx.i0] + lx.w1 * r0[lx.i1];
        const T bot = (T(1) - lx.w1) * r1[lx.i0] + lx.w1 * r1[lx.i1];
        o[static_cast<std::size_t>(oy) * out_w + ox] = (T(1) - ly.w1) * top + ly.w1 * bot;
      }
    }
  }
  if (tape != nullptr) {
    Node<T>* xn = x.ptr().get();
    Node<T>* on = out.ptr().get();
    tape->record("bilinear_upsample", {x.ptr()}, out.ptr(),
                 [=, ty = std::move(ty), tx = std::move(tx)]() {
                   for (std::size_t pl = 0; pl < planes; ++pl) {
                     T* gi = xn->grad.data() + pl * xs.plane();
                     const T* go = on->grad.data() + pl * os.plane();
                     for (int oy = 0; oy < out_h; ++oy) {
                       const Lerp<T> ly = ty[oy];
                       T* r0 = gi + static_cast<std::size_t>(ly.i0) * xs.w;
                       T* r1 = gi + static_cast<std::size_t>(ly.i1) * xs.w;
                       for (int ox = 0; ox < out_w; ++ox) {
                         const Lerp<T> lx = tx[ox];
                         const T g = go[static_cast<std::size_t>(oy) * out_w + ox];
                         const T gt = (T(1) - ly.w1) * g;
                         const T gb = ly.w1 * g;
                         r0[lx.i0] += (T(1) - lx.w1) * gt;
                         r0[lx.i1] += lx.w1 * gt;
                         r1[lx.i0] += (T(1) - lx.w1) * gb;
                         r1[lx.i1] += lx.w1 * gb;
                       }
                     }
                   }
                 });
  }
  return out;
}

template <typename T>
Tensor<T> avg_pool_down(const Tensor<T>& x, int factor) {
  const Shape& xs = x.shape();
  require(factor >= 1, "avg_pool_down: factor must be positive");
  require(xs.h % factor == 0 && xs.w % factor == 0,
          "avg_pool_down: extents of " + xs.str() + " not divisible by " + std::to_string(factor));
  Tape<T>* tape = recording_tape<T>({&x});
  const Shape os{xs.n, xs.c, xs.h / factor, xs.w / factor};
  Tensor<T> out = make_output(os, tape);
  const T area = static_cast<T>(factor * factor);
  const T* xd = x.data().data();
  T* od = out.data_mut().data();
  const std::size_t planes = static_cast<std::size_t>(xs.n) * xs.c;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* in = xd + pl * xs.plane();
    T* o = od + pl * os.plane();
    for (int oy = 0; oy < os.h; ++oy) {
      for (int ox = 0; ox < os.w; ++ox) {
        T acc = T(0);
        for (int dy = 0; dy < factor; ++dy) {
          const T* row = in + static_cast<std::size_t>(oy * factor + dy) * xs.w + ox * factor;
          for (int dx = 0; dx < factor; ++dx) acc += row[dx];
        }
        o[static_cast<std::size_t>(oy) * os.w + ox] = acc / area;
      }
    }
  }
  if (tape != nullptr) {
    Node<T>* xn = x.ptr().get();
    Node<T>* on = out.ptr().get();
    tape->record("avg_pool_down", {x.ptr()}, out.ptr(), [=]() {
      for (std::size_t pl = 0; pl < planes; ++pl) {
        T* gi = xn->grad.data() + pl * xs.plane();
        const T* go = on->grad.data() + pl * os.plane();
        for (int oy = 0; oy < os.h; ++oy) {
          for (int ox = 0; ox < os.w; ++ox) {
            const T g = go[static_cast<std::size_t>(oy) * os.w + ox] / area;
            for (int dy = 0; dy < factor; ++dy) {
              T* row = gi + static_cast<std::size_t>(oy * factor + dy) * xs.w + ox * factor;
              for (int dx = 0; dx < factor; ++dx) row[dx] += g;
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, int bins_h, int bins_w) {
  const Shape& xs = x.shape();
  require(bins_h >= 1 && bins_w >= 1 && bins_h <= xs.h && bins_w <= xs.w,
          "adaptive_avg_pool: bins " + std::to_string(bins_h) + "x" + std::to_string(bins_w) +
              " exceed input " + xs.str());
  Tape<T>* tape = recording_tape<T>({&x});
  const Shape os{xs.n, xs.c, bins_h, bins_w};
  Tensor<T> out = make_output(os, tape);
  auto edges = [](int len, int bins) {
    std::vector<std::pair<int, int>> e(bins);
    for (int i = 0; i < bins; ++i) {
      e[i] = {(i * len) / bins, ((i + 1) * len + bins - 1) / bins};
    }
    return e;
  };
  auto ey = edges(xs.h, bins_h);
  auto ex = edges(xs.w, bins_w);
  const T* xd = x.data().data();
  T* od = out.data_mut().data();
  const std::size_t planes = static_cast<std::size_t>(xs.n) * xs.c;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const T* in = xd + pl * xs.plane();
    T* o = od + pl * os.plane();
    for (int by = 0; by < bins_h; ++by) {
      for (int bx = 0; bx < bins_w; ++bx) {
        T acc = T(0);
        for (int y = ey[by].first; y < ey[by].second; ++y) {
          for (int xx = ex[bx].first; xx < ex[bx].second; ++xx) acc += in[static_cast<std::size_t>(y) * xs.w + xx];
        }
        const int cnt = (ey[by].second - ey[by].first) * (ex[bx].second - ex[bx].first);
        o[static_cast<std::size_t>(by) * bins_w + bx] = acc / static_cast<T>(cnt);
      }
    }
  }
  if (tape != nullptr) {
    Node<T>* xn = x.ptr().get();
    Node<T>* on = out.ptr().get();
    tape->record("adaptive_avg_pool", {x.ptr()}, out.ptr(), [=, ey = std::move(ey), ex = std::move(ex)]() {
      for (std::size_t pl = 0; pl < planes; ++pl) {
        T* gi = xn->grad.data() + pl * xs.plane();
        const T* go = on->grad.data() + pl * os.plane();
        for (int by = 0; by < bins_h; ++by) {
          for (int bx = 0; bx < bins_w; ++bx) {
            const int cnt = (ey[by].second - ey[by].first) * (ex[bx].second - ex[bx].first);
            const T g = go[static_cast<std::size_t>(by) * bins_w + bx] / static_cast<T>(cnt);
            for (int y = ey[by].first; y < ey[by].second; ++y) {
              for (int xx = ex[bx].first; xx < ex[bx].second; ++xx) gi[static_cast<std::size_t>(y) * xs.w + xx] += g;
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// structural

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
  require(!xs.empty(), "concat_channels: empty input list");
  const Shape& first = xs.front().shape();
  int channels = 0;
  for (const auto& t : xs) {
    const Shape& s = t.shape();
    require(s.n == first.n && s.h == first.h && s.w == first.w,
            "concat_channels: spatial mismatch " + s.str() + " vs " + first.str());
    channels += s.c;
  }
  if (xs.size() == 1) return xs.front();
  Tape<T>* tape = recording_tape<T>(xs);
  const Shape os{first.n, channels, first.h, first.w};
  Tensor<T> out = make_output(os, tape);
  const std::size_t plane = first.plane();
  T* od = out.data_mut().data();
  for (int n = 0; n < first.n; ++n) {
    int c0 = 0;
    for (const auto& t : xs) {
      const std::size_t len = static_cast<std::size_t>(t.shape().c) * plane;
      const T* src = t.data().data() + n * len;
      std::copy(src, src + len, od + (static_cast<std::size_t>(n) * channels + c0) * plane);
      c0 += t.shape().c;
    }
  }
  if (tape != nullptr) {
    std::vector<typename Tape<T>::NodePtr> inputs;
    std::vector<Node<T>*> raw;
    for (const auto& t : xs) {
      inputs.push_back(t.ptr());
      raw.push_back(t.ptr().get());
    }
    Node<T>* on = out.ptr().get();
    tape->record("concat_channels", std::move(inputs), out.ptr(), [=]() {
      for (int n = 0; n < first.n; ++n) {
        int c0 = 0;
        for (Node<T>* in : raw) {
          const std::size_t len = static_cast<std::size_t>(in->shape.c) * plane;
          if (in->requires_grad) {
            const T* g = on->grad.data() + (static_cast<std::size_t>(n) * channels + c0) * plane;
            T* dst = in->grad.data() + n * len;
            for (std::size_t i = 0; i < len; ++i) dst[i] += g[i];
          }
          c0 += in->shape.c;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tape<T>* tape = recording_tape<T>({&a, &b});
  Tensor<T> out = make_output(a.shape(), tape);
  auto dst = out.data_mut();
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = x[i] + y[i];
  if (tape != nullptr) {
    Node<T>* an = a.ptr().get();
    Node<T>* bn = b.ptr().get();
    Node<T>* on = out.ptr().get();
    tape->record("add", {a.ptr(), b.ptr()}, out.ptr(), [=]() {
      for (Node<T>* in : {an, bn}) {
        if (!in->requires_grad) continue;
        for (std::size_t i = 0; i < on->grad.size(); ++i) in->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add_n(const std::vector<Tensor<T>>& xs) {
  require(!xs.empty(), "add_n: empty input list");
  Tensor<T> acc = xs.front();
  for (std::size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
  return acc;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tape<T>* tape = recording_tape<T>({&a, &b});
  Tensor<T> out = make_output(a.shape(), tape);
  auto dst = out.data_mut();
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = x[i] * y[i];
  if (tape != nullptr) {
    Node<T>* an = a.ptr().get();
    Node<T>* bn = b.ptr().get();
    Node<T>* on = out.ptr().get();
    tape->record("mul", {a.ptr(), b.ptr()}, out.ptr(), [=]() {
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const T g = on->grad[i];
        const T av = an->data[i];
        const T bv = bn->data[i];
        if (an->requires_grad) an->grad[i] += g * bv;
        if (bn->requires_grad) bn->grad[i] += g * av;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul_spatial(const Tensor<T>& x, const Tensor<T>& g) {
  const Shape& xs = x.shape();
  const Shape& gs = g.shape();
  require(gs.c == 1 && gs.n == xs.n && gs.h == xs.h && gs.w == xs.w,
          "mul_spatial: gate " + gs.str() + " does not match feature " + xs.str());
  Tape<T>* tape = recording_tape<T>({&x, &g});
  Tensor<T> out = make_output(xs, tape);
  const std::size_t plane = xs.plane();
  const T* xd = x.data().data();
  const T* gd = g.data().data();
  T* od = out.data_mut().data();
  for (int n = 0; n < xs.n; ++n) {
    const T* gp = gd + n * plane;
    for (int c = 0; c < xs.c; ++c) {
      const std::size_t off = (static_cast<std::size_t>(n) * xs.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) od[off + i] = gp[i] * xd[off + i];
    }
  }
  if (tape != nullptr) {
    Node<T>* xn = x.ptr().get();
    Node<T>* gn = g.ptr().get();
    Node<T>* on = out.ptr().get();
    tape->record("mul_spatial", {x.ptr(), g.ptr()}, out.ptr(), [=]() {
      for (int n = 0; n < xs.n; ++n) {
        for (int c = 0; c < xs.c; ++c) {
          const std::size_t off = (static_cast<std::size_t>(n) * xs.c + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            const T go = on->grad[off + i];
            if (xn->requires_grad) xn->grad[off + i] += go * gn->data[n * plane + i];
            if (gn->requires_grad) gn->grad[n * plane + i] += go * xn->data[off + i];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tape<T>* tape = recording_tape<T>({&x});
  Tensor<T> out = make_output(x.shape(), tape);
  auto dst = out.data_mut();
  const auto src = x.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i] * factor;
  if (tape != nullptr) {
    Node<T>* xn = x.ptr().get();
    Node<T>* on = out.ptr().get();
    tape->record("scale", {x.ptr()}, out.ptr(), [=]() {
      for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i] * factor;
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Tape<T>* tape = recording_tape<T>({&x});
  Tensor<T> out = make_output(Shape{1, 1, 1, 1}, tape);
  T acc = T(0);
  for (T v : x.data()) acc += v;
  out.data_mut()[0] = acc;
  if (tape != nullptr) {
    Node<T>* xn = x.ptr().get();
    Node<T>* on = out.ptr().get();
    tape->record("sum", {x.ptr()}, out.ptr(), [=]() {
      const T g = on->grad[0];
      for (T& gi : xn->grad) gi += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const Tensor<T>& weights) {
  require(x.shape() == weights.shape(), "weighted_sum: shape mismatch");
  Tape<T>* tape = recording_tape<T>({&x});
  Tensor<T> out = make_output(Shape{1, 1, 1, 1}, tape);
  T acc = T(0);
  const auto xv = x.data();
  const auto wv = weights.data();
  for (std::size_t i = 0; i < xv.size(); ++i) acc += xv[i] * wv[i];
  out.data_mut()[0] = acc;
  if (tape != nullptr) {
    Node<T>* xn = x.ptr().get();
    Node<T>* on = out.ptr().get();
    std::vector<T> w(wv.begin(), wv.end());
    tape->record("weighted_sum", {x.ptr()}, out.ptr(), [=, w = std::move(w)]() {
      const T g = on->grad[0];
      for (std::size_t i = 0; i < w.size(); ++i) xn->grad[i] += g * w[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> channel_mean(const Tensor<T>& x) {
  const Shape& xs = x.shape();
  Tensor<T> out = Tensor<T>::zeros(Shape{xs.n, 1, xs.h, xs.w});
  const std::size_t plane = xs.plane();
  auto dst = out.data_mut();
  const auto src = x.data();
  for (int n = 0; n < xs.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      T acc = T(0);
      for (int c = 0; c < xs.c; ++c) acc += src[(static_cast<std::size_t>(n) * xs.c + c) * plane + i];
      dst[n * plane + i] = acc / static_cast<T>(xs.c);
    }
  }
  return out;
}

template <typename T>
std::vector<std::int32_t> argmax_channels(const Tensor<T>& x) {
  const Shape& xs = x.shape();
  const std::size_t plane = xs.plane();
  std::vector<std::int32_t> out(static_cast<std::size_t>(xs.n) * plane, 0);
  const auto src = x.data();
  for (int n = 0; n < xs.n; ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      int best = 0;
      T best_v = src[static_cast<std::size_t>(n) * xs.c * plane + i];
      for (int c = 1; c < xs.c; ++c) {
        const T v = src[(static_cast<std::size_t>(n) * xs.c + c) * plane + i];
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      out[n * plane + i] = best;
    }
  }
  return out;
}

template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& x) {
  const Shape& xs = x.shape();
  Tensor<T> out = Tensor<T>::zeros(xs);
  auto dst = out.data_mut();
  const auto src = x.data();
  const std::size_t rows = static_cast<std::size_t>(xs.n) * xs.c * xs.h;
  for (std::size_t r = 0; r < rows; ++r) {
    for (int c = 0; c < xs.w; ++c) dst[r * xs.w + c] = src[r * xs.w + (xs.w - 1 - c)];
  }
  return out;
}

#define GSTO_INSTANTIATE(T)                                                        \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Conv2dParams<T>&);          \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, NormParams<T>&);              \
  template Tensor<T> relu<T>(const Tensor<T>&);                                    \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                 \
  template T sigmoid_scalar<T>(T);                                                 \
  template Tensor<T> bilinear_upsample<T>(const Tensor<T>&, int, int);             \
  template Tensor<T> avg_pool_down<T>(const Tensor<T>&, int);                      \
  template Tensor<T> adaptive_avg_pool<T>(const Tensor<T>&, int, int);             \
  template Tensor<T> concat_channels<T>(const std::vector<Tensor<T>>&);            \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> add_n<T>(const std::vector<Tensor<T>>&);                      \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> mul_spatial<T>(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                \
  template Tensor<T> sum<T>(const Tensor<T>&);                                     \
  template Tensor<T> weighted_sum<T>(const Tensor<T>&, const Tensor<T>&);          \
  template Tensor<T> channel_mean<T>(const Tensor<T>&);                            \
  template std::vector<std::int32_t> argmax_channels<T>(const Tensor<T>&);         \
  template Tensor<T> flip_horizontal<T>(const Tensor<T>&);

GSTO_INSTANTIATE(float)
GSTO_INSTANTIATE(double)
#undef GSTO_INSTANTIATE

}  // namespace gsto::nn
