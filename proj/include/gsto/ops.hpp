#pragma once

#include <cstdint>
#include <vector>

#include "gsto/tensor.hpp"

namespace gsto::nn {

enum class NormMode { train, eval };

/// 2-D cross-correlation parameters. weight is (C_out, C_in, k, k); bias is
/// (1, C_out, 1, 1) or undefined for bias-free convolutions.
template <typename T>
struct Conv2dParams {
  Tensor<T> weight;
  Tensor<T> bias;
  int stride = 1;
  int padding = 0;
  int dilation = 1;

  int out_channels() const { return weight.shape().n; }
  int in_channels() const { return weight.shape().c; }
  int kernel() const { return weight.shape().h; }
};

/// Per-channel batch normalization. gamma/beta/running stats are (1, C, 1, 1).
template <typename T>
struct NormParams {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);
  NormMode mode = NormMode::train;

  int channels() const { return gamma.shape().c; }
};

/// Output extent of a convolution along one axis; may be <= 0 for invalid geometry.
int conv_out_extent(int in, int kernel, int stride, int padding, int dilation);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Conv2dParams<T>& p);

/// Train mode normalizes with batch statistics over (N, H, W) and updates the
/// running statistics (unbiased variance); eval mode uses the running statistics.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, NormParams<T>& p);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// Logistic function, evaluated in overflow-free branch form and kept strictly
/// inside (0, 1) for every finite input.
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

/// Scalar logistic function used by sigmoid().
template <typename T>
T sigmoid_scalar(T x);

/// Bilinear interpolation with half-pixel centers (align_corners = false).
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int out_h, int out_w);

/// Non-overlapping factor x factor mean pooling.
template <typename T>
Tensor<T> avg_pool_down(const Tensor<T>& x, int factor);

/// Bin (i, j) averages rows [floor(i*H/bh), ceil((i+1)*H/bh)) and the same for columns.
template <typename T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, int bins_h, int bins_w);

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Left-to-right element-wise sum.
template <typename T>
Tensor<T> add_n(const std::vector<Tensor<T>>& xs);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

/// out[n,c,h,w] = x[n,c,h,w] * g[n,0,h,w].
template <typename T>
Tensor<T> mul_spatial(const Tensor<T>& x, const Tensor<T>& g);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

/// Sum of all elements as a (1,1,1,1) tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

/// Sum of x * weights for a fixed (non-differentiated) weight tensor.
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const Tensor<T>& weights);

// Non-differentiable helpers.

/// Mean over channels, shape (N, 1, H, W).
template <typename T>
Tensor<T> channel_mean(const Tensor<T>& x);

/// Per-pixel argmax over channels; ties resolve to the lowest index.
template <typename T>
std::vector<std::int32_t> argmax_channels(const Tensor<T>& x);

/// Mirrors along the width axis.
template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& x);

}  // namespace gsto::nn
