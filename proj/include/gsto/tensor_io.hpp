#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <variant>

#include "gsto/tensor.hpp"

namespace gsto {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

// GST1 layout: "GST1", u8 dtype, u8 ndim (=4), u32 N, C, H, W, raw payload.
// Every multi-byte field is little-endian.

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t);

/// Reads one tensor of the matching dtype; FormatError on mismatch or truncation.
template <typename T>
Tensor<T> read_tensor(std::istream& is);

/// Reads a tensor of either dtype, converting to T.
template <typename T>
Tensor<T> read_tensor_any(std::istream& is);

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t);
template <typename T>
Tensor<T> load_tensor(const std::string& path);

}  // namespace gsto
