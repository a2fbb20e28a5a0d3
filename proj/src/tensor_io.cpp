#include "gsto/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace gsto {
namespace {

static_assert(std::endian::native == std::endian::little,
              "GST1 payloads are written with native little-endian layout");

constexpr std::array<char, 4> kMagic{'G', 'S', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff),
                              static_cast<char>((v >> 24) & 0xff)};
  os.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& is) {
  std::array<unsigned char, 4> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), 4)) throw FormatError("truncated GST1 header");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
         (std::uint32_t(b[3]) << 24);
}

struct Header {
  DType dtype;
  Shape shape;
};

Header read_header(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4)) throw FormatError("truncated GST1 header");
  if (magic != kMagic) throw FormatError("bad magic, expected GST1");
  char code = 0;
  char ndim = 0;
  if (!is.get(code) || !is.get(ndim)) throw FormatError("truncated GST1 header");
  if (code != 0 && code != 1) throw FormatError("unknown dtype code " + std::to_string(int(code)));
  if (ndim != 4) throw FormatError("ndim must be 4, got " + std::to_string(int(ndim)));
  Header h{static_cast<DType>(code), {}};
  std::array<std::uint32_t, 4> ext{};
  for (auto& e : ext) {
    e = get_u32(is);
    if (e == 0 || e > 0x7fffffffu) throw FormatError("invalid extent " + std::to_string(e));
  }
  h.shape = Shape{int(ext[0]), int(ext[1]), int(ext[2]), int(ext[3])};
  return h;
}

template <typename S>
std::vector<S> read_payload(std::istream& is, std::size_t count) {
  std::vector<S> v(count);
  const auto bytes = static_cast<std::streamsize>(count * sizeof(S));
  if (!is.read(reinterpret_cast<char*>(v.data()), bytes)) throw FormatError("truncated payload");
  return v;
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  const Shape& s = t.shape();
  os.write(kMagic.data(), 4);
  os.put(static_cast<char>(dtype_of<T>()));
  os.put(static_cast<char>(4));
  put_u32(os, static_cast<std::uint32_t>(s.n));
  put_u32(os, static_cast<std::uint32_t>(s.c));
  put_u32(os, static_cast<std::uint32_t>(s.h));
  put_u32(os, static_cast<std::uint32_t>(s.w));
  os.write(reinterpret_cast<const char*>(t.data().data()),
           static_cast<std::streamsize>(t.numel() * sizeof(T)));
  if (!os) throw FormatError("write failed");
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  const Header h = read_header(is);
  if (h.dtype != dtype_of<T>()) throw FormatError("dtype mismatch in GST1 tensor");
  return Tensor<T>::from(h.shape, read_payload<T>(is, h.shape.numel()));
}

template <typename T>
Tensor<T> read_tensor_any(std::istream& is) {
  const Header h = read_header(is);
  if (h.dtype == dtype_of<T>()) return Tensor<T>::from(h.shape, read_payload<T>(is, h.shape.numel()));
  std::vector<T> out(h.shape.numel());
  if (h.dtype == DType::f32) {
    auto raw = read_payload<float>(is, out.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(raw[i]);
  } else {
    auto raw = read_payload<double>(is, out.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(raw[i]);
  }
  return Tensor<T>::from(h.shape, std::move(out));
}

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  write_tensor(os, t);
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return read_tensor_any<T>(is);
}

#define GSTO_INSTANTIATE(T)                                        \
  template void write_tensor<T>(std::ostream&, const Tensor<T>&);  \
  template Tensor<T> read_tensor<T>(std::istream&);                \
  template Tensor<T> read_tensor_any<T>(std::istream&);            \
  template void save_tensor<T>(const std::string&, const Tensor<T>&); \
  template Tensor<T> load_tensor<T>(const std::string&);

GSTO_INSTANTIATE(float)
GSTO_INSTANTIATE(double)
#undef GSTO_INSTANTIATE

}  // namespace gsto
