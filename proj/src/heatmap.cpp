#include "gsto/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "gsto/ops.hpp"
#include "gsto/tensor_io.hpp"

namespace gsto::cli {

template <typename T>
Heatmap to_heatmap(const Tensor<T>& x, MapKind kind) {
  const Shape& s = x.shape();
  if (kind == MapKind::gate && s.c != 1) throw ShapeError("gate heatmap needs one channel, got " + s.str());
  const Tensor<T> m = kind == MapKind::feature ? nn::channel_mean(x) : x;
  const std::size_t plane = s.plane();
  const auto v = m.data().subspan(0, plane);

  Heatmap out{s.w, s.h, std::vector<std::uint8_t>(plane, 0), false};
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = static_cast<double>(*lo_it);
  const double hi = static_cast<double>(*hi_it);
  if (!(hi > lo)) {
    out.constant = true;
    if (kind == MapKind::gate) {
      const double g = std::clamp(lo, 0.0, 1.0);
      std::fill(out.pixels.begin(), out.pixels.end(), static_cast<std::uint8_t>(std::lround(255.0 * g)));
    }
    return out;
  }
  for (std::size_t i = 0; i < plane; ++i) {
    const double t = (static_cast<double>(v[i]) - lo) / (hi - lo);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * t));
  }
  return out;
}

void write_pgm(std::ostream& os, const Heatmap& map) {
  os << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(map.pixels.data()),
           static_cast<std::streamsize>(map.pixels.size()));
  if (!os) throw FormatError("pgm: write failed");
}

void write_pgm(const std::string& path, const Heatmap& map) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("pgm: cannot open '" + path + "'");
  write_pgm(os, map);
}

Heatmap read_pgm(std::istream& is) {
  std::string magic;
  int w = 0;
  int h = 0;
  int maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (!is || magic != "P5" || w <= 0 || h <= 0 || maxval != 255) throw FormatError("pgm: bad header");
  is.get();
  Heatmap out{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h), false};
  is.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(out.pixels.size()));
  if (is.gcount() != static_cast<std::streamsize>(out.pixels.size())) throw FormatError("pgm: truncated");
  return out;
}

template Heatmap to_heatmap<float>(const Tensor<float>&, MapKind);
template Heatmap to_heatmap<double>(const Tensor<double>&, MapKind);

}  // namespace gsto::cli
