#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gsto/tensor.hpp"

namespace gsto::cli {

struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
  bool constant = false;             // min == max; see to_heatmap
};

enum class MapKind { feature, gate };

/// Maps image 0 of x to bytes. Features are averaged over channels, gates used
/// as is; both are min-max normalized to [0, 255]. A constant map has no range:
/// features then become all zeros and gates round(255 * g), with `constant` set.
template <typename T>
Heatmap to_heatmap(const Tensor<T>& x, MapKind kind);

/// Binary PGM: "P5\n<w> <h>\n255\n" followed by w*h bytes.
void write_pgm(std::ostream& os, const Heatmap& map);
void write_pgm(const std::string& path, const Heatmap& map);
Heatmap read_pgm(std::istream& is);

}  // namespace gsto::cli
