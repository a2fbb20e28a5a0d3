#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gsto {

/// Integer class map, (N, H, W) row-major.
struct LabelMap {
  int n = 0;
  int h = 0;
  int w = 0;
  std::vector<std::int32_t> values;

  LabelMap() = default;
  LabelMap(int n_, int h_, int w_, std::int32_t fill = 0)
      : n(n_), h(h_), w(w_), values(static_cast<std::size_t>(n_) * h_ * w_, fill) {}

  std::size_t size() const { return values.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::int32_t& at(int b, int y, int x) { return values[(b * plane()) + y * w + x]; }
  std::int32_t at(int b, int y, int x) const { return values[(b * plane()) + y * w + x]; }
  bool same_shape(const LabelMap& o) const { return n == o.n && h == o.h && w == o.w; }
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(h) + "," + std::to_string(w) + ")";
  }

  bool operator==(const LabelMap&) const = default;
};

}  // namespace gsto
