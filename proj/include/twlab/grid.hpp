#pragma once

#include <cstddef>
#include <cstdint>

namespace twlab {

/// Uniform grid with m nodes per unit length. Node k sits at x = k / m for
/// integer k in [first, last], so a unit shift is exactly m nodes.
struct Grid {
  int m = 10;
  std::int64_t first = 0;
  std::int64_t last = 0;

  static Grid symmetric(int m, double half_width);
  static Grid span(int m, double x_lo, double x_hi);

  std::size_t size() const { return static_cast<std::size_t>(last - first + 1); }
  double h() const { return 1.0 / m; }
  double x(std::size_t j) const { return static_cast<double>(first + static_cast<std::int64_t>(j)) / m; }
  double x_lo() const { return static_cast<double>(first) / m; }
  double x_hi() const { return static_cast<double>(last) / m; }

  bool same_geometry(const Grid& o) const { return m == o.m && first == o.first && last == o.last; }
};

}  // namespace twlab
