#include "twlab/grid.hpp"

#include <cmath>
#include <string>

#include "twlab/error.hpp"

namespace twlab {

namespace {

std::int64_t node_of(int m, double x) {
  const double k = x * m;
  const double r = std::round(k);
  if (std::abs(k - r) > 1e-9 * std::max(1.0, std::abs(k)))
    fail(ErrorCode::Domain, "grid endpoint " + std::to_string(x) + " is not a multiple of 1/" +
                                std::to_string(m));
  return static_cast<std::int64_t>(r);
}

}  // namespace

Grid Grid::symmetric(int m, double half_width) {
  if (m < 1) fail(ErrorCode::Domain, "grid needs m >= 1");
  if (!(half_width > 0)) fail(ErrorCode::Domain, "grid half width must be positive");
  const auto k = node_of(m, half_width);
  return Grid{m, -k, k};
}

Grid Grid::span(int m, double x_lo, double x_hi) {
  if (m < 1) fail(ErrorCode::Domain, "grid needs m >= 1");
  Grid g{m, node_of(m, x_lo), node_of(m, x_hi)};
  if (g.last <= g.first) fail(ErrorCode::Domain, "grid span is empty");
  return g;
}

}  // namespace twlab
