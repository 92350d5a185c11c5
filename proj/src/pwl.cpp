#include "iegs/pwl.hpp"

#include <cmath>

#include "iegs/errors.hpp"

namespace iegs::pwl {

namespace {
double signed_square(double g) { return g * std::abs(g); }
}

double PwlScheme::value_at(double g) const {
  double v = signed_square(breakpoints.front());
  double rem = g - breakpoints.front();
  for (int k = 0; k < segments; ++k) {
    const double fill = std::min(std::max(rem, 0.0), widths[static_cast<std::size_t>(k)]);
    v += slopes[static_cast<std::size_t>(k)] * fill;
    rem -= fill;
  }
  return v;
}

PwlScheme build_scheme(double limit, int segments) {
  if (!(limit > 0)) throw DimensionError("pwl: flow limit must be > 0");
  if (segments < 2 || segments % 2 != 0)
    throw DimensionError("pwl: segment count must be an even number >= 2");

  PwlScheme s;
  s.limit = limit;
  s.segments = segments;
  const double width = 2.0 * limit / segments;
  for (int k = 0; k <= segments; ++k) s.breakpoints.push_back(-limit + width * k);
  // Snap the midpoint exactly to zero; segments is even.
  s.breakpoints[static_cast<std::size_t>(segments / 2)] = 0.0;
  for (int k = 0; k < segments; ++k) {
    const double a = s.breakpoints[static_cast<std::size_t>(k)];
    const double b = s.breakpoints[static_cast<std::size_t>(k) + 1];
    s.widths.push_back(b - a);
    s.slopes.push_back((signed_square(b) - signed_square(a)) / (b - a));
  }
  return s;
}

ErrorBound error_bound(const PwlScheme& scheme, double weymouth) {
  // On a segment [a,b] on one sign half of g|g| the secant deviation of the
  // quadratic is (b-a)^2/4, attained at the midpoint.
  double worst = 0.0;
  for (double w : scheme.widths) worst = std::max(worst, w * w / 4.0);
  ErrorBound eb;
  eb.max_flow_error = worst;
  eb.max_pressure_error = weymouth > 0 ? worst / weymouth : 0.0;
  return eb;
}

std::vector<SegmentInfo> segment_table(const PwlScheme& scheme) {
  std::vector<SegmentInfo> rows;
  for (int k = 0; k < scheme.segments; ++k) {
    SegmentInfo row;
    row.segment = k + 1;
    row.left = scheme.breakpoints[static_cast<std::size_t>(k)];
    row.right = scheme.breakpoints[static_cast<std::size_t>(k) + 1];
    row.slope = scheme.slopes[static_cast<std::size_t>(k)];
    const double w = scheme.widths[static_cast<std::size_t>(k)];
    row.max_error = w * w / 4.0;
    rows.push_back(row);
  }
  return rows;
}

} // namespace iegs::pwl
