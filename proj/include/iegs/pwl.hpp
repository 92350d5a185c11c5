#pragma once

#include <string>
#include <vector>

namespace iegs::pwl {

// Incremental (delta-method) piecewise linearization of f(g) = g|g| over
// [-limit, +limit] with uniform breakpoints. The segment count is even so 0
// is always a breakpoint, keeping each segment on one sign half of f.
struct PwlScheme {
  double limit = 0.0;
  int segments = 0;
  std::vector<double> breakpoints; // size segments+1, strictly increasing
  std::vector<double> slopes;      // size segments, secant slopes
  std::vector<double> widths;      // size segments

  double value_at(double g) const; // the PWL interpolant f_hat(g)
};

PwlScheme build_scheme(double limit, int segments);

struct ErrorBound {
  double max_flow_error = 0.0;     // max |f(g) - f_hat(g)| over the range
  double max_pressure_error = 0.0; // divided by the Weymouth constant
};

/// Worst-case secant deviation, maximized over segments. Zero at breakpoints.
ErrorBound error_bound(const PwlScheme& scheme, double weymouth);

/// Per-segment report row used by the `pwl-report` CLI output.
struct SegmentInfo {
  int segment = 0; // 1-based
  double left = 0.0;
  double right = 0.0;
  double slope = 0.0;
  double max_error = 0.0;
};
std::vector<SegmentInfo> segment_table(const PwlScheme& scheme);

} // namespace iegs::pwl
