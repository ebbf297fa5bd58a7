#pragma once

#include "choquard/radial_grid.hpp"

#include <vector>

namespace choquard {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  int count = 0;
};

/// Ordinary least squares y = slope * x + intercept.
LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

/// Fit of log y against log x; non-positive entries are skipped.
LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

struct BoundaryWindow {
  double lo = 1e-5;
  double hi = 1e-3;
};

/// Slope of log u against log(1 - r) over nodes whose distance to the
/// boundary lies in the window. count < 3 means the grid does not resolve it.
LinearFit boundary_exponent(const Field& u, const BoundaryWindow& w = {});

/// Spread max/min - 1 of u / reference over nodes in the boundary window.
double ratio_spread(const Field& u, const Field& reference, const BoundaryWindow& w = {});

}  // namespace choquard
