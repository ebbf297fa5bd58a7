#include "choquard/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace choquard {

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  const std::size_t n = std::min(x.size(), y.size());
  f.count = static_cast<int>(n);
  if (n < 2) {
    f.slope = f.intercept = f.r2 = std::numeric_limits<double>::quiet_NaN();
    return f;
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < std::min(x.size(), y.size()); ++i)
    if (x[i] > 0 && y[i] > 0) {
      lx.push_back(std::log(x[i]));
      ly.push_back(std::log(y[i]));
    }
  return linear_fit(lx, ly);
}

LinearFit boundary_exponent(const Field& u, const BoundaryWindow& w) {
  const Eigen::VectorXd d = u.grid->boundary_distance();
  std::vector<double> x, y;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d[i] >= w.lo && d[i] <= w.hi) {
      x.push_back(d[i]);
      y.push_back(u.values[i]);
    }
  return loglog_fit(x, y);
}

double ratio_spread(const Field& u, const Field& reference, const BoundaryWindow& w) {
  const Eigen::VectorXd d = u.grid->boundary_distance();
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d[i] >= w.lo && d[i] <= w.hi && reference.values[i] > 0) {
      const double q = u.values[i] / reference.values[i];
      lo = std::min(lo, q);
      hi = std::max(hi, q);
    }
  if (!(hi > 0)) return std::numeric_limits<double>::quiet_NaN();
  return hi / lo - 1.0;
}

}  // namespace choquard
