#include "choquard/radial_grid.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <numbers>

namespace choquard {

double sphere_area(int n) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * n) / std::tgamma(0.5 * n);
}

double ball_volume(int n) { return sphere_area(n) / n; }

Eigen::VectorXd graded_radii(int m, double grading) {
  if (m < 1) throw ConfigError("need at least one node");
  if (!(grading >= 1.0) || !std::isfinite(grading)) throw ConfigError("grading must be >= 1");
  Eigen::VectorXd r(m);
  for (int i = 0; i < m; ++i) r[i] = 1.0 - std::pow(1.0 - double(i + 1) / (m + 1), grading);
  return r;
}

RadialGrid::RadialGrid(int n, int m, double grading) : n_(n), m_(m), g_(grading) {
  if (n < 3) throw ConfigError("dimension n must be at least 3");
  if (m < 16) throw ConfigError("grid needs at least 16 interior nodes");
  if (!(grading >= 1.0) || !std::isfinite(grading)) throw ConfigError("grading must be >= 1");

  const double area = sphere_area(n);
  r_ = graded_radii(m, grading);

  f_.resize(m + 1);
  f_[0] = 0.0;
  for (int i = 1; i < m; ++i) f_[i] = 0.5 * (r_[i - 1] + r_[i]);
  f_[m] = 0.5 * (r_[m - 1] + 1.0);

  cv_.resize(m);
  for (int i = 0; i < m; ++i) cv_[i] = area * (std::pow(f_[i + 1], n) - std::pow(f_[i], n)) / n;
  pv_ = cv_;
  pv_[m - 1] = area * (1.0 - std::pow(f_[m - 1], n)) / n;

  c_.resize(m);
  for (int i = 0; i < m; ++i) {
    const double right = (i + 1 < m) ? r_[i + 1] : 1.0;
    c_[i] = area * std::pow(f_[i + 1], n - 1) / (right - r_[i]);
  }

  // Quadratic Lagrange interpolation through three neighbouring nodes on
  // each interval of {0, r_1, ..., r_m, 1}; interior intervals average the
  // two available stencils.
  qw_ = Eigen::VectorXd::Zero(m);
  auto add_stencil = [&](int j0, double a, double b, double scale) {
    const double x0 = r_[j0], x1 = r_[j0 + 1], x2 = r_[j0 + 2];
    auto moment = [&](auto&& poly) {
      return boost::math::quadrature::gauss<double, 10>::integrate(
          [&](double t) { return poly(t) * std::pow(t, n - 1); }, a, b);
    };
    qw_[j0] += scale * area * moment([&](double t) { return (t - x1) * (t - x2) / ((x0 - x1) * (x0 - x2)); });
    qw_[j0 + 1] += scale * area * moment([&](double t) { return (t - x0) * (t - x2) / ((x1 - x0) * (x1 - x2)); });
    qw_[j0 + 2] += scale * area * moment([&](double t) { return (t - x0) * (t - x1) / ((x2 - x0) * (x2 - x1)); });
  };
  add_stencil(0, 0.0, r_[0], 1.0);
  for (int k = 1; k < m; ++k) {
    const double a = r_[k - 1], b = r_[k];
    const bool left = k - 2 >= 0, right = k + 1 <= m - 1;
    if (left && right) {
      add_stencil(k - 2, a, b, 0.5);
      add_stencil(k - 1, a, b, 0.5);
    } else if (left) {
      add_stencil(k - 2, a, b, 1.0);
    } else {
      add_stencil(k - 1, a, b, 1.0);
    }
  }
  add_stencil(m - 3, r_[m - 1], 1.0, 1.0);
}

Eigen::VectorXd RadialGrid::boundary_distance() const {
  return (1.0 - r_.array()).matrix();
}

Eigen::VectorXd RadialGrid::stiffness_apply(const Eigen::VectorXd& u) const {
  if (u.size() != m_) throw ConfigError("field size does not match grid");
  Eigen::VectorXd out(m_);
  for (int i = 0; i < m_; ++i) {
    const double right = (i + 1 < m_) ? u[i + 1] : 0.0;
    double v = c_[i] * (u[i] - right);
    if (i > 0) v += c_[i - 1] * (u[i] - u[i - 1]);
    out[i] = v;
  }
  return out;
}

Eigen::VectorXd RadialGrid::laplacian_apply(const Eigen::VectorXd& u) const {
  return (stiffness_apply(u).array() / cv_.array()).matrix();
}

double RadialGrid::dirichlet_form(const Eigen::VectorXd& u) const { return dirichlet_form(u, u); }

double RadialGrid::dirichlet_form(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const {
  if (u.size() != m_ || v.size() != m_) throw ConfigError("field size does not match grid");
  double s = 0.0;
  for (int i = 0; i < m_; ++i) {
    const double du = u[i] - ((i + 1 < m_) ? u[i + 1] : 0.0);
    const double dv = v[i] - ((i + 1 < m_) ? v[i + 1] : 0.0);
    s += c_[i] * du * dv;
  }
  return s;
}

Eigen::MatrixXd RadialGrid::stiffness_dense() const {
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(m_, m_);
  for (int i = 0; i < m_; ++i) {
    k(i, i) += c_[i];
    if (i + 1 < m_) {
      k(i + 1, i + 1) += c_[i];
      k(i, i + 1) -= c_[i];
      k(i + 1, i) -= c_[i];
    }
  }
  return k;
}

Eigen::VectorXd RadialGrid::solve_shifted(const Eigen::VectorXd& shift, const Eigen::VectorXd& b) const {
  Eigen::VectorXd lo(m_), di(m_), up(m_);
  for (int i = 0; i < m_; ++i) {
    di[i] = c_[i] + (i > 0 ? c_[i - 1] : 0.0) + shift[i];
    lo[i] = i > 0 ? -c_[i - 1] : 0.0;
    up[i] = i + 1 < m_ ? -c_[i] : 0.0;
  }
  return solve_tridiagonal(lo, di, up, b);
}

GridPtr build_grid(int n, int m, double grading) {
  return std::make_shared<const RadialGrid>(n, m, grading);
}

Eigen::VectorXd solve_tridiagonal(const Eigen::VectorXd& lower, const Eigen::VectorXd& diag,
                                  const Eigen::VectorXd& upper, const Eigen::VectorXd& rhs) {
  const Eigen::Index m = diag.size();
  Eigen::VectorXd cp(m), dp(m), x(m);
  double denom = diag[0];
  if (denom == 0.0) throw std::runtime_error("singular tridiagonal system");
  cp[0] = upper[0] / denom;
  dp[0] = rhs[0] / denom;
  for (Eigen::Index i = 1; i < m; ++i) {
    denom = diag[i] - lower[i] * cp[i - 1];
    if (denom == 0.0) throw std::runtime_error("singular tridiagonal system");
    cp[i] = (i + 1 < m) ? upper[i] / denom : 0.0;
    dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / denom;
  }
  x[m - 1] = dp[m - 1];
  for (Eigen::Index i = m - 2; i >= 0; --i) x[i] = dp[i] - cp[i] * x[i + 1];
  return x;
}

EigenPair first_eigenpair(const GridPtr& grid, double tol) {
  const int m = grid->size();
  const Eigen::VectorXd& vol = grid->cell_volumes();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(m);

  // Inverse iteration on K e = lambda V e, then Rayleigh-quotient refinement.
  Eigen::VectorXd e = (1.0 - grid->radii().array().square()).matrix();
  double lam = 0.0;
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd next = grid->solve_shifted(zero, vol.cwiseProduct(e));
    next /= std::sqrt(next.dot(vol.cwiseProduct(next)));
    const double lam_new = grid->dirichlet_form(next) / next.dot(vol.cwiseProduct(next));
    const bool done = it > 3 && std::abs(lam_new - lam) <= tol * lam_new;
    e = next;
    lam = lam_new;
    if (done) break;
  }
  for (int it = 0; it < 3; ++it) {
    Eigen::VectorXd shift = -lam * vol;
    Eigen::VectorXd next;
    try {
      next = grid->solve_shifted(shift, vol.cwiseProduct(e));
    } catch (const std::runtime_error&) {
      break;
    }
    if (!next.allFinite()) break;
    next /= std::sqrt(next.dot(vol.cwiseProduct(next)));
    if (next.sum() < 0) next = -next;
    const double lam_new = grid->dirichlet_form(next) / next.dot(vol.cwiseProduct(next));
    if (std::abs(lam_new - lam) > 1e-6 * lam) break;
    e = next;
    lam = lam_new;
  }
  if (e.sum() < 0) e = -e;
  e *= 0.5 / e.maxCoeff();

  EigenPair out;
  out.lambda1 = lam;
  const Eigen::VectorXd ke = grid->stiffness_apply(e);
  out.residual = (ke - lam * vol.cwiseProduct(e)).norm() / ke.norm();
  out.e1 = Field{grid, e};
  return out;
}

}  // namespace choquard
