#pragma once

#include <Eigen/Dense>

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace choquard {

/// Thrown for invalid parameters anywhere in the library.
class ConfigError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Surface area of the unit sphere S^{n-1}.
double sphere_area(int n);

/// Volume of the unit ball in R^n.
double ball_volume(int n);

/// Node radii 1 - (1 - i/(m+1))^g, i = 1..m. Any m >= 1.
Eigen::VectorXd graded_radii(int m, double grading);

/// Radial grid on the unit ball with a finite-volume Laplacian.
///
/// Nodes r_i = 1 - (1 - i/(m+1))^g for i = 1..m. The boundary node r = 1
/// carries the Dirichlet condition and is not an unknown. Control-volume
/// faces sit at midpoints between neighbouring nodes (first face at 0, last
/// face between r_m and the boundary).
class RadialGrid {
public:
  RadialGrid(int n, int m, double grading);

  int dim() const { return n_; }
  int size() const { return m_; }
  double grading() const { return g_; }

  const Eigen::VectorXd& radii() const { return r_; }
  /// Faces f_0 = 0 < f_1 < ... < f_m; cell i spans [f_{i-1}, f_i].
  const Eigen::VectorXd& faces() const { return f_; }
  /// Finite-volume cell measures |S^{n-1}| (f_i^n - f_{i-1}^n)/n.
  const Eigen::VectorXd& cell_volumes() const { return cv_; }
  /// Measures of the cells extended so that the last one reaches r = 1.
  /// They partition the ball exactly.
  const Eigen::VectorXd& partition_volumes() const { return pv_; }
  /// Nodal quadrature weights exact for quadratics in r (times r^{n-1}).
  const Eigen::VectorXd& volume_weights() const { return qw_; }
  /// Face conductances; entry i couples node i to node i+1 (last: to r = 1).
  const Eigen::VectorXd& conductances() const { return c_; }

  /// Distance 1 - r_i to the boundary.
  Eigen::VectorXd boundary_distance() const;

  /// Stiffness product K u (weak form of -Laplacian times cell measure).
  Eigen::VectorXd stiffness_apply(const Eigen::VectorXd& u) const;
  /// Discrete -Laplacian, (K u)_i / V_i.
  Eigen::VectorXd laplacian_apply(const Eigen::VectorXd& u) const;
  /// Dirichlet energy u^T K u.
  double dirichlet_form(const Eigen::VectorXd& u) const;
  double dirichlet_form(const Eigen::VectorXd& u, const Eigen::VectorXd& v) const;
  /// Dense copy of K, mostly for tests and dense Newton.
  Eigen::MatrixXd stiffness_dense() const;

  /// Solves (K + diag(shift)) x = b; shift must keep the matrix an M-matrix.
  Eigen::VectorXd solve_shifted(const Eigen::VectorXd& shift, const Eigen::VectorXd& b) const;

  /// Weighted integral sum_i w_i f_i with the quadrature weights.
  double integrate(const Eigen::VectorXd& f) const { return qw_.dot(f); }

private:
  int n_;
  int m_;
  double g_;
  Eigen::VectorXd r_, f_, cv_, pv_, qw_, c_;
};

using GridPtr = std::shared_ptr<const RadialGrid>;

/// Convenience factory; validates n >= 3, m >= 16, grading >= 1.
GridPtr build_grid(int n, int m, double grading);

/// Nodal values tied to a grid.
struct Field {
  GridPtr grid;
  Eigen::VectorXd values;
};

struct EigenPair {
  double lambda1 = 0.0;
  /// Positive, normalized to max value 1/2.
  Field e1;
  /// ||K e - lambda V e|| / ||K e||.
  double residual = 0.0;
};

/// First Dirichlet eigenpair of the discrete Laplacian.
EigenPair first_eigenpair(const GridPtr& grid, double tol = 1e-12);

/// Solves the tridiagonal system with sub/diag/super bands (Thomas).
/// lower[0] and upper[m-1] are ignored.
Eigen::VectorXd solve_tridiagonal(const Eigen::VectorXd& lower, const Eigen::VectorXd& diag,
                                  const Eigen::VectorXd& upper, const Eigen::VectorXd& rhs);

}  // namespace choquard
