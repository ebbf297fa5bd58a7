#include "choquard/radial_grid.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace choquard;

namespace {

// Dirichlet eigenvalue of the unit ball: square of the first zero of J_{n/2-1}.
double bessel_lambda1(int n) {
  const double z = boost::math::cyl_bessel_j_zero(0.5 * n - 1.0, 1);
  return z * z;
}

}  // namespace

TEST(RadialGrid, RejectsBadParameters) {
  EXPECT_THROW(build_grid(2, 100, 1.0), ConfigError);
  EXPECT_THROW(build_grid(3, 4, 1.0), ConfigError);
  EXPECT_THROW(build_grid(3, 15, 1.0), ConfigError);
  EXPECT_NO_THROW(build_grid(3, 16, 1.0));
  EXPECT_THROW(build_grid(3, 100, 0.5), ConfigError);
}

TEST(RadialGrid, NodesAreGradedTowardBoundary) {
  auto g = build_grid(3, 100, 2.0);
  const auto& r = g->radii();
  for (int i = 1; i < g->size(); ++i) EXPECT_GT(r[i], r[i - 1]);
  EXPECT_GT(r[0], 0.0);
  EXPECT_LT(r[g->size() - 1], 1.0);
  // spacing shrinks toward r = 1
  EXPECT_LT(r[99] - r[98], r[1] - r[0]);
  EXPECT_NEAR(g->boundary_distance()[99], std::pow(1.0 / 101.0, 2.0), 1e-15);
}

TEST(RadialGrid, UniformRadiiFormula) {
  const Eigen::VectorXd r = graded_radii(3, 1.0);
  EXPECT_DOUBLE_EQ(r[0], 0.25);
  EXPECT_DOUBLE_EQ(r[1], 0.5);
  EXPECT_DOUBLE_EQ(r[2], 0.75);
  EXPECT_EQ(build_grid(3, 40, 1.5)->radii(), graded_radii(40, 1.5));
}

TEST(RadialGrid, WeightsSumToBallVolume) {
  EXPECT_NEAR(build_grid(3, 200, 1.0)->volume_weights().sum(), 4.18879020478639, 1e-6 * 4.19);
  EXPECT_NEAR(build_grid(4, 200, 2.0)->volume_weights().sum(), 4.934802200544679, 1e-6 * 4.93);
}

TEST(RadialGrid, QuadratureExactForQuadratics) {
  for (int n : {3, 4, 5}) {
    for (double grading : {1.0, 2.0, 3.0}) {
      auto g = build_grid(n, 200, grading);
      const Eigen::VectorXd ones = Eigen::VectorXd::Ones(200);
      const Eigen::VectorXd q = (1.0 - g->radii().array().square()).matrix();
      EXPECT_NEAR(g->integrate(ones), ball_volume(n), 1e-12);
      const double exact = sphere_area(n) * (1.0 / n - 1.0 / (n + 2.0));
      EXPECT_NEAR(g->integrate(q), exact, 1e-12);
    }
  }
}

TEST(RadialGrid, PartitionVolumesCoverTheBall) {
  auto g = build_grid(3, 300, 1.5);
  EXPECT_NEAR(g->partition_volumes().sum(), ball_volume(3), 1e-12);
  EXPECT_LT(g->cell_volumes().sum(), ball_volume(3));
}

TEST(RadialGrid, LaplacianExactOnQuadratic) {
  for (int n : {3, 4, 6}) {
    auto g = build_grid(n, 150, 2.0);
    const Eigen::VectorXd q = (1.0 - g->radii().array().square()).matrix();
    const Eigen::VectorXd lap = g->laplacian_apply(q);
    for (int i = 0; i < g->size(); ++i) EXPECT_NEAR(lap[i], 2.0 * n, 1e-8 * 2 * n);
  }
}

TEST(RadialGrid, StiffnessIsSymmetricMMatrix) {
  auto g = build_grid(3, 60, 2.0);
  const Eigen::MatrixXd k = g->stiffness_dense();
  EXPECT_LT((k - k.transpose()).norm(), 1e-12);
  for (int i = 0; i < 60; ++i) {
    double off = 0.0;
    for (int j = 0; j < 60; ++j)
      if (j != i) {
        EXPECT_LE(k(i, j), 0.0);
        off += std::abs(k(i, j));
      }
    EXPECT_GE(k(i, i), off - 1e-12);
  }
  EXPECT_GT(k(59, 59), std::abs(k(59, 58)));
  Eigen::VectorXd u = Eigen::VectorXd::Random(60);
  EXPECT_NEAR(g->dirichlet_form(u), u.dot(k * u), 1e-9 * u.dot(k * u));
  EXPECT_NEAR((g->stiffness_apply(u) - k * u).norm(), 0.0, 1e-9);
}

TEST(RadialGrid, ShiftedSolveInvertsStiffness) {
  auto g = build_grid(3, 80, 2.0);
  Eigen::VectorXd shift = Eigen::VectorXd::Constant(80, 0.3);
  Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(80, 1.0, 2.0);
  Eigen::VectorXd x = g->solve_shifted(shift, b);
  Eigen::VectorXd back = g->stiffness_apply(x) + shift.cwiseProduct(x);
  EXPECT_LT((back - b).norm(), 1e-10 * b.norm());
}

TEST(Eigenpair, PositiveNormalizedAndAccurate) {
  auto g = build_grid(3, 400, 1.0);
  EigenPair ep = first_eigenpair(g);
  EXPECT_NEAR(ep.e1.values.maxCoeff(), 0.5, 1e-14);
  EXPECT_GT(ep.e1.values.minCoeff(), 0.0);
  EXPECT_LE(ep.residual, 1e-6);
  EXPECT_NEAR(ep.lambda1, std::numbers::pi * std::numbers::pi, 1e-3);
}

TEST(Eigenpair, ProfileMatchesSinc) {
  auto g = build_grid(3, 400, 1.0);
  const EigenPair ep = first_eigenpair(g);
  // e1(0) by quadratic extrapolation through the first two nodes (even in r).
  const double r0 = g->radii()[0], r1 = g->radii()[1];
  const double e0 = (r1 * r1 * ep.e1.values[0] - r0 * r0 * ep.e1.values[1]) / (r1 * r1 - r0 * r0);
  for (int i = 0; i < g->size(); ++i) {
    const double r = g->radii()[i];
    EXPECT_NEAR(ep.e1.values[i] / e0, std::sin(std::numbers::pi * r) / (std::numbers::pi * r), 1e-3);
  }
}

TEST(Eigenpair, SecondOrderConvergence) {
  const double exact = std::numbers::pi * std::numbers::pi;
  double prev = 0.0;
  for (int m : {100, 200, 400, 800}) {
    const double err = std::abs(first_eigenpair(build_grid(3, m, 1.0)).lambda1 - exact);
    if (prev > 0.0) EXPECT_NEAR(std::log2(prev / err), 2.0, 0.1);
    prev = err;
  }
}

TEST(Eigenpair, MatchesBesselZerosInOtherDimensions) {
  for (int n : {4, 5, 7}) {
    const double exact = bessel_lambda1(n);
    const double lam = first_eigenpair(build_grid(n, 800, 1.0)).lambda1;
    EXPECT_NEAR(lam / exact, 1.0, 2e-4) << "n=" << n;
  }
}

TEST(Eigenpair, GradedGridsConverge) {
  const double exact = std::numbers::pi * std::numbers::pi;
  for (double g : {2.0, 3.0}) {
    const double lam = first_eigenpair(build_grid(3, 800, g)).lambda1;
    EXPECT_NEAR(lam, exact, 5e-3) << "grading " << g;
  }
}

TEST(Tridiagonal, SolvesKnownSystem) {
  Eigen::VectorXd lo(3), di(3), up(3), rhs(3);
  lo << 0, -1, -1;
  di << 2, 2, 2;
  up << -1, -1, 0;
  rhs << 1, 0, 1;
  Eigen::VectorXd x = solve_tridiagonal(lo, di, up, rhs);
  EXPECT_NEAR(x[0], 1.0, 1e-14);
  EXPECT_NEAR(x[1], 1.0, 1e-14);
  EXPECT_NEAR(x[2], 1.0, 1e-14);
}
