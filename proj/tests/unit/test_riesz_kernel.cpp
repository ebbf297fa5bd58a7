#include "choquard/riesz_kernel.hpp"

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

using namespace choquard;

namespace {

constexpr double kPi = std::numbers::pi;
const double kCoulomb = 1.2 * std::pow(4.0 * kPi / 3.0, 2);

double angular_oracle(double mu, double r, double s) {
  boost::math::quadrature::tanh_sinh<double> ts;
  auto f = [&](double t) {
    const double d = r * r + s * s - 2 * r * s * std::cos(t);
    return 2 * kPi * std::pow(d, -0.5 * mu) * std::sin(t);
  };
  return ts.integrate(f, 0.0, kPi);
}

// Uniform point in the unit 3-ball.
std::array<double, 3> ball_point(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u;
  double x = g(rng), y = g(rng), z = g(rng);
  const double n = std::sqrt(x * x + y * y + z * z);
  const double r = std::cbrt(u(rng));
  return {r * x / n, r * y / n, r * z / n};
}

double interp(const RadialGrid& g, const Eigen::VectorXd& v, double r) {
  const auto& x = g.radii();
  if (r <= x[0]) return v[0];
  if (r >= x[g.size() - 1]) return v[g.size() - 1] * (1.0 - r) / (1.0 - x[g.size() - 1]);
  int lo = 0, hi = g.size() - 1;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    (x[mid] <= r ? lo : hi) = mid;
  }
  const double t = (r - x[lo]) / (x[hi] - x[lo]);
  return (1 - t) * v[lo] + t * v[hi];
}

}  // namespace

TEST(AngularKernel, ClosedFormExamples) {
  EXPECT_NEAR(angular_kernel(3, 1.0, 0.5, 0.5), 8 * kPi, 1e-12);
  EXPECT_NEAR(angular_kernel(3, 1.0, 1e-9, 0.5), 8 * kPi, 1e-6);
  EXPECT_NEAR(angular_kernel(3, 1.0, 0.0, 0.5), 8 * kPi, 1e-12);
  for (double mu : {0.3, 1.0, 1.7, 2.0, 2.5})
    for (double r : {0.05, 0.3, 0.9})
      for (double s : {0.1, 0.6}) {
        EXPECT_NEAR(angular_kernel(3, mu, r, s), angular_oracle(mu, r, s),
                    1e-8 * angular_oracle(mu, r, s));
        EXPECT_DOUBLE_EQ(angular_kernel(3, mu, r, s), angular_kernel(3, mu, s, r));
      }
}

TEST(AngularKernel, SmallRatioIsStable) {
  // r << s: kernel tends to |S^2| s^{-mu}
  for (double mu : {0.5, 1.5, 2.5})
    EXPECT_NEAR(angular_kernel(3, mu, 1e-12, 0.7), 4 * kPi * std::pow(0.7, -mu), 1e-9);
}

TEST(AngularKernel, NewtonianMeanValueInHigherDimensions) {
  // For mu = n - 2 the spherical mean equals |S^{n-1}| max(r,s)^{2-n}.
  for (int n : {4, 5}) {
    for (double r : {0.2, 0.7})
      for (double s : {0.1, 0.5, 0.9}) {
        const double exact = sphere_area(n) * std::pow(std::max(r, s), 2.0 - n);
        EXPECT_NEAR(angular_kernel(n, n - 2.0, r, s), exact, 1e-8 * exact);
      }
  }
}

TEST(AngularKernel, RejectsBadMu) {
  EXPECT_THROW(angular_kernel(3, 0.0, 0.2, 0.3), ConfigError);
  EXPECT_THROW(angular_kernel(3, 3.0, 0.2, 0.3), ConfigError);
  EXPECT_TRUE(std::isinf(angular_kernel(3, 2.5, 0.3, 0.3)));
}

TEST(Kernel, SymmetricPositiveAndCoulombValue) {
  auto g = build_grid(3, 200, 1.0);
  auto k = assemble_kernel(g, 1.0);
  const auto& m = k->matrix();
  EXPECT_EQ((m - m.transpose()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(m.minCoeff(), 0.0);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(200);
  EXPECT_NEAR(k->form(one, one) / kCoulomb, 1.0, 1e-3);
}

TEST(Kernel, CoulombMonteCarloOracle) {
  std::mt19937_64 rng(11);
  const int samples = 1000000;
  double acc = 0.0;
  for (int i = 0; i < samples; ++i) {
    auto x = ball_point(rng), y = ball_point(rng);
    acc += 1.0 / std::hypot(x[0] - y[0], x[1] - y[1], x[2] - y[2]);
  }
  const double mc = std::pow(4 * kPi / 3, 2) * acc / samples;
  EXPECT_NEAR(mc / kCoulomb, 1.0, 5e-3);
}

TEST(Kernel, ConstantFieldSelfConvergence) {
  std::vector<double> vals;
  for (int m : {50, 100, 200, 400}) {
    auto k = assemble_kernel(build_grid(3, m, 2.0), 1.5);
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(m);
    vals.push_back(k->form(one, one));
  }
  const double d1 = std::abs(vals[1] - vals[0]), d2 = std::abs(vals[2] - vals[1]),
               d3 = std::abs(vals[3] - vals[2]);
  EXPECT_GE(std::log2(d1 / d2), 1.0);
  EXPECT_GE(std::log2(d2 / d3), 1.0);
}

TEST(Kernel, CoulombCaseIsExactOnCoarseGrids) {
  auto k = assemble_kernel(build_grid(3, 50, 3.0), 1.0);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(50);
  EXPECT_NEAR(k->form(one, one), kCoulomb, 1e-9);
}

TEST(Kernel, OtherExponentsMatchDistanceDistribution) {
  // Oracle: the distance d between two uniform points of the unit 3-ball has
  // density 3 d^2 (1 - 3d/4 + d^3/16) on [0, 2].
  for (double mu : {0.5, 1.5, 2.0, 2.5}) {
    auto k = assemble_kernel(build_grid(3, 200, 1.0), mu);
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(200);
    const double vol = 4 * kPi / 3;
    const double moment = 3.0 * (std::pow(2.0, 3 - mu) / (3 - mu) - 0.75 * std::pow(2.0, 4 - mu) / (4 - mu) +
                                 std::pow(2.0, 6 - mu) / (16.0 * (6 - mu)));
    EXPECT_NEAR(k->form(one, one) / (vol * vol * moment), 1.0, 1e-5) << "mu=" << mu;
  }
}

TEST(Kernel, FormBilinearAndMonotone) {
  auto g = build_grid(3, 80, 2.0);
  auto k = assemble_kernel(g, 1.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd f(80), h(80);
  for (int i = 0; i < 80; ++i) {
    f[i] = u(rng);
    h[i] = f[i] + u(rng);
  }
  EXPECT_NEAR(k->form(2.5 * f, h), 2.5 * k->form(f, h), 1e-12 * k->form(f, h));
  EXPECT_EQ(k->form(Eigen::VectorXd::Zero(80), h), 0.0);
  EXPECT_GE(k->form(f, f), 0.0);
  EXPECT_LE(k->form(f, f), k->form(h, h));
}

TEST(Kernel, PotentialPositiveAndMonteCarloConvolution) {
  auto g = build_grid(3, 400, 1.0);
  auto k = assemble_kernel(g, 1.0);
  EXPECT_EQ(k->potential(Eigen::VectorXd::Zero(400)).norm(), 0.0);
  const Eigen::VectorXd c = Eigen::VectorXd::Constant(400, 0.7);
  const Eigen::VectorXd pc = k->potential(c);
  EXPECT_GT(pc.minCoeff(), 0.0);

  const EigenPair ep = first_eigenpair(g);
  const Field pot = nonlocal_potential(*k, ep.e1);
  const double p = k->exponent();
  std::mt19937_64 rng(5);
  for (double r : {0.25, 0.5, 0.75}) {
    double acc = 0.0;
    const int samples = 4000000;
    for (int i = 0; i < samples; ++i) {
      auto y = ball_point(rng);
      const double ry = std::sqrt(y[0] * y[0] + y[1] * y[1] + y[2] * y[2]);
      const double d = std::hypot(y[0] - r, y[1], y[2]);
      acc += std::pow(interp(*g, ep.e1.values, ry), p) / d;
    }
    const double mc = 4 * kPi / 3 * acc / samples;
    EXPECT_NEAR(interp(*g, pot.values, r) / mc, 1.0, 1e-2) << "r=" << r;
  }
}

TEST(Kernel, CacheRoundTripAndRejection) {
  const auto dir = std::filesystem::temp_directory_path() / "choquard_kernel_cache_test";
  std::filesystem::remove_all(dir);
  auto g = build_grid(3, 40, 1.5);
  KernelOptions opts;
  opts.cache_dir = dir;
  auto k1 = assemble_kernel(g, 1.0, opts);
  const auto file = dir / kernel_cache_name(*g, 1.0);
  ASSERT_TRUE(std::filesystem::exists(file));
  auto loaded = load_kernel(g, 1.0, file);
  ASSERT_TRUE(loaded.has_value());
  EXPECT_EQ((*loaded - k1->matrix()).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_FALSE(load_kernel(g, 1.5, file).has_value());
  EXPECT_FALSE(load_kernel(build_grid(3, 40, 1.0), 1.0, file).has_value());
  {
    std::fstream f(file, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(-8, std::ios::end);
    const double junk = 123.0;
    f.write(reinterpret_cast<const char*>(&junk), sizeof junk);
  }
  EXPECT_FALSE(load_kernel(g, 1.0, file).has_value());
  auto k2 = assemble_kernel(g, 1.0, opts);
  EXPECT_EQ(k2->content_hash(), k1->content_hash());
  std::filesystem::remove_all(dir);
}

TEST(SharpConstants, SobolevAndRelation) {
  const SharpConstants c = sharp_constants(3, 1.0);
  EXPECT_NEAR(c.S, 5.4779, 1e-4);
  EXPECT_NEAR(c.S_HL * std::pow(c.C_nmu, 1.0 / 5.0), c.S, 1e-14 * c.S);
  for (int n : {3, 4, 6})
    for (double mu : {0.5, 1.0, 2.0}) {
      const SharpConstants d = sharp_constants(n, mu);
      EXPECT_NEAR(d.S_HL * std::pow(d.C_nmu, (n - 2.0) / (2.0 * n - mu)), d.S, 1e-13 * d.S);
    }
  EXPECT_THROW(sharp_constants(3, 3.0), ConfigError);
}

TEST(SharpConstants, SobolevQuotientOracle) {
  // Rayleigh quotient of (1 + r^2)^{-1/2} on balls of radius R, extrapolated in 1/R.
  auto quotient = [](double R) {
    boost::math::quadrature::gauss_kronrod<double, 61> gk;
    auto grad = [](double r) { return r * r / std::pow(1 + r * r, 3.0) * r * r; };
    auto pw = [](double r) { return r * r / std::pow(1 + r * r, 3.0); };
    const double a = 4 * kPi * gk.integrate(grad, 0.0, R, 20, 1e-13);
    const double b = 4 * kPi * gk.integrate(pw, 0.0, R, 20, 1e-13);
    return a / std::pow(b, 1.0 / 3.0);
  };
  const double q1 = quotient(1e3), q2 = quotient(2e3);
  const double extrap = 2 * q2 - q1;
  EXPECT_NEAR(extrap, sharp_constants(3, 1.0).S, 1e-4);
}

TEST(Bubble, ContinuumEnergyMatchesHLLevel) {
  // The normalized profile has Dirichlet energy S_HL^{(2n-mu)/(n-mu+2)} on R^3.
  for (double mu : {0.5, 1.0, 2.0}) {
    const SharpConstants c = sharp_constants(3, mu);
    const double level = std::pow(c.S_HL, (6.0 - mu) / (5.0 - mu));
    boost::math::quadrature::exp_sinh<double> es;
    auto grad = [&](double r) {
      const double h = 1e-6 * (1 + r);
      const double d = (bubble_profile(3, mu, 1.0, r + h) - bubble_profile(3, mu, 1.0, r - h)) / (2 * h);
      return 4 * kPi * r * r * d * d;
    };
    EXPECT_NEAR(es.integrate(grad) / level, 1.0, 1e-6) << "mu=" << mu;
  }
}

TEST(Bubble, ScalingAndCutoff) {
  const double v1 = bubble_profile(3, 1.0, 1.0, 0.0);
  EXPECT_NEAR(bubble_profile(3, 1.0, 0.04, 0.0), std::pow(0.04, -0.5) * v1, 1e-12 * v1);
  auto g = build_grid(3, 200, 1.0);
  BubbleParams bp;
  bp.eps = 0.1;
  const Field w = talenti_bubble(g, 1.0, bp);
  for (int i = 0; i < 200; ++i) {
    if (g->radii()[i] >= bp.cutoff_outer) EXPECT_EQ(w.values[i], 0.0);
    if (g->radii()[i] <= bp.cutoff_inner)
      EXPECT_DOUBLE_EQ(w.values[i], bubble_profile(3, 1.0, 0.1, g->radii()[i]));
  }
  for (double r = 0.2; r < 0.6; r += 0.01) EXPECT_GE(cutoff(bp, r), cutoff(bp, r + 0.01));
  BubbleParams bad;
  bad.cutoff_inner = 0.6;
  EXPECT_THROW(validate(bad), ConfigError);
}

TEST(Hls, RandomFieldsBelowSharpBound) {
  auto g = build_grid(3, 200, 1.0);
  auto k = assemble_kernel(g, 1.0);
  const double t = 6.0 / 5.0;
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    Field f{g, Eigen::VectorXd(200)}, h{g, Eigen::VectorXd(200)};
    for (int i = 0; i < 200; ++i) {
      f.values[i] = u(rng);
      h.values[i] = u(rng) * u(rng);
    }
    EXPECT_LT(hls_check(*k, f, h, t, t).ratio, 1.0);
  }
  Field zero{g, Eigen::VectorXd::Zero(200)};
  EXPECT_EQ(hls_check(*k, zero, zero, t, t).ratio, 0.0);
  EXPECT_THROW(hls_check(*k, zero, zero, 1.5, 1.5), ConfigError);
}

TEST(Hls, ExtremizerNearlySharp) {
  auto g = build_grid(3, 800, 1.0);
  auto k = assemble_kernel(g, 1.0);
  Field v{g, Eigen::VectorXd(800)};
  for (int i = 0; i < 800; ++i) v.values[i] = std::pow(bubble_profile(3, 1.0, 0.05, g->radii()[i]), 5.0);
  const HlsResult res = hls_check(*k, v, v, 1.2, 1.2);
  EXPECT_LE(res.ratio, 1.0);
  EXPECT_GE(res.ratio, 0.97);
}
