#include "choquard/nonlinearity.hpp"

#include "choquard/radial_grid.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>

namespace choquard {

namespace {

// Antiderivative of t^{-gamma}.
double power_primitive(double gamma, double t) {
  if (gamma == 1.0) return std::log(t);
  return std::pow(t, 1.0 - gamma) / (1.0 - gamma);
}

}  // namespace

void validate(const SingularParams& p) {
  if (!(p.gamma > 0.0) || !std::isfinite(p.gamma)) throw ConfigError("gamma must be positive");
  if (!(p.a > 0.0)) throw ConfigError("jump height a must be positive");
  if (!(p.eps >= 0.0)) throw ConfigError("eps must be non-negative");
  if (std::isfinite(p.a) && p.eps > 0.5 * p.a) throw ConfigError("eps must not exceed a/2");
  if (!(p.k > 0.0)) throw ConfigError("regularization index k must be positive");
}

double chi_eps(double t, double eps) {
  if (eps <= 0.0) return t < 0.0 ? 1.0 : 0.0;
  if (t < -eps) return 1.0;
  if (t < 0.0) return -t / eps;
  return 0.0;
}

double singular_term(const SingularParams& p, double u) {
  const double shift = std::isinf(p.k) ? 0.0 : 1.0 / p.k;
  const double base = std::max(u, 0.0) + shift;
  const double c = std::isinf(p.a) ? 1.0 : chi_eps(u - p.a, p.eps);
  if (c == 0.0) return 0.0;
  if (base <= 0.0) throw std::domain_error("singular term needs u > 0");
  return c * std::pow(base, -p.gamma);
}

double singular_term_derivative(const SingularParams& p, double u) {
  const double shift = std::isinf(p.k) ? 0.0 : 1.0 / p.k;
  const double base = std::max(u, 0.0) + shift;
  if (base <= 0.0) return -std::numeric_limits<double>::infinity();
  if (std::isinf(p.a)) return -p.gamma * std::pow(base, -p.gamma - 1.0);
  const double t = u - p.a;
  const double c = chi_eps(t, p.eps);
  double d = -p.gamma * c * std::pow(base, -p.gamma - 1.0);
  if (p.eps > 0.0 && t >= -p.eps && t < 0.0) d += -std::pow(base, -p.gamma) / p.eps;
  return d;
}

double primitive_H(double gamma, double a, double u) {
  if (u <= 0.0) return 0.0;
  return power_primitive(gamma, std::min(u, a));
}

double primitive_H(const SingularParams& p, double u) { return primitive_H(p.gamma, p.a, u); }

double primitive_H_eps(const SingularParams& p, double u) {
  if (u <= 0.0) return 0.0;
  if (p.eps <= 0.0 || std::isinf(p.a) || u < 0.5 * p.a) return primitive_H(p, u);
  const double a = p.a, eps = p.eps;
  const double knee = a - eps;
  double h = power_primitive(p.gamma, std::min(u, knee));
  if (u > knee) {
    // The ramp lies in [a/2, a], away from the singularity, so a fixed
    // 20-point rule is accurate to roundoff. The full-ramp value is memoized.
    thread_local double last_gamma = -1.0, last_a = -1.0, last_eps = -1.0, full = 0.0;
    auto integrand = [&](double t) { return (a - t) / eps * std::pow(t, -p.gamma); };
    using rule = boost::math::quadrature::gauss<double, 20>;
    if (u >= a) {
      if (p.gamma != last_gamma || a != last_a || eps != last_eps) {
        full = rule::integrate(integrand, knee, a);
        last_gamma = p.gamma, last_a = a, last_eps = eps;
      }
      h += full;
    } else {
      h += rule::integrate(integrand, knee, u);
    }
  }
  return h;
}

double primitive(const SingularParams& p, double u) {
  return p.eps > 0.0 ? primitive_H_eps(p, u) : primitive_H(p, u);
}

double phi_gamma(double gamma, double t) {
  if (t <= 0.0) return 0.0;
  if (gamma < 1.0) return t;
  if (gamma == 1.0) return t < 1.0 ? t * std::sqrt(-std::log(t)) : 0.0;
  return std::pow(t, 2.0 / (1.0 + gamma));
}

Field phi_gamma(double gamma, const Field& e1) {
  if (e1.values.maxCoeff() >= 1.0) throw ConfigError("phi_gamma needs sup e1 < 1");
  Field out{e1.grid, e1.values};
  for (Eigen::Index i = 0; i < out.values.size(); ++i) {
    out.values[i] = phi_gamma(gamma, e1.values[i]);
  }
  return out;
}

double translated_f(const SingularParams& p, double v, double s) {
  if (s <= 0.0) return 0.0;
  return singular_term(p, v + s) - singular_term(p, v);
}

double translated_F(const SingularParams& p, double v, double s) {
  if (s <= 0.0) return 0.0;
  return primitive(p, v + s) - primitive(p, v) - s * singular_term(p, v);
}

}  // namespace choquard
