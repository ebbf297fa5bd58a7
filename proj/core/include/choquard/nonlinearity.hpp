#pragma once

#include "choquard/radial_grid.hpp"

#include <limits>

namespace choquard {

/// Parameters of the singular, discontinuous term chi_{u<a} u^{-gamma}.
///
/// eps > 0 selects the ramp regularization of the jump, eps == 0 the exact
/// jump (left-continuous, chi = 1 iff u < a). a = +infinity removes the jump.
/// Finite k replaces u^{-gamma} by (u + 1/k)^{-gamma}.
struct SingularParams {
  double gamma = 0.5;
  double a = 1.0;
  double eps = 0.05;
  double k = std::numeric_limits<double>::infinity();
};

/// Throws ConfigError unless gamma > 0, a > 0, 0 <= eps <= a/2 and k > 0.
void validate(const SingularParams& p);

/// Ramp cut-off: 1 for t < -eps, -t/eps on [-eps, 0), 0 for t >= 0.
/// eps == 0 gives the indicator of t < 0.
double chi_eps(double t, double eps);

/// chi_eps(u - a) (u + 1/k)^{-gamma}. Throws std::domain_error for u <= 0
/// with k = infinity unless u >= a.
double singular_term(const SingularParams& p, double u);

/// Derivative of singular_term in u (a.e.; zero jump contribution).
double singular_term_derivative(const SingularParams& p, double u);

/// Exact primitive H of chi_{t<a} t^{-gamma}: 0 for u <= 0,
/// u^{1-gamma}/(1-gamma) (log u at gamma = 1) below a/2, frozen beyond a.
double primitive_H(double gamma, double a, double u);
double primitive_H(const SingularParams& p, double u);

/// Primitive H_eps with the ramp in place of the jump. Below a/2 it agrees
/// with primitive_H; the ramp segment uses a 20-point Gauss rule.
double primitive_H_eps(const SingularParams& p, double u);

/// Boundary profile: t for gamma < 1, t (-log t)^{1/2} at gamma = 1 (t < 1),
/// t^{2/(1+gamma)} for gamma > 1.
double phi_gamma(double gamma, double t);
/// Profile applied to an eigenfunction; rejects sup e1 >= 1.
Field phi_gamma(double gamma, const Field& e1);

/// Translated nonlinearity for fixed v > 0:
/// 0 for s <= 0, g(v+s) - g(v) otherwise, with g the singular term of p.
double translated_f(const SingularParams& p, double v, double s);

/// Primitive in s of translated_f: H(v+s) - H(v) - s g(v) for s > 0.
double translated_F(const SingularParams& p, double v, double s);

/// Primitive matching the regularization setting of p (eps = 0: primitive_H).
double primitive(const SingularParams& p, double u);

}  // namespace choquard
