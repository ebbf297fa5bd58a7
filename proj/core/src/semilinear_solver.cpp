#include "choquard/semilinear_solver.hpp"

#include "choquard/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace choquard {

namespace {

constexpr double kTiny = 1e-300;
// Flux magnitudes in the scale never drop below this fraction of c (|u_i| + |u_j|).
// On plateaus u_i - u_j cancels to roundoff, which would otherwise set a
// residual floor above the tolerance.
constexpr double kFluxFloor = 1e-5;

ProblemParams local_params(const ProblemParams& pp) {
  ProblemParams q = pp;
  q.include_choquard = false;
  return q;
}

bool uses_kernel(const ProblemParams& pp, const ChoquardKernel* kernel) {
  return pp.include_choquard && kernel != nullptr;
}

struct Terms {
  Eigen::VectorXd residual;
  Eigen::VectorXd scale;
};

Terms evaluate(const ProblemParams& pp, const RadialGrid& grid, const ChoquardKernel* kernel,
               const Eigen::VectorXd& u, const Eigen::VectorXd* source) {
  const int m = grid.size();
  const Eigen::VectorXd& c = grid.conductances();
  const Eigen::VectorXd& vol = grid.cell_volumes();
  Terms t;
  t.residual.resize(m);
  t.scale.resize(m);
  Eigen::VectorXd nonlocal;
  if (uses_kernel(pp, kernel)) {
    const double p = kernel->exponent();
    const Eigen::VectorXd up = u.cwiseMax(0.0).array().pow(p).matrix();
    nonlocal = (u.cwiseMax(0.0).array().pow(p - 1.0) * (kernel->matrix() * up).array()).matrix();
  }
  for (int i = 0; i < m; ++i) {
    const double right = (i + 1 < m) ? u[i + 1] : 0.0;
    const double out_flux = c[i] * (u[i] - right);
    const double in_flux = i > 0 ? c[i - 1] * (u[i] - u[i - 1]) : 0.0;
    const double g = pp.lambda * vol[i] * singular_term(pp.sing, u[i]);
    double r = out_flux + in_flux - g;
    double s = std::abs(out_flux) + kFluxFloor * c[i] * (std::abs(u[i]) + std::abs(right)) + std::abs(g);
    if (i > 0) s += std::abs(in_flux) + kFluxFloor * c[i - 1] * (std::abs(u[i]) + std::abs(u[i - 1]));
    if (nonlocal.size()) {
      r -= pp.lambda * nonlocal[i];
      s += pp.lambda * std::abs(nonlocal[i]);
    }
    if (source) {
      r -= (*source)[i];
      s += std::abs((*source)[i]);
    }
    t.residual[i] = r;
    t.scale[i] = s + kTiny;
  }
  return t;
}

double scaled_max(const Terms& t) {
  return (t.residual.array().abs() / t.scale.array()).maxCoeff();
}

double merit(const Eigen::VectorXd& r, const Eigen::VectorXd& scale) {
  return 0.5 * (r.array() / scale.array()).square().sum();
}

// Newton correction: solves J du = -R.
Eigen::VectorXd newton_direction(const ProblemParams& pp, const RadialGrid& grid,
                                 const ChoquardKernel* kernel, const Eigen::VectorXd& u,
                                 const Eigen::VectorXd& r) {
  const int m = grid.size();
  const Eigen::VectorXd& vol = grid.cell_volumes();
  Eigen::VectorXd diag(m);
  for (int i = 0; i < m; ++i) diag[i] = -pp.lambda * vol[i] * singular_term_derivative(pp.sing, u[i]);

  if (!uses_kernel(pp, kernel)) return grid.solve_shifted(diag, -r);

  const double p = kernel->exponent();
  const Eigen::VectorXd upos = u.cwiseMax(0.0);
  const Eigen::VectorXd up = upos.array().pow(p).matrix();
  const Eigen::VectorXd upm1 = upos.array().pow(p - 1.0).matrix();
  const Eigen::VectorXd upm2 = upos.array().pow(p - 2.0).matrix();
  const Eigen::VectorXd pot = kernel->matrix() * up;
  Eigen::MatrixXd jac = grid.stiffness_dense();
  jac.diagonal() += diag - pp.lambda * (p - 1.0) * upm2.cwiseProduct(pot);
  jac.noalias() -= pp.lambda * p * upm1.asDiagonal() * kernel->matrix() * upm1.asDiagonal();
  return jac.partialPivLu().solve(-r);
}

double interior_sup_diff(const RadialGrid& grid, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                         double layer) {
  double d = 0.0;
  for (int i = 0; i < grid.size(); ++i)
    if (grid.radii()[i] <= 1.0 - layer) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

void fill_field_diagnostics(SolveReport& rep) {
  const Eigen::VectorXd& u = rep.solution.values;
  if (u.size() == 0) return;
  rep.diagnostics["min_u"] = u.minCoeff();
  rep.diagnostics["max_u"] = u.maxCoeff();
  const LinearFit fit = boundary_exponent(rep.solution);
  if (fit.count >= 3) rep.diagnostics["boundary_exponent"] = fit.slope;
}

Eigen::VectorXd default_local_init(const ProblemParams& pp, const GridPtr& grid) {
  const EigenPair ep = first_eigenpair(grid);
  if (auto theta = subsolution_theta(pp, ep)) return *theta * ep.e1.values;
  const Field z = torsion_function(grid);
  return pp.lambda * z.values;
}

}  // namespace

void validate(const ProblemParams& pp) {
  if (pp.n < 3) throw ConfigError("n must be at least 3");
  if (!(pp.mu > 0.0 && pp.mu < pp.n)) throw ConfigError("mu must lie in (0, n)");
  if (!(pp.lambda > 0.0) || !std::isfinite(pp.lambda)) throw ConfigError("lambda must be positive");
  validate(pp.sing);
}

const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::diverged: return "diverged";
    case SolveStatus::max_iter: return "max_iter";
  }
  return "unknown";
}

Eigen::VectorXd weak_residual(const ProblemParams& pp, const RadialGrid& grid,
                              const ChoquardKernel* kernel, const Eigen::VectorXd& u,
                              const Eigen::VectorXd* source) {
  return evaluate(pp, grid, kernel, u, source).residual;
}

Eigen::VectorXd strong_residual(const ProblemParams& pp, const RadialGrid& grid,
                                const ChoquardKernel* kernel, const Eigen::VectorXd& u) {
  return (weak_residual(pp, grid, kernel, u).array() / grid.cell_volumes().array()).matrix();
}

Eigen::VectorXd scaled_residual(const ProblemParams& pp, const RadialGrid& grid,
                                const ChoquardKernel* kernel, const Eigen::VectorXd& u,
                                const Eigen::VectorXd* source) {
  const Terms t = evaluate(pp, grid, kernel, u, source);
  return (t.residual.array() / t.scale.array()).matrix();
}

SolveReport newton_solve(const ProblemParams& pp, const GridPtr& grid, const ChoquardKernel* kernel,
                         const Eigen::VectorXd& init, const NewtonOptions& opts,
                         const Eigen::VectorXd* source) {
  SolveReport rep;
  if (init.size() != grid->size()) throw ConfigError("initial guess does not match grid");
  Eigen::VectorXd u = init.cwiseMax(opts.floor);
  rep.status = SolveStatus::max_iter;

  Terms t = evaluate(pp, *grid, kernel, u, source);
  for (int it = 0; it <= opts.max_iter; ++it) {
    const double sres = scaled_max(t);
    rep.residual_history.push_back(sres);
    if (!std::isfinite(sres)) {
      rep.status = SolveStatus::diverged;
      rep.message = "non-finite residual";
      break;
    }
    if (sres <= opts.tol) {
      rep.status = SolveStatus::converged;
      break;
    }
    if (it == opts.max_iter) break;

    Eigen::VectorXd du = newton_direction(pp, *grid, kernel, u, t.residual);
    if (!du.allFinite()) {
      rep.status = SolveStatus::diverged;
      rep.message = "singular Newton system";
      break;
    }
    // Keep every node above a tenth of its current value.
    double step = 1.0;
    for (int i = 0; i < u.size(); ++i)
      if (du[i] < 0.0) step = std::min(step, 0.9 * u[i] / -du[i]);

    const double phi0 = merit(t.residual, t.scale);
    bool accepted = false;
    Eigen::VectorXd trial;
    Terms tt;
    while (step >= opts.min_step) {
      trial = (u + step * du).cwiseMax(opts.floor);
      tt = evaluate(pp, *grid, kernel, trial, source);
      const double phi = merit(tt.residual, t.scale);
      if (std::isfinite(phi) && phi <= (1.0 - 1e-4 * step) * phi0) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    ++rep.newton_iters;
    if (!accepted) {
      rep.status = SolveStatus::diverged;
      rep.message = "line search failed";
      break;
    }
    u = trial;
    t = tt;
    if (u.maxCoeff() > opts.blowup) {
      rep.status = SolveStatus::diverged;
      rep.message = "iterates blew up";
      break;
    }
  }
  rep.solution = Field{grid, u};
  const Eigen::VectorXd strong = (t.residual.array() / grid->cell_volumes().array()).matrix();
  rep.diagnostics["residual_scaled"] = scaled_max(t);
  rep.diagnostics["residual_sup"] = strong.cwiseAbs().maxCoeff();
  rep.diagnostics["lambda"] = pp.lambda;
  fill_field_diagnostics(rep);
  return rep;
}

std::optional<double> subsolution_theta(const ProblemParams& pp, const EigenPair& ep) {
  const double top = ep.e1.values.maxCoeff();
  auto f = [&](double theta) {
    return ep.lambda1 * theta * top - pp.lambda * singular_term(pp.sing, theta * top);
  };
  double lo = 1e-8;
  if (f(lo) > 0.0) return std::nullopt;
  double hi = std::isfinite(pp.sing.a) ? pp.sing.a / top : 1.0;
  while (f(hi) <= 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e12) return lo;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) <= 0.0 ? lo : hi) = mid;
  }
  return lo;
}

Field torsion_function(const GridPtr& grid) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(grid->size());
  return Field{grid, grid->solve_shifted(zero, grid->cell_volumes())};
}

SolveReport solve_S_lek(const ProblemParams& pp, const GridPtr& grid, const std::optional<Field>& init,
                        const NewtonOptions& opts) {
  validate(pp);
  const ProblemParams q = local_params(pp);
  const Eigen::VectorXd start = init ? init->values : default_local_init(q, grid);
  SolveReport rep = newton_solve(q, grid, nullptr, start, opts);
  rep.diagnostics["k"] = pp.sing.k;
  return rep;
}

SolveReport solve_S_le(const ProblemParams& pp, const GridPtr& grid, const CascadeOptions& opts,
                       std::vector<Field>* ladder) {
  validate(pp);
  ProblemParams q = local_params(pp);
  q.sing.k = opts.k0;
  SolveReport prev = solve_S_lek(q, grid, std::nullopt, opts.newton);
  int total_iters = prev.newton_iters;
  if (!prev.converged()) {
    prev.message = "k-cascade failed at k = " + std::to_string(q.sing.k) + ": " + prev.message;
    return prev;
  }
  if (ladder) ladder->push_back(prev.solution);
  double delta = std::numeric_limits<double>::infinity();
  int level = 1;
  for (; level < opts.max_levels; ++level) {
    q.sing.k *= 2.0;
    SolveReport next = solve_S_lek(q, grid, prev.solution, opts.newton);
    total_iters += next.newton_iters;
    if (!next.converged()) {
      next.message = "k-cascade failed at k = " + std::to_string(q.sing.k) + ": " + next.message;
      return next;
    }
    if (ladder) ladder->push_back(next.solution);
    delta = interior_sup_diff(*grid, next.solution.values, prev.solution.values, opts.boundary_layer);
    prev = std::move(next);
    if (delta < opts.tol_cascade) break;
  }
  const double k_final = q.sing.k;
  q.sing.k = std::numeric_limits<double>::infinity();
  SolveReport limit = newton_solve(q, grid, nullptr, prev.solution.values, opts.newton);
  limit.newton_iters += total_iters;
  limit.diagnostics["k_levels"] = level + 1;
  limit.diagnostics["k_final"] = k_final;
  limit.diagnostics["cascade_delta"] = delta;
  limit.diagnostics["limit_shift_interior"] =
      interior_sup_diff(*grid, limit.solution.values, prev.solution.values, opts.boundary_layer);
  limit.diagnostics["limit_shift_sup"] = (limit.solution.values - prev.solution.values).cwiseAbs().maxCoeff();
  if (delta >= opts.tol_cascade && limit.converged()) limit.message = "k-cascade did not reach tol_cascade";
  return limit;
}

SolveReport solve_pure_singular(const ProblemParams& pp, const GridPtr& grid, const CascadeOptions& opts) {
  ProblemParams q = local_params(pp);
  q.sing.a = std::numeric_limits<double>::infinity();
  return solve_S_le(q, grid, opts);
}

SolveReport solve_P_le(const ProblemParams& pp, const GridPtr& grid, const ChoquardKernel& kernel,
                       const std::optional<Field>& init, const NewtonOptions& opts) {
  validate(pp);
  ProblemParams q = pp;
  q.include_choquard = true;
  q.sing.k = std::numeric_limits<double>::infinity();
  Eigen::VectorXd start;
  if (init) {
    start = init->values;
  } else {
    CascadeOptions co;
    co.newton = opts;
    SolveReport local = solve_S_le(q, grid, co);
    if (!local.converged()) return local;
    start = local.solution.values;
  }
  SolveReport rep = newton_solve(q, grid, &kernel, start, opts);
  if (rep.converged()) return rep;

  MonotoneOptions mo;
  mo.with_jump = true;
  mo.newton = opts;
  SolveReport picard = monotone_iteration(q, grid, kernel, mo);
  if (picard.status == SolveStatus::diverged) {
    rep.message = "Newton: " + rep.message + "; frozen-potential fallback: " + picard.message;
    return rep;
  }
  SolveReport polished = newton_solve(q, grid, &kernel, picard.solution.values, opts);
  polished.newton_iters += rep.newton_iters + picard.newton_iters;
  polished.diagnostics["picard_steps"] = static_cast<double>(picard.residual_history.size());
  if (!polished.converged()) polished.message = "Newton failed after frozen-potential fallback";
  return polished;
}

SolveReport monotone_iteration(const ProblemParams& pp, const GridPtr& grid, const ChoquardKernel& kernel,
                               const MonotoneOptions& opts, std::vector<Field>* iterates) {
  validate(pp);
  ProblemParams loc = local_params(pp);
  loc.sing.k = std::numeric_limits<double>::infinity();
  if (!opts.with_jump) loc.sing.a = std::numeric_limits<double>::infinity();

  CascadeOptions co;
  co.newton = opts.newton;
  SolveReport base = solve_S_le(loc, grid, co);
  if (!base.converged()) {
    base.message = "w_lambda solve failed: " + base.message;
    return base;
  }
  const Eigen::VectorXd w = base.solution.values;
  Eigen::VectorXd upper;
  if (!opts.with_jump) upper = w + torsion_function(grid).values;

  SolveReport rep;
  rep.status = SolveStatus::max_iter;
  rep.newton_iters = base.newton_iters;
  if (iterates) iterates->push_back(base.solution);
  Eigen::VectorXd u = w;
  const double p = kernel.exponent();
  double worst = -std::numeric_limits<double>::infinity();
  for (int step = 1; step <= opts.max_steps; ++step) {
    const Eigen::VectorXd up = u.array().pow(p).matrix();
    const Eigen::VectorXd src =
        (pp.lambda * u.array().pow(p - 1.0) * (kernel.matrix() * up).array()).matrix();
    SolveReport inner = newton_solve(loc, grid, nullptr, u, opts.newton, &src);
    rep.newton_iters += inner.newton_iters;
    if (!inner.converged()) {
      rep.status = SolveStatus::diverged;
      rep.message = "local solve failed at step " + std::to_string(step) + ": " + inner.message;
      break;
    }
    const Eigen::VectorXd& next = inner.solution.values;
    const double increase_violation = (u - next).maxCoeff();
    const double lower_violation = (w - next).maxCoeff();
    const double upper_violation = upper.size() ? (next - upper).maxCoeff() : -1.0;
    worst = std::max({worst, increase_violation, lower_violation, upper_violation});
    const double change = (next - u).cwiseAbs().maxCoeff();
    rep.residual_history.push_back(change);
    u = next;
    if (iterates) iterates->push_back(Field{grid, u});
    if (increase_violation > opts.bracket_slack || lower_violation > opts.bracket_slack ||
        upper_violation > opts.bracket_slack) {
      rep.status = SolveStatus::diverged;
      rep.message = "bracket violated at step " + std::to_string(step) +
                    " (lambda beyond the small-lambda regime or grid too coarse)";
      break;
    }
    if (u.maxCoeff() > opts.newton.blowup) {
      rep.status = SolveStatus::diverged;
      rep.message = "iterates blew up";
      break;
    }
    if (change <= opts.tol) {
      rep.status = SolveStatus::converged;
      break;
    }
  }
  rep.solution = Field{grid, u};
  ProblemParams full = pp;
  full.include_choquard = true;
  full.sing = loc.sing;
  const Terms t = evaluate(full, *grid, &kernel, u, nullptr);
  rep.diagnostics["residual_scaled"] = scaled_max(t);
  rep.diagnostics["bracket_violation"] = worst;
  rep.diagnostics["steps"] = static_cast<double>(rep.residual_history.size());
  rep.diagnostics["lambda"] = pp.lambda;
  fill_field_diagnostics(rep);
  return rep;
}

ComparisonReport comparison_check(const Field& sub, const Field& super, const ProblemParams& pp,
                                  const ChoquardKernel* kernel, double residual_tol, double order_tol) {
  if (sub.values.size() != super.values.size()) throw ConfigError("fields live on different grids");
  ComparisonReport rep;
  const Eigen::VectorXd rs = scaled_residual(pp, *sub.grid, kernel, sub.values);
  const Eigen::VectorXd rp = scaled_residual(pp, *super.grid, kernel, super.values);
  rep.sub_residual = rs.maxCoeff();
  rep.super_residual = rp.minCoeff();
  rep.sub_ok = rep.sub_residual <= residual_tol;
  rep.super_ok = rep.super_residual >= -residual_tol;
  rep.max_violation = (sub.values - super.values).maxCoeff();
  rep.ordered = rep.max_violation <= order_tol;
  return rep;
}

SolveReport cascade_to_limit(const ProblemParams& pp, const GridPtr& grid, const ChoquardKernel* kernel,
                             const CascadeOptions& opts, std::vector<CascadeLevel>* levels) {
  validate(pp);
  const bool nonlocal = uses_kernel(pp, kernel);
  const int count = std::isfinite(pp.sing.a) ? opts.eps_levels + 1 : 1;
  SolveReport current;
  double prev_delta = std::numeric_limits<double>::infinity();
  double running_max = 0.0;
  bool stagnated = false;
  int total_iters = 0;
  for (int j = 0; j < count; ++j) {
    ProblemParams q = pp;
    q.sing.k = std::numeric_limits<double>::infinity();
    if (std::isfinite(pp.sing.a)) q.sing.eps = 0.5 * pp.sing.a * std::ldexp(1.0, -j);
    SolveReport next;
    if (j == 0) {
      next = nonlocal ? solve_P_le(q, grid, *kernel, std::nullopt, opts.newton) : solve_S_le(q, grid, opts);
    } else {
      // The previous level is a subsolution for the smaller eps.
      next = newton_solve(q, grid, nonlocal ? kernel : nullptr, current.solution.values, opts.newton);
      if (!next.converged())
        next = nonlocal ? solve_P_le(q, grid, *kernel, current.solution, opts.newton) : solve_S_le(q, grid, opts);
    }
    total_iters += next.newton_iters;
    CascadeLevel lv;
    lv.eps = q.sing.eps;
    lv.status = next.status;
    lv.max_u = next.solution.values.size() ? next.solution.values.maxCoeff() : 0.0;
    const LinearFit fit = boundary_exponent(next.solution);
    lv.boundary_exponent = fit.count >= 3 ? fit.slope : std::numeric_limits<double>::quiet_NaN();
    if (j > 0) {
      lv.delta = (next.solution.values - current.solution.values).cwiseAbs().maxCoeff();
      if (j >= 2 && lv.delta > prev_delta * (1.0 + 1e-3) && lv.delta > 1e-12) stagnated = true;
      prev_delta = lv.delta;
    }
    running_max = std::max(running_max, lv.max_u);
    if (levels) levels->push_back(lv);
    if (!next.converged()) {
      next.message = "eps-cascade failed at eps = " + std::to_string(q.sing.eps) + ": " + next.message;
      next.newton_iters = total_iters;
      return next;
    }
    current = std::move(next);
  }
  current.newton_iters = total_iters;
  current.diagnostics["eps_final"] = std::isfinite(pp.sing.a) ? 0.5 * pp.sing.a * std::ldexp(1.0, -(count - 1)) : 0.0;
  current.diagnostics["eps_levels"] = count;
  current.diagnostics["stagnation"] = stagnated ? 1.0 : 0.0;
  current.diagnostics["running_max"] = running_max;
  if (stagnated) current.message = "eps-cascade deltas stopped decreasing (discretization floor)";
  return current;
}

}  // namespace choquard
