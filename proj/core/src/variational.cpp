#include "choquard/variational.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace choquard {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

SingularParams energy_params(const ProblemParams& pp, bool regularized) {
  SingularParams q = pp.sing;
  q.k = kInf;
  if (!regularized) q.eps = 0.0;
  return q;
}

Eigen::VectorXd pos(const Eigen::VectorXd& w) { return w.cwiseMax(0.0); }

Eigen::VectorXd power(const Eigen::VectorXd& u, double e) { return u.array().pow(e).matrix(); }

double G_total(const ProblemParams& pp, const ChoquardKernel& k, const Eigen::VectorXd& v, const Eigen::VectorXd& w) {
  return energy_G(pp, k, v, w).total;
}

Eigen::VectorXd riesz(const RadialGrid& grid, const Eigen::VectorXd& dual) {
  return grid.solve_shifted(Eigen::VectorXd::Zero(grid.size()), dual);
}

// Projection onto {w >= 0, ||w|| = kappa}; empty vector when w+ vanishes.
Eigen::VectorXd sphere_project(const RadialGrid& grid, const Eigen::VectorXd& w, double kappa) {
  Eigen::VectorXd p = pos(w);
  const double nrm = energy_norm(grid, p);
  if (!(nrm > 0.0)) return {};
  return (kappa / nrm) * p;
}

double sup_dist(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

EnergyBreakdown energy_J(const ProblemParams& pp, const RadialGrid& grid, const ChoquardKernel* kernel,
                         const Eigen::VectorXd& u, bool regularized) {
  const SingularParams q = energy_params(pp, regularized);
  EnergyBreakdown e;
  e.dirichlet = 0.5 * grid.dirichlet_form(u);
  double s = 0.0;
  for (int i = 0; i < grid.size(); ++i) s += grid.cell_volumes()[i] * primitive(q, u[i]);
  e.singular_primitive = pp.lambda * s;
  e.finite = std::isfinite(e.singular_primitive);
  if (pp.include_choquard && kernel) e.choquard = pp.lambda / (2.0 * kernel->exponent()) * kernel->hl_energy(u);
  e.total = e.dirichlet - e.singular_primitive - e.choquard - e.linear_coupling;
  return e;
}

EnergyBreakdown energy_G(const ProblemParams& pp, const ChoquardKernel& kernel, const Eigen::VectorXd& v,
                         const Eigen::VectorXd& w) {
  const RadialGrid& grid = *kernel.grid();
  const SingularParams q = energy_params(pp, true);
  const double p = kernel.exponent();
  const Eigen::VectorXd wp = pos(w);
  EnergyBreakdown e;
  e.dirichlet = 0.5 * grid.dirichlet_form(w);
  double s = 0.0;
  for (int i = 0; i < grid.size(); ++i)
    if (wp[i] > 0.0) s += grid.cell_volumes()[i] * translated_F(q, v[i], wp[i]);
  e.singular_primitive = pp.lambda * s;
  e.finite = std::isfinite(s);
  // HL(v + w) - HL(v) as (A - B)^T M (A + B) to avoid cancellation.
  const Eigen::VectorXd A = power(v + wp, p);
  const Eigen::VectorXd B = power(v, p);
  const Eigen::VectorXd MB = kernel.matrix() * B;
  e.choquard = pp.lambda / (2.0 * p) * (A - B).dot(kernel.matrix() * (A + B));
  e.linear_coupling = -pp.lambda * power(v, p - 1.0).cwiseProduct(wp).dot(MB);
  e.total = e.dirichlet - e.singular_primitive - e.choquard - e.linear_coupling;
  return e;
}

Eigen::VectorXd gradient_G(const ProblemParams& pp, const ChoquardKernel& kernel, const Eigen::VectorXd& v,
                           const Eigen::VectorXd& w) {
  const RadialGrid& grid = *kernel.grid();
  const SingularParams q = energy_params(pp, true);
  const double p = kernel.exponent();
  const Eigen::VectorXd wp = pos(w);
  const Eigen::VectorXd u = v + wp;
  const Eigen::VectorXd nonlocal = power(u, p - 1.0).cwiseProduct(kernel.matrix() * power(u, p)) -
                                   power(v, p - 1.0).cwiseProduct(kernel.matrix() * power(v, p));
  Eigen::VectorXd g = grid.stiffness_apply(w);
  for (int i = 0; i < grid.size(); ++i) {
    if (!(w[i] > 0.0)) continue;
    g[i] -= pp.lambda * (grid.cell_volumes()[i] * translated_f(q, v[i], wp[i]) + nonlocal[i]);
  }
  return g;
}

double energy_norm(const RadialGrid& grid, const Eigen::VectorXd& w) {
  return std::sqrt(std::max(0.0, grid.dirichlet_form(w)));
}

Eigen::VectorXd random_positive_direction(const RadialGrid& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd xi(grid.size());
  for (int i = 0; i < grid.size(); ++i) xi[i] = unif(rng);
  const Eigen::VectorXd z = riesz(grid, grid.cell_volumes().cwiseProduct(xi));
  return z / energy_norm(grid, z);
}

double generalized_derivative_probe(const ProblemParams& pp, const ChoquardKernel& kernel,
                                    const Eigen::VectorXd& v, const Eigen::VectorXd& w,
                                    const Eigen::VectorXd& psi, const ProbeOptions& opts) {
  const RadialGrid& grid = *kernel.grid();
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Eigen::VectorXd> shifts{Eigen::VectorXd::Zero(grid.size())};
  for (int j = 0; j < opts.h_samples; ++j) {
    Eigen::VectorXd xi(grid.size());
    for (int i = 0; i < grid.size(); ++i) xi[i] = 2.0 * unif(rng) - 1.0;
    Eigen::VectorXd h = riesz(grid, grid.cell_volumes().cwiseProduct(xi));
    h *= opts.h_max * unif(rng) / energy_norm(grid, h);
    shifts.push_back(std::move(h));
  }
  double best = -kInf;
  for (const Eigen::VectorXd& h : shifts) {
    const Eigen::VectorXd base = w + h;
    const double g0 = G_total(pp, kernel, v, base);
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (int e = opts.t_min_exp; e <= opts.t_max_exp; ++e) {
      const double t = std::ldexp(1.0, -e);
      const double q = (G_total(pp, kernel, v, base + t * psi) - g0) / t;
      // Pairs (t, t/2) cancel the O(t) curvature term of the quotient.
      if (!std::isnan(prev)) best = std::max(best, 2.0 * q - prev);
      prev = q;
    }
    if (opts.t_min_exp == opts.t_max_exp) best = std::max(best, prev);
  }
  return best;
}

const char* to_string(Geometry g) {
  return g == Geometry::zero_altitude ? "ZA" : "MP";
}

SphereResult za_mp_classify(const ProblemParams& pp, const ChoquardKernel& kernel, const Eigen::VectorXd& v,
                            double kappa, const SphereOptions& opts) {
  if (!(kappa > 0.0)) throw ConfigError("sphere radius must be positive");
  const RadialGrid& grid = *kernel.grid();
  SphereResult res;
  res.kappa = kappa;
  res.infimum = kInf;
  res.best_start = kInf;
  for (int s = 0; s < opts.starts; ++s) {
    Eigen::VectorXd w = kappa * random_positive_direction(grid, opts.seed + 7919u * s);
    double energy = G_total(pp, kernel, v, w);
    res.best_start = std::min(res.best_start, energy);
    double step = kappa;
    for (int it = 0; it < opts.max_iter && step > 1e-14 * kappa; ++it) {
      const Eigen::VectorXd d = riesz(grid, gradient_G(pp, kernel, v, w));
      // tangential part of the Riesz gradient
      const Eigen::VectorXd dt = d - (grid.dirichlet_form(w, d) / (kappa * kappa)) * w;
      const double dn = energy_norm(grid, dt);
      if (!(dn > 1e-14)) break;
      bool moved = false;
      while (step > 1e-14 * kappa) {
        const Eigen::VectorXd trial = sphere_project(grid, w - (step / dn) * dt, kappa);
        if (trial.size()) {
          const double e_trial = G_total(pp, kernel, v, trial);
          if (e_trial < energy) {
            moved = energy - e_trial > 1e-15 * (1.0 + std::abs(energy));
            w = trial;
            energy = e_trial;
            step *= 1.5;
            break;
          }
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
    if (energy < res.infimum) {
      res.infimum = energy;
      res.minimizer = w;
    }
  }
  res.geometry = res.infimum < opts.tol_za ? Geometry::zero_altitude : Geometry::mountain_pass;
  res.gap = res.geometry == Geometry::mountain_pass ? res.infimum : 0.0;
  return res;
}

std::optional<double> find_kappa0(const ProblemParams& pp, const ChoquardKernel& kernel,
                                  const Eigen::VectorXd& v, int directions, std::uint64_t seed) {
  const RadialGrid& grid = *kernel.grid();
  std::vector<Eigen::VectorXd> dirs;
  for (int d = 0; d < directions; ++d) dirs.push_back(random_positive_direction(grid, seed + 104729u * d));
  std::optional<double> kappa0;
  for (int j = -12; j <= 4; ++j) {
    const double kappa = std::ldexp(1.0, j);
    for (const auto& d : dirs)
      if (G_total(pp, kernel, v, kappa * d) < 0.0) return kappa0;
    kappa0 = kappa;
  }
  return kappa0;
}

double critical_level(int n, double mu, double lambda) {
  const SharpConstants sc = sharp_constants(n, mu);
  const double a = (n - mu + 2.0) / (2.0 * n - mu);
  return 0.5 * a * std::pow(sc.S_HL, 1.0 / a) / std::pow(lambda, (n - 2.0) / (n - mu + 2.0));
}

PathProbe mp_path_search(const ProblemParams& pp, const ChoquardKernel& kernel, const Eigen::VectorXd& v,
                         const BubbleParams& bp, const PathOptions& opts) {
  if (opts.samples < 2) throw ConfigError("path needs at least two samples");
  PathProbe probe;
  probe.direction = talenti_bubble(kernel.grid(), kernel.mu(), bp).values;
  probe.threshold = critical_level(kernel.grid()->dim(), kernel.mu(), pp.lambda);
  double R = opts.R_start;
  for (int d = 0; d < opts.max_doublings && G_total(pp, kernel, v, R * probe.direction) >= 0.0; ++d) R *= 2.0;
  probe.R = R;
  probe.max_energy = -kInf;
  for (int k = 0; k < opts.samples; ++k) {
    const double t = std::pow(double(k) / (opts.samples - 1), opts.t_power);
    const double e = G_total(pp, kernel, v, t * R * probe.direction);
    probe.samples.emplace_back(t, e);
    if (e > probe.max_energy) {
      probe.max_energy = e;
      probe.argmax_t = t;
    }
  }
  return probe;
}

namespace {

// Newton on the full problem from v + w0; accepts solutions that differ from v.
std::optional<SolveReport> try_branch(const ProblemParams& pp, const GridPtr& grid, const ChoquardKernel& kernel,
                                      const Eigen::VectorXd& v, const Eigen::VectorXd& w0,
                                      const NewtonOptions& opts, double min_distance) {
  SolveReport rep = newton_solve(pp, grid, &kernel, v + pos(w0), opts);
  if (!rep.converged()) return std::nullopt;
  if (sup_dist(rep.solution.values, v) <= min_distance) return std::nullopt;
  return rep;
}

constexpr double kDistinct = 1e-5;

struct RayMax {
  double t = 0.0;
  double energy = 0.0;
};

// max over t > 0 of G(t d): coarse scan up to the first negative value, then golden section.
RayMax ray_max(const ProblemParams& pp, const ChoquardKernel& k, const Eigen::VectorXd& v,
               const Eigen::VectorXd& d, double t_guess) {
  auto G = [&](double t) { return G_total(pp, k, v, t * d); };
  double hi = std::max(t_guess, 1e-3);
  for (int it = 0; it < 60 && G(hi) >= 0.0; ++it) hi *= 1.5;
  constexpr int kScan = 48;
  int best = 1;
  double best_e = -kInf;
  for (int i = 1; i <= kScan; ++i) {
    const double e = G(hi * i / kScan);
    if (e > best_e) {
      best_e = e;
      best = i;
    }
  }
  double a = hi * (best - 1) / kScan, b = hi * std::min(best + 1, kScan) / kScan;
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = G(x1), f2 = G(x2);
  for (int it = 0; it < 50 && b - a > 1e-10 * hi; ++it) {
    if (f1 < f2) {
      a = x1, x1 = x2, f1 = f2, x2 = a + phi * (b - a), f2 = G(x2);
    } else {
      b = x2, x2 = x1, f2 = f1, x1 = b - phi * (b - a), f1 = G(x1);
    }
  }
  RayMax r{0.5 * (a + b), 0.0};
  r.energy = G(r.t);
  if (best_e > r.energy) r = RayMax{hi * best / kScan, best_e};
  return r;
}

// Minimizes the ray maximum over positive unit directions: ascent along the
// ray, descent transverse to it. Returns the point t* d* of the final ray.
Eigen::VectorXd ray_minimax(const ProblemParams& pp, const ChoquardKernel& k, const Eigen::VectorXd& v,
                            Eigen::VectorXd d, double t0, int max_iter, double grad_tol, int* iters) {
  const RadialGrid& grid = *k.grid();
  d /= energy_norm(grid, d);
  RayMax rm = ray_max(pp, k, v, d, t0);
  double step = 0.1;
  int it = 0;
  for (; it < max_iter && step > 1e-10; ++it) {
    const Eigen::VectorXd r = riesz(grid, gradient_G(pp, k, v, rm.t * d));
    const Eigen::VectorXd rt = r - grid.dirichlet_form(d, r) * d;
    const double rn = energy_norm(grid, rt);
    if (rn < grad_tol) break;
    bool accepted = false;
    while (step > 1e-10) {
      Eigen::VectorXd trial = pos(d - (step / rn) * rt);
      const double tn = energy_norm(grid, trial);
      if (tn > 0.0) {
        trial /= tn;
        const RayMax tr = ray_max(pp, k, v, trial, rm.t);
        if (tr.energy < rm.energy) {
          d = trial;
          rm = tr;
          step = std::min(1.0, 1.5 * step);
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  if (iters) *iters = it;
  return rm.t * d;
}

}  // namespace

SecondSolution second_solution_search(const ProblemParams& pp_in, const GridPtr& grid,
                                      const ChoquardKernel& kernel, const Field& v_in,
                                      const SecondSolutionOptions& opts) {
  ProblemParams pp = pp_in;
  pp.include_choquard = true;
  pp.sing.k = kInf;
  validate(pp);
  if (!(pp.sing.gamma < 3.0) || !(pp.mu < std::min(4.0, double(pp.n))))
    throw ConfigError("second-solution search needs gamma < 3 and mu < min(4, n)");

  SecondSolution out;
  const Eigen::VectorXd& v = v_in.values;
  out.path = mp_path_search(pp, kernel, v, opts.bubble, opts.path);
  const Eigen::VectorXd peak = out.path.argmax_t * out.path.R * out.path.direction;

  std::optional<SolveReport> found;
  int minimax_iters = 0;
  if (opts.minimax_iter > 0) {
    const Eigen::VectorXd w0 = ray_minimax(pp, kernel, v, out.path.direction, out.path.argmax_t * out.path.R,
                                           opts.minimax_iter, opts.minimax_tol, &minimax_iters);
    found = try_branch(pp, grid, kernel, v, w0, opts.newton, kDistinct);
  }
  for (double s : opts.restart_scales) {
    if (found) break;
    found = try_branch(pp, grid, kernel, v, s * peak, opts.newton, kDistinct);
  }
  if (!found) {
    out.branch = Geometry::zero_altitude;
    if (auto kappa0 = find_kappa0(pp, kernel, v)) {
      const SphereResult sph = za_mp_classify(pp, kernel, v, 0.5 * *kappa0, opts.sphere);
      for (double s : opts.restart_scales) {
        found = try_branch(pp, grid, kernel, v, s * sph.minimizer, opts.newton, kDistinct);
        if (found) break;
      }
    }
  }
  out.eps = pp.sing.eps;
  if (!found) {
    out.report.status = SolveStatus::diverged;
    out.report.message = "no critical point of G distinct from 0 found";
    out.report.solution = v_in;
    out.first = v_in;
    out.w = Eigen::VectorXd::Zero(v.size());
    return out;
  }

  // Follow both branches down the eps schedule.
  Eigen::VectorXd v_cur = v;
  SolveReport u2 = std::move(*found);
  for (int j = 1; j <= opts.eps_levels && pp.sing.eps > 0.0; ++j) {
    ProblemParams q = pp;
    q.sing.eps = pp.sing.eps * std::ldexp(1.0, -j);
    SolveReport vj = newton_solve(q, grid, &kernel, v_cur, opts.newton);
    SolveReport uj = newton_solve(q, grid, &kernel, u2.solution.values, opts.newton);
    if (!vj.converged() || !uj.converged() || sup_dist(uj.solution.values, vj.solution.values) <= kDistinct) {
      u2.message = "branch lost at eps = " + std::to_string(q.sing.eps) + "; kept the previous level";
      break;
    }
    v_cur = vj.solution.values;
    u2 = std::move(uj);
    out.eps = q.sing.eps;
  }
  ProblemParams final_pp = pp;
  final_pp.sing.eps = out.eps;
  out.w = pos(u2.solution.values - v_cur);
  out.distance = sup_dist(u2.solution.values, v_cur);
  out.distinct = out.distance > kDistinct;
  out.energy = energy_G(final_pp, kernel, v_cur, out.w);
  u2.diagnostics["energy_G"] = out.energy.total;
  u2.diagnostics["distance"] = out.distance;
  u2.diagnostics["eps"] = out.eps;
  u2.diagnostics["minimax_iters"] = minimax_iters;
  u2.diagnostics["min_w_raw"] = (u2.solution.values - v_cur).minCoeff();
  out.report = std::move(u2);
  out.first = Field{grid, v_cur};
  return out;
}

double level_set_fraction(const Field& u, double a, double h) {
  const RadialGrid& g = *u.grid;
  const int n = g.dim();
  const Eigen::VectorXd& r = g.radii();
  double measure = 0.0;  // in units of |S^{n-1}|
  auto shell = [n](double lo, double hi) { return (std::pow(hi, n) - std::pow(lo, n)) / n; };
  if (std::abs(u.values[0] - a) < h) measure += shell(0.0, r[0]);
  for (int i = 0; i < g.size(); ++i) {
    const double r0 = r[i], r1 = i + 1 < g.size() ? r[i + 1] : 1.0;
    const double u0 = u.values[i], u1 = i + 1 < g.size() ? u.values[i + 1] : 0.0;
    double s_lo = 0.0, s_hi = 1.0;
    const double du = u1 - u0;
    if (du == 0.0) {
      if (!(std::abs(u0 - a) < h)) continue;
    } else {
      double s1 = (a - h - u0) / du, s2 = (a + h - u0) / du;
      if (s1 > s2) std::swap(s1, s2);
      s_lo = std::max(s_lo, s1);
      s_hi = std::min(s_hi, s2);
      if (s_hi <= s_lo) continue;
    }
    measure += shell(r0 + s_lo * (r1 - r0), r0 + s_hi * (r1 - r0));
  }
  return measure * sphere_area(n) / ball_volume(n);
}

LipschitzReport lipschitz_check(const ProblemParams& pp, const ChoquardKernel& kernel, const Eigen::VectorXd& v,
                                double radius, int pairs, std::uint64_t seed) {
  const RadialGrid& grid = *kernel.grid();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  LipschitzReport rep;
  for (int k = 0; k < pairs; ++k) {
    const Eigen::VectorXd w1 = radius * unif(rng) * random_positive_direction(grid, rng());
    const Eigen::VectorXd w2 = radius * unif(rng) * random_positive_direction(grid, rng());
    const Eigen::VectorXd mid = 0.5 * (w1 + w2);
    const double g1 = G_total(pp, kernel, v, w1);
    const double d = energy_norm(grid, w1 - w2);
    if (d > 0.0) {
      rep.max_ratio = std::max(rep.max_ratio, std::abs(g1 - G_total(pp, kernel, v, w2)) / d);
      rep.max_ratio_halved = std::max(rep.max_ratio_halved, std::abs(g1 - G_total(pp, kernel, v, mid)) / (0.5 * d));
    }
  }
  return rep;
}

}  // namespace choquard
