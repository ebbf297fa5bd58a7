// Runs the ten acceptance criteria and prints one PASS/FAIL line each.
// Exit status is nonzero when a criterion fails that is not listed in
// --expect-fail, or when a listed one passes.

#include "choquard/experiments.hpp"
#include "choquard/fitting.hpp"
#include "choquard/variational.hpp"

#include "CLI11.hpp"

#include <fmt/core.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <string>
#include <vector>

using namespace choquard;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kInf = std::numeric_limits<double>::infinity();

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmtd(double x) { return fmt::format("{:.4g}", x); }

ProblemParams params(double gamma, double a, double eps, double lambda, bool choquard) {
  ProblemParams pp;
  pp.sing = SingularParams{gamma, a, eps};
  pp.lambda = lambda;
  pp.include_choquard = choquard;
  return pp;
}

// ---------------------------------------------------------------- 1

Verdict eigenpair() {
  std::vector<double> ms, errs;
  for (int m : {100, 200, 400, 800}) {
    ms.push_back(m);
    errs.push_back(std::abs(first_eigenpair(build_grid(3, m, 2.0)).lambda1 - kPi * kPi));
  }
  const double rate = -loglog_fit(ms, errs).slope;
  return {std::abs(rate - 2.0) <= 0.1 && errs.back() <= 1e-3,
          "rate " + fmtd(rate) + ", error at m=800 " + fmtd(errs.back())};
}

// ---------------------------------------------------------------- 2

Verdict kernel_constant_field() {
  auto g = build_grid(3, 800, 2.0);
  auto k = assemble_kernel(g, 1.0);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(g->size());
  const double form = k->form(one, one);

  // Monte-Carlo double integral of |x - y|^{-1} over the ball.
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto point = [&] {
    for (;;) {
      const double x = u(rng), y = u(rng), z = u(rng);
      if (x * x + y * y + z * z <= 1.0) return std::array<double, 3>{x, y, z};
    }
  };
  const int samples = 10'000'000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < samples; ++i) {
    const auto a = point(), b = point();
    const double d = std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) +
                               (a[2] - b[2]) * (a[2] - b[2]));
    sum += 1.0 / d;
    sum2 += 1.0 / (d * d);
  }
  const double vol = 4.0 * kPi / 3.0;
  const double mean = sum / samples;
  const double se = std::sqrt((sum2 / samples - mean * mean) / samples);
  const double mc = vol * vol * mean, mc_se = vol * vol * se;
  const double exact = 1.2 * vol * vol;
  const bool oracle_ok = std::abs(mc - exact) <= 4.0 * mc_se;
  const double rel = std::abs(form - exact) / exact;
  return {oracle_ok && rel <= 1e-3 && std::abs(form - mc) <= 4.0 * mc_se + 1e-3 * exact,
          "form " + fmt::format("{:.6f}", form) + ", Monte-Carlo " + fmt::format("{:.4f}", mc) + " +- " +
              fmtd(mc_se) + ", closed form " + fmt::format("{:.6f}", exact) + ", rel " + fmtd(rel)};
}

// ---------------------------------------------------------------- 3

Verdict hls_and_extremizer() {
  auto g = build_grid(3, 800, 2.0);
  auto k = assemble_kernel(g, 1.0);
  const double r = 2.0 * 3 / (2.0 * 3 - 1.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    Field a{g, Eigen::VectorXd(g->size())}, b{g, Eigen::VectorXd(g->size())};
    const double pa = 0.2 + 4.0 * u(rng), pb = 0.2 + 4.0 * u(rng);
    for (int i = 0; i < g->size(); ++i) {
      a.values[i] = std::pow(u(rng), pa);
      b.values[i] = t % 2 ? std::pow(u(rng), pb) : std::pow(1.0 - g->radii()[i], pb);
    }
    worst = std::max(worst, hls_check(*k, a, b, r, r).ratio);
  }
  const Field v = shifted_bubble(g, 1.0, 0.05);
  const double rq = hl_rayleigh_quotient(*k, v.values) / sharp_constants(3, 1.0).S_HL;
  return {worst <= 1.01 && std::abs(rq - 1.0) <= 0.03,
          "max HLS ratio " + fmtd(worst) + " (<= 1.01); bubble quotient / S_HL = " + fmtd(rq) +
              " (within 3% required)"};
}

// ---------------------------------------------------------------- 4

Verdict monotonicity() {
  auto g = build_grid(3, 400, 2.0);
  double worst_k = -kInf, worst_eps = -kInf;
  for (double gamma : {0.5, 2.0, 3.5}) {
    const SolveReport free = solve_S_le(params(gamma, kInf, 0.0, 1.0, false), g);
    if (!free.converged()) return {false, "local solve failed for gamma " + fmtd(gamma)};
    // Put the jump inside the range of the solution.
    const double a = 0.7 * free.solution.values.maxCoeff();

    std::vector<Field> ladder;
    const SolveReport s = solve_S_le(params(gamma, a, 0.25 * a, 1.0, false), g, {}, &ladder);
    if (!s.converged()) return {false, "k ladder failed for gamma " + fmtd(gamma)};
    for (std::size_t i = 1; i < ladder.size(); ++i)
      worst_k = std::max(worst_k, (ladder[i - 1].values - ladder[i].values).maxCoeff());

    Eigen::VectorXd prev;
    for (int j = 0; j <= 12; ++j) {
      // The larger-eps solution is a subsolution here: warm start from it.
      const ProblemParams q = params(gamma, a, 0.5 * a * std::ldexp(1.0, -j), 1.0, false);
      const SolveReport e = j == 0 ? solve_S_le(q, g) : newton_solve(q, g, nullptr, prev);
      if (!e.converged()) return {false, "eps level " + std::to_string(j) + " failed for gamma " + fmtd(gamma)};
      // prev has the larger eps and must not exceed the current one.
      if (prev.size()) worst_eps = std::max(worst_eps, (prev - e.solution.values).maxCoeff());
      prev = e.solution.values;
    }
  }
  return {worst_k <= 1e-8 && worst_eps <= 1e-6,
          "max k-decrease " + fmtd(worst_k) + " (<= 1e-8), max eps-violation " + fmtd(worst_eps) + " (<= 1e-6)"};
}

// ---------------------------------------------------------------- 5

Verdict boundary_exponents() {
  RunConfig c;
  c.grid.m = 800;
  auto g = build_grid(3, c.grid.m, c.grid.grading);
  auto k = kernel_for(c, g);
  bool ok = true;
  std::string detail;
  for (double gamma : {0.5, 1.0, 2.0, 3.0, 5.0}) {
    ProblemParams pp = params(gamma, 1.0, 0.05, 0.1, true);
    std::vector<CascadeLevel> levels;
    const SolveReport s = cascade_to_limit(pp, g, k.get(), {}, &levels);
    if (!s.converged()) return {false, "cascade failed for gamma " + fmtd(gamma)};
    Profile p;
    const Eigen::VectorXd d = g->boundary_distance();
    for (int i = 0; i < g->size(); ++i) {
      p.r.push_back(g->radii()[i]);
      p.delta.push_back(d[i]);
      p.u.push_back(s.solution.values[i]);
      p.residual.push_back(0.0);
    }
    const BoundaryFitReport f = boundary_fit(p, gamma, {});
    if (gamma == 1.0) {
      const double spread = f.log_ratio_spread.value_or(kInf);
      ok = ok && spread <= 0.10;
      detail += "gamma 1: spread " + fmtd(spread) + "; ";
    } else {
      ok = ok && std::abs(f.fit.slope - f.predicted) <= 0.05;
      detail += "gamma " + fmtd(gamma) + ": " + fmtd(f.fit.slope) + " vs " + fmtd(f.predicted) + "; ";
    }
  }
  detail.resize(detail.size() - 2);
  return {ok, detail};
}

// ---------------------------------------------------------------- 6

Verdict sobolev_threshold() {
  RunConfig c;
  c.problem.gamma = 3.5;
  c.schedules.omegas = {1.0, 1.2};
  const RegularityReport hi = regularity_probe(c);
  c.problem.gamma = 1.0;
  c.schedules.omegas = {1.0};
  const RegularityReport lo = regularity_probe(c);
  const bool ok = !hi.rows[0].bounded && hi.rows[1].bounded && lo.rows[0].bounded;
  return {ok, "gamma 3.5: omega 1 slope " + fmtd(hi.rows[0].slope) + ", omega 1.2 slope " + fmtd(hi.rows[1].slope) +
                  "; gamma 1: omega 1 slope " + fmtd(lo.rows[0].slope) + " (bounded below " +
                  fmtd(kBoundedSlope) + ")"};
}

// ---------------------------------------------------------------- 7

Verdict lambda_bracket() {
  RunConfig c;
  std::vector<LambdaSweepResult> res;
  for (int m : {200, 400}) {
    c.grid.m = m;
    auto g = build_grid(3, m, c.grid.grading);
    auto k = kernel_for(c, g);
    res.push_back(sweep_lambda(c, g, *k));
  }
  const LambdaSweepResult& a = res[0];
  const LambdaSweepResult& b = res[1];
  const bool small_ok = !a.rows.empty() && a.rows.front().lambda == 1e-3 && a.rows.front().feasible;
  if (!a.bracket_found() || !b.bracket_found()) return {false, "bracket not found: " + a.note + " / " + b.note};
  const double drift = std::abs(*b.feasible_max - *a.feasible_max) / *a.feasible_max;
  return {small_ok && a.relative_width() <= 0.01 && b.relative_width() <= 0.01 && drift < 0.10,
          "m=200 [" + fmtd(*a.feasible_max) + ", " + fmtd(*a.infeasible_min) + "], m=400 [" +
              fmtd(*b.feasible_max) + ", " + fmtd(*b.infeasible_min) + "], drift " + fmtd(drift) +
              ", lambda=1e-3 feasible: " + (small_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------- 8

Verdict bracketed_monotone() {
  auto g = build_grid(3, 200, 2.0);
  auto k = assemble_kernel(g, 1.0);
  const ProblemParams pp = params(0.5, kInf, 0.0, 1.0, true);
  std::vector<Field> it;
  const SolveReport mono = monotone_iteration(pp, g, *k, {}, &it);
  if (!mono.converged()) return {false, "monotone scheme: " + mono.message};
  const Eigen::VectorXd& w = it.front().values;
  const Eigen::VectorXd z = w + torsion_function(g).values;
  double worst = -kInf;
  for (std::size_t i = 0; i < it.size(); ++i) {
    worst = std::max(worst, (w - it[i].values).maxCoeff());
    worst = std::max(worst, (it[i].values - z).maxCoeff());
    if (i) worst = std::max(worst, (it[i - 1].values - it[i].values).maxCoeff());
  }
  const SolveReport direct = solve_P_le(pp, g, *k);
  if (!direct.converged()) return {false, "solve_P_le: " + direct.message};
  const double diff = (direct.solution.values - mono.solution.values).cwiseAbs().maxCoeff();
  return {worst <= 1e-8 && diff <= 1e-6, std::to_string(it.size()) + " iterates, max bracket violation " +
                                             fmtd(worst) + ", distance to Newton " + fmtd(diff)};
}

// ---------------------------------------------------------------- 9

Verdict bubble_asymptotics() {
  RunConfig c;
  c.grid.m = 800;
  auto g = build_grid(3, c.grid.m, c.grid.grading);
  auto k = kernel_for(c, g);
  const BubbleReport r = bubble_check(c, g, *k);
  return {r.pass_dirichlet && r.pass_hl && r.pass_cross,
          "slopes " + fmtd(r.slope_dirichlet) + " (1), " + fmtd(r.slope_hl) + " (3), " + fmtd(r.slope_cross) +
              " (0.5), +-30%"};
}

// ---------------------------------------------------------------- 10

Verdict two_solutions() {
  RunConfig c;
  c.problem.gamma = 2.0;
  c.problem.a = 1.0;
  c.problem.lambda = 1.0;
  c.problem.eps = 0.05;
  c.search.directions = 50;
  auto g = build_grid(3, c.grid.m, c.grid.grading);
  auto k = kernel_for(c, g);
  const MpSearchReport r = mp_search(c, g, *k);
  if (!r.first.converged()) return {false, "no first solution at lambda = 1"};
  if (!r.second.report.converged()) return {false, "no second solution: " + r.second.report.message};
  const bool ok = r.verified && r.second.distance > 10.0 * c.tol.newton && r.probe_min >= -1e-4 &&
                  r.second.path.below_threshold();
  return {ok, std::string(to_string(r.second.branch)) + " branch, distance " + fmtd(r.second.distance) +
                  ", min probe " + fmtd(r.probe_min) + ", path max " + fmtd(r.second.path.max_energy) +
                  " < " + fmtd(r.second.path.threshold) + ", level-set slope " + fmtd(r.level_set_slope)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> expect_fail;
  std::vector<int> only;
  app.add_option("--expect-fail", expect_fail, "criteria known to fail")->delimiter(',');
  app.add_option("--only", only, "run a subset")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"eigenpair convergence", eigenpair},
      {"kernel constant field", kernel_constant_field},
      {"HLS bound and extremizer quotient", hls_and_extremizer},
      {"k and eps monotonicity", monotonicity},
      {"boundary exponents", boundary_exponents},
      {"Sobolev threshold", sobolev_threshold},
      {"extremal lambda bracket", lambda_bracket},
      {"bracketed monotone iteration", bracketed_monotone},
      {"bubble asymptotics", bubble_asymptotics},
      {"two solutions", two_solutions},
  };
  const std::set<int> expected(expect_fail.begin(), expect_fail.end());
  const std::set<int> subset(only.begin(), only.end());
  int unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!subset.empty() && !subset.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool known = expected.count(id) > 0;
    if (v.pass == known) ++unexpected;
    fmt::print("{} {:2d} {}: {} [{:.1f}s]{}\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first, v.detail, secs,
               known ? (v.pass ? " (listed as expected failure)" : " (expected)") : "");
    std::fflush(stdout);
  }
  return unexpected == 0 ? 0 : 1;
}
