#include "choquard/experiments.hpp"

#include "CLI11.hpp"

#include <fmt/core.h>

#include <optional>
#include <string>

namespace {

struct Overrides {
  std::optional<std::string> config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> m, n;
  std::optional<double> grading, lambda, gamma, a, mu, eps, k;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "JSON config with flat dotted keys");
  sub->add_option("--out", o.out, "output root directory");
  sub->add_option("--seed", o.seed);
  sub->add_option("--m", o.m, "grid nodes");
  sub->add_option("--grading", o.grading, "boundary grading exponent");
  sub->add_option("--lambda", o.lambda);
  sub->add_option("--gamma", o.gamma);
  sub->add_option("--a", o.a, "jump level (inf for none)");
  sub->add_option("--mu", o.mu);
  sub->add_option("--n", o.n);
  sub->add_option("--eps", o.eps, "ramp width");
  sub->add_option("--k", o.k, "regularization (inf for none)");
}

choquard::RunConfig resolve(const Overrides& o) {
  choquard::RunConfig c = o.config ? choquard::load_config(*o.config) : choquard::RunConfig{};
  if (o.out) c.out = *o.out;
  if (o.seed) c.seed = *o.seed;
  if (o.m) c.grid.m = *o.m;
  if (o.grading) c.grid.grading = *o.grading;
  if (o.lambda) c.problem.lambda = *o.lambda;
  if (o.gamma) c.problem.gamma = *o.gamma;
  if (o.a) c.problem.a = *o.a;
  if (o.mu) c.problem.mu = *o.mu;
  if (o.n) c.problem.n = *o.n;
  if (o.eps) c.problem.eps = *o.eps;
  if (o.k) c.problem.k = *o.k;
  choquard::validate(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radial solver lab for singular discontinuous Choquard problems"};
  app.require_subcommand(1);

  Overrides o;
  bool local_only = false;
  std::string csv;
  auto* solve = app.add_subcommand("solve", "eps-cascade solve, writes profile CSV and report");
  add_common(solve, o);
  solve->add_flag("--local", local_only, "drop the Choquard term");
  auto* sweep = app.add_subcommand("sweep-lambda", "feasibility sweep and bisection in lambda");
  add_common(sweep, o);
  auto* fit = app.add_subcommand("boundary-fit", "boundary exponent of a solution CSV");
  add_common(fit, o);
  fit->add_option("--input", csv, "profile CSV (r,delta,u,residual)")->required();
  auto* reg = app.add_subcommand("regularity-probe", "gradient norms of u^omega under refinement");
  add_common(reg, o);
  reg->add_flag("--local", local_only, "drop the Choquard term");
  auto* bub = app.add_subcommand("bubble-check", "bubble energy asymptotics");
  add_common(bub, o);
  auto* mp = app.add_subcommand("mp-search", "second solution via the translated functional");
  add_common(mp, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    choquard::RunConfig cfg = resolve(o);
    if (local_only) cfg.problem.include_choquard = false;
    choquard::validate(cfg);
    choquard::RunResult res;
    if (*solve) res = choquard::cli_solve(cfg);
    else if (*sweep) res = choquard::cli_sweep_lambda(cfg);
    else if (*fit) res = choquard::cli_boundary_fit(cfg, csv);
    else if (*reg) res = choquard::cli_regularity_probe(cfg);
    else if (*bub) res = choquard::cli_bubble_check(cfg);
    else res = choquard::cli_mp_search(cfg);
    fmt::print("{}\n{}\n", res.dir.string(), res.summary);
    return res.exit_code;
  } catch (const choquard::ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "solver failure: {}\n", e.what());
    return 1;
  }
}
