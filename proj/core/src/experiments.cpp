#include "choquard/experiments.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>

#ifndef CHOQUARD_VERSION
#define CHOQUARD_VERSION "unknown"
#endif

namespace choquard {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------- config keys

// JSON has no infinity; a and k accept the string "inf".
json encode(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

double decode_double(const std::string& key, const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return kInf;
  }
  throw ConfigError(key + ": expected a number");
}

long long decode_int(const std::string& key, const json& j) {
  if (j.is_number_integer()) return j.get<long long>();
  if (j.is_number_float()) {
    const double d = j.get<double>();
    if (d == std::floor(d) && std::abs(d) < 9e15) return static_cast<long long>(d);
  }
  throw ConfigError(key + ": expected an integer");
}

struct Key {
  std::string name;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <class Get>
Key real_key(std::string name, Get ref) {
  return {name, [ref](const RunConfig& c) { return encode(ref(const_cast<RunConfig&>(c))); },
          [ref, name](RunConfig& c, const json& j) { ref(c) = decode_double(name, j); }};
}

template <class Get>
Key int_key(std::string name, Get ref) {
  return {name, [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); },
          [ref, name](RunConfig& c, const json& j) {
            const long long v = decode_int(name, j);
            if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
              throw ConfigError(name + ": out of range");
            ref(c) = static_cast<int>(v);
          }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    std::vector<Key> t;
    t.push_back(int_key("problem.n", [](RunConfig& c) -> int& { return c.problem.n; }));
    t.push_back(real_key("problem.mu", [](RunConfig& c) -> double& { return c.problem.mu; }));
    t.push_back(real_key("problem.gamma", [](RunConfig& c) -> double& { return c.problem.gamma; }));
    t.push_back(real_key("problem.a", [](RunConfig& c) -> double& { return c.problem.a; }));
    t.push_back(real_key("problem.eps", [](RunConfig& c) -> double& { return c.problem.eps; }));
    t.push_back(real_key("problem.k", [](RunConfig& c) -> double& { return c.problem.k; }));
    t.push_back(real_key("problem.lambda", [](RunConfig& c) -> double& { return c.problem.lambda; }));
    t.push_back({"problem.include_choquard", [](const RunConfig& c) { return json(c.problem.include_choquard); },
                 [](RunConfig& c, const json& j) {
                   if (!j.is_boolean()) throw ConfigError("problem.include_choquard: expected true or false");
                   c.problem.include_choquard = j.get<bool>();
                 }});
    t.push_back(int_key("grid.m", [](RunConfig& c) -> int& { return c.grid.m; }));
    t.push_back(real_key("grid.grading", [](RunConfig& c) -> double& { return c.grid.grading; }));
    t.push_back(int_key("schedules.eps_levels", [](RunConfig& c) -> int& { return c.schedules.eps_levels; }));
    t.push_back(real_key("schedules.k0", [](RunConfig& c) -> double& { return c.schedules.k0; }));
    t.push_back(int_key("schedules.k_levels", [](RunConfig& c) -> int& { return c.schedules.k_levels; }));
    auto real_list = [](std::string name, auto ref) {
      return Key{name,
                 [ref](const RunConfig& c) {
                   json a = json::array();
                   for (double x : ref(const_cast<RunConfig&>(c))) a.push_back(encode(x));
                   return a;
                 },
                 [ref, name](RunConfig& c, const json& j) {
                   if (!j.is_array()) throw ConfigError(name + ": expected an array");
                   std::vector<double> v;
                   for (const json& e : j) v.push_back(decode_double(name, e));
                   ref(c) = std::move(v);
                 }};
    };
    t.push_back(real_list("schedules.lambdas", [](RunConfig& c) -> std::vector<double>& { return c.schedules.lambdas; }));
    t.push_back(real_key("schedules.lambda_min", [](RunConfig& c) -> double& { return c.schedules.lambda_min; }));
    t.push_back(real_key("schedules.lambda_factor", [](RunConfig& c) -> double& { return c.schedules.lambda_factor; }));
    t.push_back(real_key("schedules.lambda_max", [](RunConfig& c) -> double& { return c.schedules.lambda_max; }));
    t.push_back({"schedules.meshes",
                 [](const RunConfig& c) { return json(c.schedules.meshes); },
                 [](RunConfig& c, const json& j) {
                   if (!j.is_array()) throw ConfigError("schedules.meshes: expected an array");
                   std::vector<int> v;
                   for (const json& e : j) v.push_back(static_cast<int>(decode_int("schedules.meshes", e)));
                   c.schedules.meshes = std::move(v);
                 }});
    t.push_back(real_list("schedules.omegas", [](RunConfig& c) -> std::vector<double>& { return c.schedules.omegas; }));
    t.push_back(
        real_list("schedules.bubble_eps", [](RunConfig& c) -> std::vector<double>& { return c.schedules.bubble_eps; }));
    t.push_back(real_key("tol.newton", [](RunConfig& c) -> double& { return c.tol.newton; }));
    t.push_back(real_key("tol.cascade", [](RunConfig& c) -> double& { return c.tol.cascade; }));
    t.push_back(
        real_key("tol.feasible_residual", [](RunConfig& c) -> double& { return c.tol.feasible_residual; }));
    t.push_back(real_key("tol.bracket_rel", [](RunConfig& c) -> double& { return c.tol.bracket_rel; }));
    t.push_back(real_key("tol.window_lo", [](RunConfig& c) -> double& { return c.tol.window_lo; }));
    t.push_back(real_key("tol.window_hi", [](RunConfig& c) -> double& { return c.tol.window_hi; }));
    t.push_back(real_key("search.bubble_eps", [](RunConfig& c) -> double& { return c.search.bubble_eps; }));
    t.push_back(int_key("search.eps_levels", [](RunConfig& c) -> int& { return c.search.eps_levels; }));
    t.push_back(int_key("search.directions", [](RunConfig& c) -> int& { return c.search.directions; }));
    t.push_back({"seed", [](const RunConfig& c) { return json(c.seed); },
                 [](RunConfig& c, const json& j) {
                   if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
                     throw ConfigError("seed: expected a nonnegative integer");
                   c.seed = j.get<std::uint64_t>();
                 }});
    auto str_key = [](std::string name, auto ref) {
      return Key{name, [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); },
                 [ref, name](RunConfig& c, const json& j) {
                   if (!j.is_string()) throw ConfigError(name + ": expected a string");
                   ref(c) = j.get<std::string>();
                 }};
    };
    t.push_back(str_key("out", [](RunConfig& c) -> std::string& { return c.out; }));
    t.push_back(str_key("kernel_cache", [](RunConfig& c) -> std::string& { return c.kernel_cache; }));
    return t;
  }();
  return table;
}

json config_json(const RunConfig& cfg) {
  json j = json::object();
  for (const Key& k : keys()) j[k.name] = k.get(cfg);
  return j;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + ": " + what);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------- output helpers

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << text;
}

void write_json(const fs::path& file, const json& j) { write_text(file, j.dump(2) + "\n"); }

json report_json(const SolveReport& rep) {
  json j;
  j["status"] = to_string(rep.status);
  j["message"] = rep.message;
  j["newton_iters"] = rep.newton_iters;
  j["residual_history"] = rep.residual_history;
  json d = json::object();
  for (const auto& [k, v] : rep.diagnostics) d[k] = std::isfinite(v) ? json(v) : json(encode(v));
  j["diagnostics"] = d;
  return j;
}

json nullable(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

struct Run {
  RunConfig cfg;
  std::string command;
  fs::path dir;
  std::string hash;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::vector<std::string> files;

  Run(const RunConfig& c, std::string cmd) : cfg(c), command(std::move(cmd)) {
    validate(cfg);
    hash = config_hash(cfg);
    dir = make_run_dir(cfg, command);
    write_json(dir / "config.json", config_json(cfg));
    files.push_back("config.json");
  }

  void json_file(const std::string& name, json j) {
    j["config_hash"] = hash;
    write_json(dir / name, j);
    files.push_back(name);
  }

  void profile(const std::string& name, const Field& u, const ProblemParams& pp, const ChoquardKernel* k) {
    write_profile_csv(dir / name, u, pp, k);
    files.push_back(name);
  }

  RunResult finish(int code, const std::string& status, std::string summary) {
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    json m;
    m["command"] = command;
    m["config_hash"] = hash;
    m["version"] = CHOQUARD_VERSION;
    m["seed"] = cfg.seed;
    m["wall_time_s"] = wall;
    m["status"] = status;
    m["exit_code"] = code;
    m["files"] = files;
    write_json(dir / "manifest.json", m);
    return {code, dir, std::move(summary)};
  }
};

CascadeOptions cascade_options(const RunConfig& cfg) {
  CascadeOptions co;
  co.k0 = cfg.schedules.k0;
  co.max_levels = cfg.schedules.k_levels;
  co.tol_cascade = cfg.tol.cascade;
  co.eps_levels = cfg.schedules.eps_levels;
  co.newton.tol = cfg.tol.newton;
  return co;
}

BoundaryWindow window(const RunConfig& cfg) { return {cfg.tol.window_lo, cfg.tol.window_hi}; }

double field_max(const Field& u) { return u.values.size() ? u.values.maxCoeff() : 0.0; }

}  // namespace

// ---------------------------------------------------------------- config

void validate(const RunConfig& c) {
  const auto& p = c.problem;
  require(p.n >= 3, "problem.n", "must be >= 3");
  require(p.mu > 0 && p.mu < p.n, "problem.mu", "must lie in (0, n)");
  require(p.gamma > 0 && std::isfinite(p.gamma), "problem.gamma", "must be positive");
  require(p.a > 0, "problem.a", "must be positive (inf removes the jump)");
  require(p.eps >= 0 && (std::isinf(p.a) || p.eps <= 0.5 * p.a), "problem.eps", "must lie in [0, a/2]");
  require(p.k > 0, "problem.k", "must be positive");
  require(p.lambda > 0 && std::isfinite(p.lambda), "problem.lambda", "must be positive");
  require(c.grid.m >= 16, "grid.m", "must be >= 16");
  require(c.grid.grading >= 1 && std::isfinite(c.grid.grading), "grid.grading", "must be >= 1");
  const auto& s = c.schedules;
  require(s.eps_levels >= 0 && s.eps_levels <= 50, "schedules.eps_levels", "must lie in [0, 50]");
  require(s.k0 > 0 && std::isfinite(s.k0), "schedules.k0", "must be positive");
  require(s.k_levels >= 1, "schedules.k_levels", "must be >= 1");
  for (std::size_t i = 0; i < s.lambdas.size(); ++i) {
    require(s.lambdas[i] > 0 && std::isfinite(s.lambdas[i]), "schedules.lambdas", "entries must be positive");
    require(i == 0 || s.lambdas[i] > s.lambdas[i - 1], "schedules.lambdas", "must be strictly increasing");
  }
  require(s.lambda_min > 0, "schedules.lambda_min", "must be positive");
  require(s.lambda_factor > 1, "schedules.lambda_factor", "must exceed 1");
  require(s.lambda_max > s.lambda_min && std::isfinite(s.lambda_max), "schedules.lambda_max",
          "must exceed lambda_min");
  require(s.meshes.size() >= 3, "schedules.meshes", "needs at least 3 meshes");
  for (std::size_t i = 0; i < s.meshes.size(); ++i)
    require(s.meshes[i] >= 16 && (i == 0 || s.meshes[i] > s.meshes[i - 1]), "schedules.meshes",
            "must be increasing and >= 16");
  require(!s.omegas.empty(), "schedules.omegas", "must not be empty");
  for (double w : s.omegas) require(w > 0, "schedules.omegas", "entries must be positive");
  require(s.bubble_eps.size() >= 2, "schedules.bubble_eps", "needs at least 2 entries");
  for (double e : s.bubble_eps) require(e > 0 && e < 1, "schedules.bubble_eps", "entries must lie in (0, 1)");
  const auto& t = c.tol;
  require(t.newton > 0, "tol.newton", "must be positive");
  require(t.cascade > 0, "tol.cascade", "must be positive");
  require(t.feasible_residual > 0, "tol.feasible_residual", "must be positive");
  require(t.bracket_rel > 0 && t.bracket_rel < 1, "tol.bracket_rel", "must lie in (0, 1)");
  require(t.window_lo > 0, "tol.window_lo", "must be positive");
  require(t.window_hi > t.window_lo && t.window_hi < 1, "tol.window_hi", "must lie in (window_lo, 1)");
  require(c.search.bubble_eps > 0 && c.search.bubble_eps < 1, "search.bubble_eps", "must lie in (0, 1)");
  require(c.search.eps_levels >= 0 && c.search.eps_levels <= 30, "search.eps_levels", "must lie in [0, 30]");
  require(c.search.directions >= 1, "search.directions", "must be >= 1");
  require(!c.out.empty(), "out", "must not be empty");
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  RunConfig cfg;
  for (const auto& [name, value] : j.items()) {
    const auto& table = keys();
    auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return k.name == name; });
    if (it == table.end()) throw ConfigError(name + ": unknown config key");
    it->set(cfg, value);
  }
  return cfg;
}

std::string config_to_json(const RunConfig& cfg) { return config_json(cfg).dump(2); }

RunConfig load_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("config: cannot open " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_hash(const RunConfig& cfg) {
  // Output location and cache do not change results.
  json j = config_json(cfg);
  j.erase("out");
  j.erase("kernel_cache");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

ProblemParams problem_params(const RunConfig& cfg) {
  ProblemParams pp;
  pp.n = cfg.problem.n;
  pp.mu = cfg.problem.mu;
  pp.sing = SingularParams{cfg.problem.gamma, cfg.problem.a, cfg.problem.eps, cfg.problem.k};
  pp.lambda = cfg.problem.lambda;
  pp.include_choquard = cfg.problem.include_choquard;
  return pp;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

fs::path make_run_dir(const RunConfig& cfg, const std::string& command) {
  const fs::path root(cfg.out);
  fs::create_directories(root);
  const std::string base = command + "-" + config_hash(cfg).substr(0, 8);
  for (int i = 0;; ++i) {
    const fs::path dir = root / (i == 0 ? base : base + "-" + std::to_string(i));
    if (fs::create_directory(dir)) return dir;
  }
}

void write_profile_csv(const fs::path& file, const Field& u, const ProblemParams& pp,
                       const ChoquardKernel* kernel) {
  const RadialGrid& g = *u.grid;
  const Eigen::VectorXd res = strong_residual(pp, g, kernel, u.values);
  const Eigen::VectorXd delta = g.boundary_distance();
  std::string text = "r,delta,u,residual\n";
  for (int i = 0; i < g.size(); ++i)
    text += format_double(g.radii()[i]) + "," + format_double(delta[i]) + "," + format_double(u.values[i]) + "," +
            format_double(res[i]) + "\n";
  write_text(file, text);
}

Profile read_profile_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("csv: cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line) || line != "r,delta,u,residual")
    throw ConfigError("csv: expected header r,delta,u,residual in " + file.string());
  Profile p;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    double v[4];
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3]) != 4)
      throw ConfigError("csv: malformed row '" + line + "'");
    p.r.push_back(v[0]);
    p.delta.push_back(v[1]);
    p.u.push_back(v[2]);
    p.residual.push_back(v[3]);
  }
  return p;
}

KernelPtr kernel_for(const RunConfig& cfg, const GridPtr& grid) {
  KernelOptions ko;
  if (!cfg.kernel_cache.empty()) ko.cache_dir = fs::path(cfg.kernel_cache);
  return assemble_kernel(grid, cfg.problem.mu, ko);
}

// ---------------------------------------------------------------- solve

RunResult cli_solve(const RunConfig& cfg) {
  Run run(cfg, "solve");
  const ProblemParams pp = problem_params(cfg);
  const GridPtr grid = build_grid(pp.n, cfg.grid.m, cfg.grid.grading);
  const KernelPtr kernel = pp.include_choquard ? kernel_for(cfg, grid) : nullptr;

  std::vector<CascadeLevel> levels;
  const SolveReport rep = cascade_to_limit(pp, grid, kernel.get(), cascade_options(cfg), &levels);

  ProblemParams last = pp;
  last.sing.k = kInf;
  if (!levels.empty()) last.sing.eps = levels.back().eps;
  if (rep.solution.values.size() == grid->size()) run.profile("solution.csv", rep.solution, last, kernel.get());

  json j = report_json(rep);
  json lv = json::array();
  for (const CascadeLevel& l : levels)
    lv.push_back({{"eps", l.eps},
                  {"delta", l.delta},
                  {"max_u", l.max_u},
                  {"boundary_exponent", nullable(l.boundary_exponent)},
                  {"status", to_string(l.status)}});
  j["eps_levels"] = lv;
  run.json_file("report.json", j);

  const bool ok = rep.converged();
  return run.finish(ok ? 0 : 1, to_string(rep.status),
                    ok ? "converged, max u = " + format_double(field_max(rep.solution))
                       : "solver failure: " + rep.message);
}

// ---------------------------------------------------------------- lambda sweep

double LambdaSweepResult::relative_width() const {
  if (!bracket_found()) return kInf;
  return (*infeasible_min - *feasible_max) / *feasible_max;
}

SweepRow classify_lambda(const RunConfig& cfg, const GridPtr& grid, const ChoquardKernel& kernel, double lambda,
                         const std::optional<Field>& continuation, int budget_scale, Field* solution) {
  ProblemParams pp = problem_params(cfg);
  pp.lambda = lambda;
  pp.include_choquard = true;
  pp.sing.k = kInf;

  NewtonOptions no;
  no.tol = cfg.tol.newton;
  no.max_iter = 300 * budget_scale;
  CascadeOptions co = cascade_options(cfg);
  co.newton = no;

  SweepRow row;
  row.lambda = lambda;
  const SolveReport local = solve_S_le(pp, grid, co);
  if (!local.converged()) {
    row.status = local.status;
    return row;
  }

  auto accept = [&](const SolveReport& rep) {
    row.status = rep.status;
    if (!rep.converged()) return false;
    const double res = scaled_residual(pp, *grid, &kernel, rep.solution.values).cwiseAbs().maxCoeff();
    row.residual = res;
    if (!(res <= cfg.tol.feasible_residual)) return false;
    const Eigen::VectorXd& u = rep.solution.values;
    row.feasible = true;
    row.energy = energy_J(pp, *grid, &kernel, u).total;
    row.min_u = u.minCoeff();
    row.max_u = u.maxCoeff();
    const LinearFit fit = boundary_exponent(rep.solution, window(cfg));
    row.boundary_exponent = fit.count >= 3 ? fit.slope : std::numeric_limits<double>::quiet_NaN();
    if (solution) *solution = rep.solution;
    return true;
  };

  std::vector<Eigen::VectorXd> starts{local.solution.values};
  if (continuation && continuation->values.size() == grid->size()) starts.push_back(continuation->values);
  std::mt19937_64 rng(cfg.seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(budget_scale)));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double top = local.solution.values.maxCoeff();
  for (int i = 0; i < 5; ++i) {
    const Eigen::VectorXd dir = random_positive_direction(*grid, rng());
    const double scale = 0.5 + unif(rng), amp = top * unif(rng);
    starts.push_back(scale * local.solution.values + (amp / dir.maxCoeff()) * dir);
  }
  for (const Eigen::VectorXd& s : starts)
    if (accept(newton_solve(pp, grid, &kernel, s, no))) return row;

  MonotoneOptions mo;
  mo.with_jump = true;
  mo.max_steps = 200 * budget_scale;
  mo.newton = no;
  const SolveReport picard = monotone_iteration(pp, grid, kernel, mo);
  if (picard.status != SolveStatus::diverged) {
    if (accept(newton_solve(pp, grid, &kernel, picard.solution.values, no))) return row;
    row.status = picard.status;
  } else {
    row.status = SolveStatus::diverged;
  }
  return row;
}

LambdaSweepResult sweep_lambda(const RunConfig& cfg, const GridPtr& grid, const ChoquardKernel& kernel) {
  LambdaSweepResult out;
  std::vector<std::optional<Field>> sols;
  auto classify = [&](double lambda, int budget, const std::optional<Field>& cont) {
    Field sol;
    SweepRow row = classify_lambda(cfg, grid, kernel, lambda, cont, budget, &sol);
    return std::make_pair(row, row.feasible ? std::optional<Field>(sol) : std::nullopt);
  };
  auto previous = [&](std::size_t i) -> std::optional<Field> {
    for (std::size_t k = i; k-- > 0;)
      if (sols[k]) return sols[k];
    return std::nullopt;
  };
  auto push = [&](double lambda) {
    auto [row, sol] = classify(lambda, 1, previous(out.rows.size()));
    out.rows.push_back(row);
    sols.push_back(std::move(sol));
  };

  // Points run one after another so each warm-starts from the last feasible one.
  if (!cfg.schedules.lambdas.empty()) {
    for (double l : cfg.schedules.lambdas) push(l);
  } else {
    int infeasible_run = 0;
    for (double l = cfg.schedules.lambda_min; l <= cfg.schedules.lambda_max * (1 + 1e-12);
         l *= cfg.schedules.lambda_factor) {
      push(l);
      infeasible_run = out.rows.back().feasible ? 0 : infeasible_run + 1;
      if (infeasible_run == 2) break;
    }
  }

  auto last_feasible = [&]() -> std::optional<std::size_t> {
    std::optional<std::size_t> idx;
    for (std::size_t i = 0; i < out.rows.size(); ++i)
      if (out.rows[i].feasible) idx = i;
    return idx;
  };

  // Infeasible points below a feasible one get one more try with a doubled budget.
  int smoothed = 0;
  if (auto lf = last_feasible()) {
    for (std::size_t i = 0; i < *lf; ++i) {
      if (out.rows[i].feasible) continue;
      out.raw_monotone = false;
      auto [row, sol] = classify(out.rows[i].lambda, 2, previous(i));
      row.resolved = true;
      if (!row.feasible) {
        // Smoothing: feasibility at a larger lambda implies it here.
        row.feasible = true;
        ++smoothed;
      }
      out.rows[i] = row;
      sols[i] = std::move(sol);
    }
  }

  const auto lf = last_feasible();
  if (!lf) {
    out.note = "no feasible lambda on the grid, decrease lambda_min";
    return out;
  }
  if (*lf + 1 == out.rows.size()) {
    out.feasible_max = out.rows[*lf].lambda;
    out.note = "bracket not found, increase range";
    return out;
  }

  double lo = out.rows[*lf].lambda, hi = out.rows[*lf + 1].lambda;
  std::optional<Field> cont = sols[*lf];
  while ((hi - lo) / lo > cfg.tol.bracket_rel) {
    const double mid = 0.5 * (lo + hi);
    auto [row, sol] = classify(mid, 1, cont);
    if (row.feasible) {
      lo = mid;
      cont = std::move(sol);
    } else {
      hi = mid;
    }
    out.rows.push_back(row);
  }
  std::stable_sort(out.rows.begin(), out.rows.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.lambda < b.lambda; });
  out.feasible_max = lo;
  out.infeasible_min = hi;
  out.note = "numerical proxy for the extremal parameter: bracket depends on grid, eps and solver budget";
  if (!out.raw_monotone)
    out.note += "; raw statuses were non-monotone, " + std::to_string(smoothed) +
                " point(s) smoothed after re-solve (grid-resolution caveat)";
  return out;
}

RunResult cli_sweep_lambda(const RunConfig& cfg) {
  Run run(cfg, "sweep-lambda");
  const GridPtr grid = build_grid(cfg.problem.n, cfg.grid.m, cfg.grid.grading);
  const KernelPtr kernel = kernel_for(cfg, grid);
  const LambdaSweepResult res = sweep_lambda(cfg, grid, *kernel);

  std::string csv = "lambda,feasible,status,residual,energy,min_u,max_u,boundary_exponent,resolved\n";
  for (const SweepRow& r : res.rows) {
    csv += format_double(r.lambda) + "," + (r.feasible ? "1" : "0") + "," + to_string(r.status) + "," +
           format_double(r.residual) + "," + format_double(r.energy) + "," + format_double(r.min_u) + "," +
           format_double(r.max_u) + "," + format_double(r.boundary_exponent) + "," + (r.resolved ? "1" : "0") +
           "\n";
  }
  write_text(run.dir / "sweep.csv", csv);
  run.files.push_back("sweep.csv");

  json j;
  j["feasible_max"] = res.feasible_max ? json(*res.feasible_max) : json(nullptr);
  j["infeasible_min"] = res.infeasible_min ? json(*res.infeasible_min) : json(nullptr);
  j["relative_width"] = nullable(res.relative_width());
  j["raw_monotone"] = res.raw_monotone;
  j["eps"] = cfg.problem.eps;
  j["note"] = res.note;
  j["points"] = res.rows.size();
  run.json_file("report.json", j);

  if (!res.bracket_found()) return run.finish(1, "no_bracket", res.note);
  return run.finish(0, "bracketed",
                    "extremal lambda in [" + format_double(*res.feasible_max) + ", " +
                        format_double(*res.infeasible_min) + "] (" + res.note + ")");
}

// ---------------------------------------------------------------- boundary fit

double predicted_boundary_exponent(double gamma) { return gamma <= 1.0 ? 1.0 : 2.0 / (gamma + 1.0); }

BoundaryFitReport boundary_fit(const Profile& p, double gamma, const BoundaryWindow& w) {
  std::vector<double> x, y;
  double rmin = kInf, rmax = 0.0;
  for (std::size_t i = 0; i < p.delta.size(); ++i) {
    const double d = p.delta[i];
    if (d < w.lo || d > w.hi || !(p.u[i] > 0)) continue;
    x.push_back(d);
    y.push_back(p.u[i]);
    if (gamma == 1.0) {
      const double ratio = p.u[i] / (d * std::sqrt(-std::log(d)));
      rmin = std::min(rmin, ratio);
      rmax = std::max(rmax, ratio);
    }
  }
  BoundaryFitReport rep;
  rep.fit = loglog_fit(x, y);
  rep.predicted = predicted_boundary_exponent(gamma);
  if (gamma == 1.0 && !x.empty()) rep.log_ratio_spread = rmax / rmin - 1.0;
  rep.low_r2 = rep.fit.r2 < 0.99;
  return rep;
}

RunResult cli_boundary_fit(const RunConfig& cfg, const fs::path& csv) {
  const Profile p = read_profile_csv(csv);
  Run run(cfg, "boundary-fit");
  const BoundaryFitReport rep = boundary_fit(p, cfg.problem.gamma, window(cfg));
  json j;
  j["input"] = csv.string();
  j["window"] = {cfg.tol.window_lo, cfg.tol.window_hi};
  j["exponent"] = rep.fit.slope;
  j["r2"] = rep.fit.r2;
  j["points"] = rep.fit.count;
  j["predicted"] = rep.predicted;
  j["log_ratio_spread"] = rep.log_ratio_spread ? json(*rep.log_ratio_spread) : json(nullptr);
  j["warning"] = rep.low_r2 ? "fit R^2 below 0.99" : "";
  run.json_file("report.json", j);
  if (rep.fit.count < 3) return run.finish(1, "unresolved", "fewer than 3 nodes in the boundary window");
  std::string s = "exponent " + format_double(rep.fit.slope) + " (predicted " + format_double(rep.predicted) + ")";
  if (rep.low_r2) s += "; warning: R^2 = " + format_double(rep.fit.r2) + " < 0.99";
  return run.finish(0, "ok", s);
}

// ---------------------------------------------------------------- regularity

RegularityReport regularity_probe(const RunConfig& cfg) {
  RegularityReport rep;
  rep.meshes = cfg.schedules.meshes;
  rep.predicted_threshold = (cfg.problem.gamma + 1.0) / 4.0;
  const ProblemParams pp = problem_params(cfg);
  const CascadeOptions co = cascade_options(cfg);

  for (double w : cfg.schedules.omegas) rep.rows.push_back(RegularityRow{w, {}, 0.0, false});
  for (int m : rep.meshes) {
    const GridPtr grid = build_grid(pp.n, m, cfg.grid.grading);
    const KernelPtr kernel = pp.include_choquard ? kernel_for(cfg, grid) : nullptr;
    const SolveReport sol = cascade_to_limit(pp, grid, kernel.get(), co);
    if (!sol.converged()) throw std::runtime_error("regularity probe: solve failed at m = " + std::to_string(m));
    for (RegularityRow& row : rep.rows)
      row.energies.push_back(grid->dirichlet_form(sol.solution.values.array().pow(row.omega).matrix()));
  }
  for (RegularityRow& row : rep.rows) {
    std::vector<double> ms, inc;
    for (std::size_t j = 0; j + 1 < row.energies.size(); ++j) {
      ms.push_back(rep.meshes[j + 1]);
      inc.push_back(std::abs(row.energies[j + 1] - row.energies[j]));
    }
    row.slope = loglog_fit(ms, inc).slope;
    row.bounded = row.slope < kBoundedSlope;
  }
  // Smallest omega from which every larger one on the ladder is bounded.
  std::vector<const RegularityRow*> sorted;
  for (const RegularityRow& r : rep.rows) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->omega < b->omega; });
  for (auto it = sorted.rbegin(); it != sorted.rend() && (*it)->bounded; ++it)
    rep.empirical_threshold = (*it)->omega;
  return rep;
}

RunResult cli_regularity_probe(const RunConfig& cfg) {
  Run run(cfg, "regularity-probe");
  const RegularityReport rep = regularity_probe(cfg);
  json rows = json::array();
  for (const RegularityRow& r : rep.rows)
    rows.push_back({{"omega", r.omega},
                    {"energies", r.energies},
                    {"increment_slope", r.slope},
                    {"class", r.bounded ? "bounded" : "diverging"}});
  json j;
  j["meshes"] = rep.meshes;
  j["rows"] = rows;
  j["bounded_below_slope"] = kBoundedSlope;
  j["predicted_threshold"] = rep.predicted_threshold;
  j["empirical_threshold"] = rep.empirical_threshold ? json(*rep.empirical_threshold) : json(nullptr);
  run.json_file("report.json", j);
  return run.finish(0, "ok",
                    "empirical threshold " +
                        (rep.empirical_threshold ? format_double(*rep.empirical_threshold) : std::string("none")) +
                        ", predicted " + format_double(rep.predicted_threshold));
}

// ---------------------------------------------------------------- bubbles

BubbleReport bubble_check(const RunConfig& cfg, const GridPtr& grid, const ChoquardKernel& kernel) {
  const int n = cfg.problem.n;
  const double mu = cfg.problem.mu;
  BubbleReport rep;
  rep.target = std::pow(sharp_constants(n, mu).S_HL, (2.0 * n - mu) / (n - mu + 2.0));
  rep.expected_dirichlet = n - 2.0;
  rep.expected_hl = n;
  rep.expected_cross = 0.5 * (n - 2.0);

  const double p = kernel.exponent();
  const Eigen::VectorXd v = first_eigenpair(grid).e1.values;
  std::vector<double> eps, ed, eh, cr;
  for (double e : cfg.schedules.bubble_eps) {
    BubbleParams bp;
    bp.eps = e;
    const Eigen::VectorXd w = talenti_bubble(grid, mu, bp).values;
    BubbleRow row;
    row.eps = e;
    row.dirichlet = grid->dirichlet_form(w);
    row.hl = kernel.hl_energy(w);
    const Eigen::VectorXd wp = w.array().pow(p).matrix();
    const Eigen::VectorXd wv = (w.array().pow(p - 1.0) * v.array()).matrix();
    row.cross = kernel.form(wv, wp);
    rep.rows.push_back(row);
    eps.push_back(e);
    ed.push_back(std::abs(row.dirichlet - rep.target));
    eh.push_back(std::abs(row.hl - rep.target));
    cr.push_back(row.cross);
  }
  rep.slope_dirichlet = loglog_fit(eps, ed).slope;
  rep.slope_hl = loglog_fit(eps, eh).slope;
  rep.slope_cross = loglog_fit(eps, cr).slope;
  auto within = [](double s, double e) { return std::abs(s - e) <= 0.3 * e; };
  rep.pass_dirichlet = within(rep.slope_dirichlet, rep.expected_dirichlet);
  rep.pass_hl = within(rep.slope_hl, rep.expected_hl);
  rep.pass_cross = within(rep.slope_cross, rep.expected_cross);
  return rep;
}

RunResult cli_bubble_check(const RunConfig& cfg) {
  Run run(cfg, "bubble-check");
  const GridPtr grid = build_grid(cfg.problem.n, cfg.grid.m, cfg.grid.grading);
  const KernelPtr kernel = kernel_for(cfg, grid);
  const BubbleReport rep = bubble_check(cfg, grid, *kernel);
  json rows = json::array();
  for (const BubbleRow& r : rep.rows)
    rows.push_back({{"eps", r.eps}, {"dirichlet", r.dirichlet}, {"hl", r.hl}, {"cross", r.cross}});
  json j;
  j["rows"] = rows;
  j["target"] = rep.target;
  j["slopes"] = {{"dirichlet_error", rep.slope_dirichlet}, {"hl_error", rep.slope_hl}, {"cross", rep.slope_cross}};
  j["expected"] = {
      {"dirichlet_error", rep.expected_dirichlet}, {"hl_error", rep.expected_hl}, {"cross", rep.expected_cross}};
  j["pass"] = {{"dirichlet_error", rep.pass_dirichlet}, {"hl_error", rep.pass_hl}, {"cross", rep.pass_cross}};
  run.json_file("report.json", j);
  const bool all = rep.pass_dirichlet && rep.pass_hl && rep.pass_cross;
  return run.finish(0, all ? "pass" : "fail",
                    "slopes " + format_double(rep.slope_dirichlet) + ", " + format_double(rep.slope_hl) + ", " +
                        format_double(rep.slope_cross));
}

// ---------------------------------------------------------------- second solution

MpSearchReport mp_search(const RunConfig& cfg, const GridPtr& grid, const ChoquardKernel& kernel) {
  ProblemParams pp = problem_params(cfg);
  pp.include_choquard = true;
  pp.sing.k = kInf;
  if (!(pp.sing.gamma < 3.0) || !(pp.mu < std::min(4.0, static_cast<double>(pp.n))))
    throw ConfigError("problem.gamma: second-solution search needs gamma < 3 and mu < min(4, n)");

  NewtonOptions no;
  no.tol = cfg.tol.newton;
  MpSearchReport rep;
  rep.first = solve_P_le(pp, grid, kernel, std::nullopt, no);
  if (!rep.first.converged()) {
    rep.second.report.message = "first solution failed: " + rep.first.message;
    return rep;
  }
  const Eigen::VectorXd& v = rep.first.solution.values;

  SphereOptions so;
  so.starts = 8;
  so.seed = cfg.seed;
  rep.kappa0 = find_kappa0(pp, kernel, v, 20, cfg.seed + 10);
  if (rep.kappa0)
    for (int j = 0; j < 4; ++j) rep.ladder.push_back(za_mp_classify(pp, kernel, v, std::ldexp(*rep.kappa0, -j), so));

  SecondSolutionOptions opts;
  opts.bubble.eps = cfg.search.bubble_eps;
  opts.eps_levels = cfg.search.eps_levels;
  opts.newton = no;
  opts.sphere = so;
  rep.second = second_solution_search(pp, grid, kernel, rep.first.solution, opts);
  if (!rep.second.report.converged()) return rep;

  ProblemParams exact = pp;
  exact.sing.eps = 0.0;
  rep.probe_min = kInf;
  for (int d = 0; d < cfg.search.directions; ++d) {
    const Eigen::VectorXd psi = random_positive_direction(*grid, cfg.seed * 1000 + d);
    ProbeOptions po;
    po.seed = cfg.seed + d;
    rep.probe_min = std::min(
        rep.probe_min, generalized_derivative_probe(exact, kernel, rep.second.first.values, rep.second.w, psi, po));
  }
  std::vector<double> hs, frac;
  for (double h : {0.1, 0.05, 0.025, 0.0125}) {
    hs.push_back(h);
    frac.push_back(level_set_fraction(rep.second.report.solution, pp.sing.a, h));
  }
  rep.level_set_slope = loglog_fit(hs, frac).slope;
  rep.exponent_first = boundary_exponent(rep.second.first, window(cfg)).slope;
  rep.exponent_second = boundary_exponent(rep.second.report.solution, window(cfg)).slope;
  // O(h): a level set that is empty at these h also qualifies.
  const bool level_ok = std::all_of(frac.begin(), frac.end(), [](double f) { return f == 0.0; }) ||
                        rep.level_set_slope >= 0.8;
  rep.verified = rep.second.distinct && rep.second.distance > 10.0 * cfg.tol.newton && rep.probe_min >= -1e-4 &&
                 rep.second.energy.total < rep.second.path.threshold && level_ok;
  return rep;
}

RunResult cli_mp_search(const RunConfig& cfg) {
  Run run(cfg, "mp-search");
  const GridPtr grid = build_grid(cfg.problem.n, cfg.grid.m, cfg.grid.grading);
  const KernelPtr kernel = kernel_for(cfg, grid);
  const MpSearchReport rep = mp_search(cfg, grid, *kernel);

  json j;
  j["first"] = report_json(rep.first);
  j["second"] = report_json(rep.second.report);
  j["kappa0"] = rep.kappa0 ? json(*rep.kappa0) : json(nullptr);
  json ladder = json::array();
  for (const SphereResult& s : rep.ladder)
    ladder.push_back({{"kappa", s.kappa}, {"geometry", to_string(s.geometry)}, {"infimum", s.infimum}});
  j["kappa_ladder"] = ladder;

  const bool found = rep.second.report.converged();
  if (found) {
    ProblemParams pp = problem_params(cfg);
    pp.include_choquard = true;
    pp.sing.k = kInf;
    pp.sing.eps = rep.second.eps;
    run.profile("first.csv", rep.second.first, pp, kernel.get());
    run.profile("second.csv", rep.second.report.solution, pp, kernel.get());
    j["branch"] = to_string(rep.second.branch);
    j["eps"] = rep.second.eps;
    j["distance"] = rep.second.distance;
    j["energy_first"] = energy_J(pp, *grid, kernel.get(), rep.second.first.values).total;
    j["energy_second"] = energy_J(pp, *grid, kernel.get(), rep.second.report.solution.values).total;
    j["translated_energy"] = rep.second.energy.total;
    j["path_max"] = rep.second.path.max_energy;
    j["threshold"] = rep.second.path.threshold;
    j["c0_upper_bound_below_threshold"] = rep.second.path.below_threshold();
    j["probe_min"] = rep.probe_min;
    j["level_set_slope"] = rep.level_set_slope;
    j["boundary_exponent_first"] = rep.exponent_first;
    j["boundary_exponent_second"] = rep.exponent_second;
    j["verified"] = rep.verified;
  }
  run.json_file("report.json", j);
  if (!found) return run.finish(1, "not_converged", "no second solution: " + rep.second.report.message);
  return run.finish(rep.verified ? 0 : 1, rep.verified ? "verified" : "unverified",
                    std::string(to_string(rep.second.branch)) + " branch, distance " +
                        format_double(rep.second.distance) + ", energy " + format_double(rep.second.energy.total) +
                        " < threshold " + format_double(rep.second.path.threshold));
}

}  // namespace choquard
