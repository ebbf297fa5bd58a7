#pragma once

#include "choquard/fitting.hpp"
#include "choquard/semilinear_solver.hpp"
#include "choquard/variational.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace choquard {

/// Everything a driver needs. Serialized as flat JSON with dotted keys that
/// mirror the field paths ("problem.gamma", "grid.m", ...).
struct RunConfig {
  struct Problem {
    int n = 3;
    double mu = 1.0;
    double gamma = 0.5;
    double a = 1.0;
    double eps = 0.05;
    double k = std::numeric_limits<double>::infinity();
    double lambda = 0.1;
    bool include_choquard = true;
  } problem;
  struct Grid {
    int m = 200;
    double grading = 2.0;
  } grid;
  struct Schedules {
    /// eps_j = (a/2) 2^-j, j <= eps_levels
    int eps_levels = 12;
    double k0 = 10.0;
    int k_levels = 40;
    /// Explicit lambda grid for sweeps; empty means geometric from lambda_min.
    std::vector<double> lambdas;
    double lambda_min = 1e-3;
    double lambda_factor = 2.0;
    double lambda_max = 1e3;
    /// mesh ladder of the regularity probe
    std::vector<int> meshes{200, 400, 800, 1600};
    std::vector<double> omegas{1.0, 1.2};
    std::vector<double> bubble_eps{0.2, 0.1, 0.05, 0.025};
  } schedules;
  struct Tolerances {
    double newton = 1e-10;
    double cascade = 1e-6;
    double feasible_residual = 1e-6;
    double bracket_rel = 0.01;
    double window_lo = 1e-5;
    double window_hi = 1e-3;
  } tol;
  struct Search {
    double bubble_eps = 0.05;
    int eps_levels = 8;
    int directions = 50;
  } search;
  std::uint64_t seed = 1;
  std::string out = "runs";
  /// Kernel cache directory; empty disables caching.
  std::string kernel_cache;
};

/// Throws ConfigError whose message starts with the dotted key at fault.
void validate(const RunConfig& cfg);

/// Flat dotted-key JSON. Unknown keys are rejected by name.
RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& file);

/// Hex FNV-1a of the canonical serialization.
std::string config_hash(const RunConfig& cfg);

ProblemParams problem_params(const RunConfig& cfg);

/// "%.17g"
std::string format_double(double x);

/// Creates <out>/<command>-<hash8>, with -1, -2, ... appended if taken.
std::filesystem::path make_run_dir(const RunConfig& cfg, const std::string& command);

/// Rows r, delta, u, residual with the strong residual of pp.
void write_profile_csv(const std::filesystem::path& file, const Field& u, const ProblemParams& pp,
                       const ChoquardKernel* kernel);

struct Profile {
  std::vector<double> r, delta, u, residual;
};
Profile read_profile_csv(const std::filesystem::path& file);

struct RunResult {
  int exit_code = 0;
  std::filesystem::path dir;
  std::string summary;
};

RunResult cli_solve(const RunConfig& cfg);

struct SweepRow {
  double lambda = 0.0;
  bool feasible = false;
  SolveStatus status = SolveStatus::diverged;
  double residual = 0.0;
  double energy = 0.0;
  double min_u = 0.0;
  double max_u = 0.0;
  double boundary_exponent = 0.0;
  /// classified again with a doubled budget during smoothing
  bool resolved = false;
};

struct LambdaSweepResult {
  std::vector<SweepRow> rows;
  std::optional<double> feasible_max;
  std::optional<double> infeasible_min;
  bool raw_monotone = true;
  std::string note;
  bool bracket_found() const { return feasible_max && infeasible_min; }
  double relative_width() const;
};

/// Feasibility of (P_{lambda,eps}) at the config eps: Newton from the local
/// solution, the continuation guess and random positive fields, then the
/// frozen-potential scheme; infeasible if all fail to reach tol.feasible_residual.
SweepRow classify_lambda(const RunConfig& cfg, const GridPtr& grid, const ChoquardKernel& kernel, double lambda,
                         const std::optional<Field>& continuation, int budget_scale = 1, Field* solution = nullptr);

LambdaSweepResult sweep_lambda(const RunConfig& cfg, const GridPtr& grid, const ChoquardKernel& kernel);
RunResult cli_sweep_lambda(const RunConfig& cfg);

struct BoundaryFitReport {
  LinearFit fit;
  double predicted = 0.0;
  /// gamma = 1 only: spread of u / (delta sqrt(-log delta)) in the window
  std::optional<double> log_ratio_spread;
  bool low_r2 = false;
};

double predicted_boundary_exponent(double gamma);
BoundaryFitReport boundary_fit(const Profile& p, double gamma, const BoundaryWindow& w);
RunResult cli_boundary_fit(const RunConfig& cfg, const std::filesystem::path& csv);

struct RegularityRow {
  double omega = 0.0;
  std::vector<double> energies;  ///< one per mesh
  double slope = 0.0;            ///< log-log slope of successive increments
  bool bounded = false;
};

struct RegularityReport {
  std::vector<int> meshes;
  std::vector<RegularityRow> rows;
  double predicted_threshold = 0.0;
  std::optional<double> empirical_threshold;
};

/// Increments below this log-log slope count as converging.
inline constexpr double kBoundedSlope = -0.05;

RegularityReport regularity_probe(const RunConfig& cfg);
RunResult cli_regularity_probe(const RunConfig& cfg);

struct BubbleRow {
  double eps = 0.0;
  double dirichlet = 0.0;
  double hl = 0.0;
  double cross = 0.0;
};

struct BubbleReport {
  std::vector<BubbleRow> rows;
  double target = 0.0;  ///< S_HL^{(2n-mu)/(n-mu+2)}
  double slope_dirichlet = 0.0;
  double slope_hl = 0.0;
  double slope_cross = 0.0;
  double expected_dirichlet = 0.0;
  double expected_hl = 0.0;
  double expected_cross = 0.0;
  bool pass_dirichlet = false;
  bool pass_hl = false;
  bool pass_cross = false;
};

/// Cross term uses v = e1 of the grid as the fixed positive field.
BubbleReport bubble_check(const RunConfig& cfg, const GridPtr& grid, const ChoquardKernel& kernel);
RunResult cli_bubble_check(const RunConfig& cfg);

struct MpSearchReport {
  SolveReport first;
  SecondSolution second;
  std::vector<SphereResult> ladder;
  std::optional<double> kappa0;
  double probe_min = 0.0;
  double level_set_slope = 0.0;
  double exponent_first = 0.0;
  double exponent_second = 0.0;
  bool verified = false;
};

MpSearchReport mp_search(const RunConfig& cfg, const GridPtr& grid, const ChoquardKernel& kernel);
RunResult cli_mp_search(const RunConfig& cfg);

/// Shared kernel construction honoring cfg.kernel_cache.
KernelPtr kernel_for(const RunConfig& cfg, const GridPtr& grid);

}  // namespace choquard
