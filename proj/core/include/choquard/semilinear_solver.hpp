#pragma once

#include "choquard/nonlinearity.hpp"
#include "choquard/radial_grid.hpp"
#include "choquard/riesz_kernel.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace choquard {

struct ProblemParams {
  int n = 3;
  double mu = 1.0;
  SingularParams sing;
  double lambda = 0.1;
  /// false: purely singular problem; true: with the Choquard term.
  bool include_choquard = false;
};

void validate(const ProblemParams& pp);

enum class SolveStatus { converged, diverged, max_iter };

const char* to_string(SolveStatus s);

struct SolveReport {
  Field solution;
  /// Scaled residual per Newton or outer iteration.
  std::vector<double> residual_history;
  SolveStatus status = SolveStatus::diverged;
  int newton_iters = 0;
  std::map<std::string, double> diagnostics;
  std::string message;

  bool converged() const { return status == SolveStatus::converged; }
};

struct NewtonOptions {
  /// Convergence threshold on the scaled residual
  /// max_i |R_i| / (sum of magnitudes of the terms in R_i).
  double tol = 1e-10;
  int max_iter = 300;
  double min_step = 1e-12;
  /// Positivity projection.
  double floor = 1e-14;
  /// Sup norm beyond which the iteration is declared divergent.
  double blowup = 1e6;
};

/// Weak-form residual R(u) = K u - lambda V g(u) - lambda u^{p-1} (M u^p) - source.
/// The Choquard part is included when kernel is non-null and
/// pp.include_choquard is set.
Eigen::VectorXd weak_residual(const ProblemParams& pp, const RadialGrid& grid,
                              const ChoquardKernel* kernel, const Eigen::VectorXd& u,
                              const Eigen::VectorXd* source = nullptr);

/// Strong residual R(u)_i / V_i, i.e. -Lap_h u - lambda f(u).
Eigen::VectorXd strong_residual(const ProblemParams& pp, const RadialGrid& grid,
                                const ChoquardKernel* kernel, const Eigen::VectorXd& u);

/// Per-node relative balance |R_i| / (|flux terms| + |source terms|).
Eigen::VectorXd scaled_residual(const ProblemParams& pp, const RadialGrid& grid,
                                const ChoquardKernel* kernel, const Eigen::VectorXd& u,
                                const Eigen::VectorXd* source = nullptr);

/// Damped Newton with backtracking and positivity projection.
SolveReport newton_solve(const ProblemParams& pp, const GridPtr& grid, const ChoquardKernel* kernel,
                         const Eigen::VectorXd& init, const NewtonOptions& opts = {},
                         const Eigen::VectorXd* source = nullptr);

/// Largest theta with lambda1 theta |e1| <= lambda g(theta |e1|), so that
/// theta e1 is a subsolution of the local problem. nullopt if none exists.
std::optional<double> subsolution_theta(const ProblemParams& pp, const EigenPair& ep);

/// Solution of -Lap_h z = 1.
Field torsion_function(const GridPtr& grid);

/// Local problem with fixed k (pp.sing.k finite or infinite).
SolveReport solve_S_lek(const ProblemParams& pp, const GridPtr& grid,
                        const std::optional<Field>& init = std::nullopt,
                        const NewtonOptions& opts = {});

struct CascadeOptions {
  double k0 = 10.0;
  int max_levels = 40;
  /// Interior sup-norm tolerance between successive levels.
  double tol_cascade = 1e-6;
  /// Interior region is r <= 1 - boundary_layer.
  double boundary_layer = 0.1;
  /// Dyadic eps schedule eps_j = (a/2) 2^{-j}, j = 0..eps_levels.
  int eps_levels = 12;
  NewtonOptions newton;
};

/// k -> infinity limit of solve_S_lek: doubling ladder from k0 with warm
/// starts, finished by a solve of the unshifted problem.
SolveReport solve_S_le(const ProblemParams& pp, const GridPtr& grid, const CascadeOptions& opts = {},
                       std::vector<Field>* ladder = nullptr);

/// Solution of the purely singular problem -Lap u = lambda u^{-gamma} (no jump).
SolveReport solve_pure_singular(const ProblemParams& pp, const GridPtr& grid,
                                const CascadeOptions& opts = {});

/// Full problem with the Choquard term. Default init: the local solution,
/// which is a subsolution. Falls back to frozen-potential outer iterations.
SolveReport solve_P_le(const ProblemParams& pp, const GridPtr& grid, const ChoquardKernel& kernel,
                       const std::optional<Field>& init = std::nullopt,
                       const NewtonOptions& opts = {});

struct MonotoneOptions {
  int max_steps = 200;
  double tol = 1e-12;
  double bracket_slack = 1e-8;
  /// false: the scheme with the pure power u^{-gamma} started from w_lambda
  /// and bracketed by w_lambda + z. true: keeps the jump term of pp and starts
  /// from the local solution (no upper bracket).
  bool with_jump = false;
  NewtonOptions newton;
};

/// Frozen-potential monotone scheme; every step is a local Newton solve.
SolveReport monotone_iteration(const ProblemParams& pp, const GridPtr& grid,
                               const ChoquardKernel& kernel, const MonotoneOptions& opts = {},
                               std::vector<Field>* iterates = nullptr);

struct ComparisonReport {
  bool sub_ok = false;
  bool super_ok = false;
  bool ordered = false;
  /// max(sub - super), positive when ordering fails
  double max_violation = 0.0;
  double sub_residual = 0.0;
  double super_residual = 0.0;
  bool pass() const { return sub_ok && super_ok && ordered; }
};

/// Verifies sub/super residual signs (relative tolerance 1e-6) and sub <= super + 1e-8.
ComparisonReport comparison_check(const Field& sub, const Field& super, const ProblemParams& pp,
                                  const ChoquardKernel* kernel = nullptr, double residual_tol = 1e-6,
                                  double order_tol = 1e-8);

struct CascadeLevel {
  double eps = 0.0;
  double delta = 0.0;  ///< sup-norm change from the previous level
  double max_u = 0.0;
  double boundary_exponent = 0.0;
  SolveStatus status = SolveStatus::diverged;
};

/// Drives eps -> 0 over the dyadic schedule with warm starts.
SolveReport cascade_to_limit(const ProblemParams& pp, const GridPtr& grid,
                             const ChoquardKernel* kernel, const CascadeOptions& opts = {},
                             std::vector<CascadeLevel>* levels = nullptr);

}  // namespace choquard
