#pragma once

#include "choquard/riesz_kernel.hpp"
#include "choquard/semilinear_solver.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace choquard {

/// total = dirichlet - singular_primitive - choquard - linear_coupling.
struct EnergyBreakdown {
  double dirichlet = 0.0;
  double singular_primitive = 0.0;
  double choquard = 0.0;
  double linear_coupling = 0.0;
  double total = 0.0;
  /// false when the primitive sum is not finite.
  bool finite = true;
};

/// J(u) = 1/2 u^T K u - lambda sum V H(u) - lambda/(2p) ||u||_HL^{2p}.
/// regularized selects H_eps (pp.sing.eps), otherwise the exact jump.
/// The Choquard term is dropped when kernel is null or pp.include_choquard is off.
EnergyBreakdown energy_J(const ProblemParams& pp, const RadialGrid& grid, const ChoquardKernel* kernel,
                         const Eigen::VectorXd& u, bool regularized = true);

/// Translated functional around a first solution v:
/// G(w) = 1/2 w^T K w - lambda sum V F(v, w)
///        - lambda/(2p) (HL(v + w) - HL(v)) + lambda (v^{p-1} w)^T M v^p.
/// w is used through its positive part.
EnergyBreakdown energy_G(const ProblemParams& pp, const ChoquardKernel& kernel, const Eigen::VectorXd& v,
                         const Eigen::VectorXd& w);

/// Gradient of G in coordinates (dual vector, same units as the weak residual).
Eigen::VectorXd gradient_G(const ProblemParams& pp, const ChoquardKernel& kernel, const Eigen::VectorXd& v,
                           const Eigen::VectorXd& w);

/// Energy norm (w^T K w)^{1/2}.
double energy_norm(const RadialGrid& grid, const Eigen::VectorXd& w);

/// Smooth random nonnegative field K^{-1}(V xi), xi uniform on [0,1), unit energy norm.
Eigen::VectorXd random_positive_direction(const RadialGrid& grid, std::uint64_t seed);

struct ProbeOptions {
  int h_samples = 20;
  double h_max = 1e-3;
  int t_min_exp = 4;   ///< t ladder 2^-t_min_exp ...
  int t_max_exp = 14;  ///< ... down to 2^-t_max_exp
  std::uint64_t seed = 1;
};

/// Estimate of the Clarke derivative G^0(w; psi): max over sampled h
/// (including 0) and consecutive ladder pairs (t, t/2) of 2 q(t/2) - q(t),
/// where q(t) = (G(w + h + t psi) - G(w + h)) / t.
double generalized_derivative_probe(const ProblemParams& pp, const ChoquardKernel& kernel,
                                    const Eigen::VectorXd& v, const Eigen::VectorXd& w,
                                    const Eigen::VectorXd& psi, const ProbeOptions& opts = {});

enum class Geometry { zero_altitude, mountain_pass };

const char* to_string(Geometry g);

struct SphereOptions {
  int starts = 20;
  int max_iter = 200;
  double tol_za = 1e-6;
  std::uint64_t seed = 7;
};

struct SphereResult {
  Geometry geometry = Geometry::mountain_pass;
  double kappa = 0.0;
  /// Estimated inf of G on {||w|| = kappa, w >= 0}.
  double infimum = 0.0;
  /// Best start energy before descent (infimum never exceeds it).
  double best_start = 0.0;
  /// infimum for MP, 0 for ZA.
  double gap = 0.0;
  Eigen::VectorXd minimizer;
};

/// Projected-gradient minimization of G on the positive part of the sphere.
SphereResult za_mp_classify(const ProblemParams& pp, const ChoquardKernel& kernel, const Eigen::VectorXd& v,
                            double kappa, const SphereOptions& opts = {});

/// Largest dyadic radius 2^j (j from -12 to 4) below which all random
/// directions have nonnegative energy. nullopt if even 2^-12 fails.
std::optional<double> find_kappa0(const ProblemParams& pp, const ChoquardKernel& kernel,
                                  const Eigen::VectorXd& v, int directions = 20, std::uint64_t seed = 11);

struct PathProbe {
  Eigen::VectorXd direction;
  double R = 0.0;
  std::vector<std::pair<double, double>> samples;
  double max_energy = 0.0;
  double argmax_t = 0.0;
  /// 1/2 ((n-mu+2)/(2n-mu)) S_HL^{(2n-mu)/(n-mu+2)} / lambda^{(n-2)/(n-mu+2)}
  double threshold = 0.0;
  bool below_threshold() const { return max_energy < threshold; }
};

/// Compactness threshold for the translated functional.
double critical_level(int n, double mu, double lambda);

struct PathOptions {
  int samples = 200;
  /// t_k = (k/(samples-1))^t_power; 2 samples the same path as t -> t^2.
  double t_power = 1.0;
  double R_start = 1.0;
  int max_doublings = 30;
};

/// Straight path t R0 w_eps with R0 found by doubling until G(R w_eps) < 0.
PathProbe mp_path_search(const ProblemParams& pp, const ChoquardKernel& kernel, const Eigen::VectorXd& v,
                         const BubbleParams& bp, const PathOptions& opts = {});

struct SecondSolutionOptions {
  BubbleParams bubble;
  PathOptions path;
  SphereOptions sphere;
  NewtonOptions newton;
  /// Ray-max / transverse-min descent before the Newton polish (0 disables).
  int minimax_iter = 300;
  /// Stop once the transverse gradient norm drops below this.
  double minimax_tol = 1e-3;
  /// Saddle-seeking restarts at these multiples of the path argmax.
  std::vector<double> restart_scales{1.0, 0.75, 1.25, 0.5, 1.5, 2.0};
  /// Follow the branch to eps_j = eps 2^-j, j <= eps_levels (0: stay at pp.sing.eps).
  int eps_levels = 0;
};

struct SecondSolution {
  SolveReport report;  ///< solution holds u2 = v + w
  /// First solution at the final eps (equals the input unless eps was refined).
  Field first;
  Eigen::VectorXd w;
  Geometry branch = Geometry::mountain_pass;
  PathProbe path;
  /// ||u2 - v||_inf
  double distance = 0.0;
  EnergyBreakdown energy;
  /// eps of the problem u2 solves
  double eps = 0.0;
  bool distinct = false;
};

/// Locates a critical point w != 0 of G (hence a second solution v + w).
/// MP branch: starting from the bubble direction of mp_path_search, minimize
/// the ray maximum max_t G(t d) over directions d, then polish with Newton;
/// plain Newton restarts along the path ray as a fallback. ZA branch: descent from the sphere minimizer.
SecondSolution second_solution_search(const ProblemParams& pp, const GridPtr& grid,
                                      const ChoquardKernel& kernel, const Field& v,
                                      const SecondSolutionOptions& opts = {});

/// |{ |u - a| < h }| / |B_1| for the piecewise-linear interpolant of u
/// (u = 0 at r = 1, constant on [0, r_1]).
double level_set_fraction(const Field& u, double a, double h);

struct LipschitzReport {
  double max_ratio = 0.0;
  double max_ratio_halved = 0.0;
};

/// Sampled |G(w1) - G(w2)| / ||w1 - w2|| over random pairs in the ball of
/// the given radius, then again with the pair distances halved.
LipschitzReport lipschitz_check(const ProblemParams& pp, const ChoquardKernel& kernel, const Eigen::VectorXd& v,
                                double radius, int pairs = 1000, std::uint64_t seed = 3);

}  // namespace choquard
