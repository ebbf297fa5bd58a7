#pragma once

#include "choquard/radial_grid.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>

namespace choquard {

/// Critical Choquard exponent (2n - mu)/(n - 2).
double critical_exponent(int n, double mu);

/// Spherical mean integral of |r e - s w|^{-mu} over w in S^{n-1}.
/// Closed form for n = 3; adaptive quadrature otherwise. Infinite at r = s
/// when mu >= n - 1.
double angular_kernel(int n, double mu, double r, double s);

/// Symmetric matrix M with f^T M g ~ double integral of f(|x|) g(|y|) |x-y|^{-mu}
/// over the ball, for f, g piecewise constant on the partition cells.
class ChoquardKernel {
public:
  ChoquardKernel(GridPtr grid, double mu, Eigen::MatrixXd matrix);

  const GridPtr& grid() const { return grid_; }
  double mu() const { return mu_; }
  double exponent() const { return p_; }
  const Eigen::MatrixXd& matrix() const { return m_; }

  /// FNV-1a over the matrix bytes.
  std::uint64_t content_hash() const;

  double form(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const;
  /// (M u_+^p)_i / V_i with V the finite-volume cell measures.
  Eigen::VectorXd potential(const Eigen::VectorXd& u) const;
  /// ||u||_HL^{2p} = (u_+^p)^T M (u_+^p).
  double hl_energy(const Eigen::VectorXd& u) const;

private:
  GridPtr grid_;
  double mu_;
  double p_;
  Eigen::MatrixXd m_;
};

using KernelPtr = std::shared_ptr<const ChoquardKernel>;

struct KernelOptions {
  /// When set, kernels are read from and written to this directory.
  std::optional<std::filesystem::path> cache_dir;
};

KernelPtr assemble_kernel(const GridPtr& grid, double mu, const KernelOptions& opts = {});

double choquard_form(const ChoquardKernel& k, const Field& f, const Field& g);
Field nonlocal_potential(const ChoquardKernel& k, const Field& u);

/// Binary cache I/O. load_kernel returns nullopt when the file is missing,
/// malformed, for different parameters, or fails its hash check.
void save_kernel(const ChoquardKernel& k, const std::filesystem::path& file);
std::optional<Eigen::MatrixXd> load_kernel(const GridPtr& grid, double mu,
                                           const std::filesystem::path& file);
std::filesystem::path kernel_cache_name(const RadialGrid& grid, double mu);

struct SharpConstants {
  double S = 0.0;      ///< best Sobolev constant
  double S_HL = 0.0;   ///< best constant of the Hardy-Littlewood-Sobolev quotient
  double C_nmu = 0.0;  ///< diagonal HLS constant
};

SharpConstants sharp_constants(int n, double mu);

struct BubbleParams {
  double eps = 0.05;
  double center_radius = 0.0;
  double cutoff_inner = 0.25;
  double cutoff_outer = 0.5;
};

void validate(const BubbleParams& bp);

/// C^2 monotone ramp: 1 below inner, 0 beyond outer.
double cutoff(const BubbleParams& bp, double r);

/// Normalized Talenti profile V_eps(r); its Dirichlet energy and HL norm on
/// the whole space equal S_HL^{(2n-mu)/(n-mu+2)}.
double bubble_profile(int n, double mu, double eps, double r);

/// w_eps = cutoff * V_eps on the grid.
Field talenti_bubble(const GridPtr& grid, double mu, const BubbleParams& bp);

/// V_eps(r) - V_eps(1) on the grid: the Talenti profile shifted to vanish on the sphere.
Field shifted_bubble(const GridPtr& grid, double mu, double eps);

/// ||grad u||^2 / ||u||_HL^2.
double hl_rayleigh_quotient(const ChoquardKernel& k, const Eigen::VectorXd& u);

struct HlsResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
};

/// Compares g^T M h with C(n,mu) |g|_r |h|_q (diagonal case r = q only).
HlsResult hls_check(const ChoquardKernel& k, const Field& g, const Field& h, double r_exp,
                    double q_exp);

}  // namespace choquard
