#include "choquard/riesz_kernel.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>
#include <vector>

namespace choquard {

namespace {

constexpr char kMagic[4] = {'C', 'H', 'Q', 'K'};
constexpr std::uint32_t kVersion = 1;
// Pairs with 2 <= |i - j| <= kMidBand get a higher-order tensor rule.
constexpr int kMidBand = 8;

void check_mu(int n, double mu) {
  if (!(mu > 0.0) || !(mu < n)) throw ConfigError("mu must lie in (0, n)");
}

// (1 + x)^q - (1 - x)^q without cancellation for small x.
double power_difference(double q, double x) {
  return std::expm1(q * std::log1p(x)) - std::expm1(q * std::log1p(-x));
}

// gap = |r - s|, passed separately so quadrature near the diagonal keeps
// full relative accuracy.
double angular_kernel_3d(double mu, double r, double s, double gap) {
  const double hi = std::max(r, s), lo = std::min(r, s);
  const double x = lo / hi;
  if (gap == 0.0 && mu >= 2.0) return std::numeric_limits<double>::infinity();
  const double pre = 2.0 * std::numbers::pi / (r * s);
  if (mu == 2.0) return pre * (std::log1p(x) - std::log(gap / hi));
  const double q = 2.0 - mu;
  // (r+s)^q - |r-s|^q = hi^q [(1+x)^q - (1-x)^q]
  if (x < 0.5) return pre / q * std::pow(hi, q) * power_difference(q, x);
  return pre / q * (std::pow(r + s, q) - std::pow(gap, q));
}

double angular_kernel_nd(int n, double mu, double r, double s, double gap) {
  const double area = sphere_area(n - 1);
  if (r == 0.0 || s == 0.0) return sphere_area(n) * std::pow(std::max(r, s), -mu);
  const double d2 = gap * gap;
  const double rs4 = 4.0 * r * s;
  if (d2 == 0.0 && mu >= n - 1) return std::numeric_limits<double>::infinity();
  boost::math::quadrature::tanh_sinh<double> ts;
  auto integrand = [&](double t) {
    const double h = std::sin(0.5 * t);
    const double dist2 = d2 + rs4 * h * h;
    if (dist2 <= 0.0) return 0.0;
    return std::pow(dist2, -0.5 * mu) * std::pow(std::sin(t), n - 2);
  };
  return area * ts.integrate(integrand, 0.0, std::numbers::pi, 1e-12);
}

double kernel_with_gap(int n, double mu, double r, double s, double gap) {
  if (n == 3) {
    if (r == 0.0 || s == 0.0) return 4.0 * std::numbers::pi * std::pow(std::max(r, s), -mu);
    return angular_kernel_3d(mu, r, s, gap);
  }
  return angular_kernel_nd(n, mu, r, s, gap);
}

std::uint64_t fnv1a(const double* data, std::size_t count) {
  std::uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < count * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

// Edges of the partition cells used by the kernel: faces, with the last
// cell extended to the sphere.
Eigen::VectorXd partition_edges(const RadialGrid& g) {
  Eigen::VectorXd e = g.faces();
  e[g.size()] = 1.0;
  return e;
}

}  // namespace

double critical_exponent(int n, double mu) { return (2.0 * n - mu) / (n - 2.0); }

double angular_kernel(int n, double mu, double r, double s) {
  if (n < 3) throw ConfigError("dimension n must be at least 3");
  check_mu(n, mu);
  if (r < 0.0 || s < 0.0) throw ConfigError("radii must be non-negative");
  if (r == 0.0 && s == 0.0) return std::numeric_limits<double>::infinity();
  return kernel_with_gap(n, mu, r, s, std::abs(r - s));
}

ChoquardKernel::ChoquardKernel(GridPtr grid, double mu, Eigen::MatrixXd matrix)
    : grid_(std::move(grid)), mu_(mu), p_(critical_exponent(grid_->dim(), mu)), m_(std::move(matrix)) {
  if (m_.rows() != grid_->size() || m_.cols() != grid_->size())
    throw ConfigError("kernel matrix does not match grid");
}

std::uint64_t ChoquardKernel::content_hash() const {
  return fnv1a(m_.data(), static_cast<std::size_t>(m_.size()));
}

double ChoquardKernel::form(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const {
  return f.dot(m_ * g);
}

Eigen::VectorXd ChoquardKernel::potential(const Eigen::VectorXd& u) const {
  const Eigen::VectorXd up = u.cwiseMax(0.0).array().pow(p_).matrix();
  return ((m_ * up).array() / grid_->cell_volumes().array()).matrix();
}

double ChoquardKernel::hl_energy(const Eigen::VectorXd& u) const {
  const Eigen::VectorXd up = u.cwiseMax(0.0).array().pow(p_).matrix();
  return form(up, up);
}

KernelPtr assemble_kernel(const GridPtr& grid, double mu, const KernelOptions& opts) {
  const int n = grid->dim();
  const int m = grid->size();
  check_mu(n, mu);

  std::filesystem::path cache_file;
  if (opts.cache_dir) {
    cache_file = *opts.cache_dir / kernel_cache_name(*grid, mu);
    if (auto cached = load_kernel(grid, mu, cache_file))
      return std::make_shared<const ChoquardKernel>(grid, mu, std::move(*cached));
  }

  const Eigen::VectorXd e = partition_edges(*grid);
  const double area = sphere_area(n);
  Eigen::MatrixXd mat(m, m);

  const double g2 = 1.0 / std::sqrt(3.0);

  auto radial = [n](double t) { return std::pow(t, n - 1); };

  auto inner = [&](double r, int j) {
    boost::math::quadrature::tanh_sinh<double> ts;
    const double lo = e[j], hi = e[j + 1];
    if (r > lo && r < hi) {
      // xc is the signed distance to the nearer end; the split point is r.
      auto below = [&](double s, double xc) {
        const double gap = xc > 0.0 ? xc : r - s;
        return radial(s) * kernel_with_gap(n, mu, r, s, gap);
      };
      auto above = [&](double s, double xc) {
        const double gap = xc < 0.0 ? -xc : s - r;
        return radial(s) * kernel_with_gap(n, mu, r, s, gap);
      };
      return ts.integrate(below, lo, r, 1e-10) + ts.integrate(above, r, hi, 1e-10);
    }
    auto f = [&](double s) { return radial(s) * kernel_with_gap(n, mu, r, s, std::abs(r - s)); };
    return ts.integrate(f, lo, hi, 1e-10);
  };

  auto entry = [&](int i, int j) {
    const double ai = e[i], bi = e[i + 1], aj = e[j], bj = e[j + 1];
    const double hi = 0.5 * (bi - ai), ci = 0.5 * (bi + ai);
    const int band = std::abs(i - j);
    if (band > kMidBand) {
      const double hj = 0.5 * (bj - aj), cj = 0.5 * (bj + aj);
      double s = 0.0;
      for (double xi : {-g2, g2})
        for (double xj : {-g2, g2}) {
          const double r = ci + hi * xi, t = cj + hj * xj;
          s += radial(r) * radial(t) * kernel_with_gap(n, mu, r, t, std::abs(r - t));
        }
      return area * hi * hj * s;
    }
    if (band >= 2) {
      // Moderately close pairs: tensor Gauss-Legendre of higher order.
      auto row = [&](double r) {
        auto col = [&](double t) { return radial(t) * kernel_with_gap(n, mu, r, t, std::abs(r - t)); };
        return radial(r) * boost::math::quadrature::gauss<double, 10>::integrate(col, aj, bj);
      };
      return area * boost::math::quadrature::gauss<double, 10>::integrate(row, ai, bi);
    }
    auto outer = [&](double r) { return radial(r) * inner(r, j); };
    return area * boost::math::quadrature::gauss<double, 16>::integrate(outer, ai, bi);
  };

  auto fill_rows = [&](int begin, int end) {
    for (int i = begin; i < end; ++i)
      for (int j = i; j < m; ++j) mat(i, j) = entry(i, j);
  };
  const int threads = std::max(1u, std::min(8u, std::thread::hardware_concurrency()));
  if (threads == 1) {
    fill_rows(0, m);
  } else {
    std::vector<std::thread> pool;
    // Interleave rows so the upper-triangular work is balanced.
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (int i = t; i < m; i += threads) fill_rows(i, i + 1);
      });
    for (auto& th : pool) th.join();
  }
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < i; ++j) mat(i, j) = mat(j, i);

  auto kernel = std::make_shared<const ChoquardKernel>(grid, mu, std::move(mat));
  if (opts.cache_dir) {
    std::filesystem::create_directories(*opts.cache_dir);
    save_kernel(*kernel, cache_file);
  }
  return kernel;
}

double choquard_form(const ChoquardKernel& k, const Field& f, const Field& g) {
  return k.form(f.values, g.values);
}

Field nonlocal_potential(const ChoquardKernel& k, const Field& u) {
  if (u.values.minCoeff() < 0.0) throw ConfigError("nonlocal potential expects u >= 0");
  return Field{k.grid(), k.potential(u.values)};
}

std::filesystem::path kernel_cache_name(const RadialGrid& grid, double mu) {
  std::ostringstream os;
  os.precision(17);
  os << "kernel_n" << grid.dim() << "_mu" << mu << "_m" << grid.size() << "_g" << grid.grading()
     << ".bin";
  return os.str();
}

void save_kernel(const ChoquardKernel& k, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write kernel cache " + file.string());
  const std::int32_t n = k.grid()->dim(), m = k.grid()->size();
  const double mu = k.mu(), g = k.grid()->grading();
  const std::uint64_t hash = k.content_hash();
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(&mu), sizeof mu);
  out.write(reinterpret_cast<const char*>(&m), sizeof m);
  out.write(reinterpret_cast<const char*>(&g), sizeof g);
  out.write(reinterpret_cast<const char*>(&hash), sizeof hash);
  // Row-major; the matrix is symmetric so column-major storage is identical.
  out.write(reinterpret_cast<const char*>(k.matrix().data()),
            static_cast<std::streamsize>(sizeof(double) * k.matrix().size()));
}

std::optional<Eigen::MatrixXd> load_kernel(const GridPtr& grid, double mu,
                                           const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[4];
  std::uint32_t version = 0;
  std::int32_t n = 0, m = 0;
  double fmu = 0.0, g = 0.0;
  std::uint64_t hash = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  in.read(reinterpret_cast<char*>(&fmu), sizeof fmu);
  in.read(reinterpret_cast<char*>(&m), sizeof m);
  in.read(reinterpret_cast<char*>(&g), sizeof g);
  in.read(reinterpret_cast<char*>(&hash), sizeof hash);
  if (!in || std::memcmp(magic, kMagic, 4) != 0 || version != kVersion) return std::nullopt;
  if (n != grid->dim() || m != grid->size() || fmu != mu || g != grid->grading()) return std::nullopt;
  Eigen::MatrixXd mat(m, m);
  in.read(reinterpret_cast<char*>(mat.data()), static_cast<std::streamsize>(sizeof(double) * mat.size()));
  if (!in) return std::nullopt;
  if (fnv1a(mat.data(), static_cast<std::size_t>(mat.size())) != hash) return std::nullopt;
  return mat;
}

SharpConstants sharp_constants(int n, double mu) {
  if (n < 3) throw ConfigError("dimension n must be at least 3");
  check_mu(n, mu);
  const double pi = std::numbers::pi;
  const double ratio = std::tgamma(0.5 * n) / std::tgamma(double(n));
  SharpConstants c;
  c.S = pi * n * (n - 2.0) * std::pow(ratio, 2.0 / n);
  c.C_nmu = std::pow(pi, 0.5 * mu) * std::tgamma(0.5 * (n - mu)) / std::tgamma(n - 0.5 * mu) *
            std::pow(ratio, -1.0 + mu / n);
  c.S_HL = c.S * std::pow(c.C_nmu, -(n - 2.0) / (2.0 * n - mu));
  return c;
}

void validate(const BubbleParams& bp) {
  if (!(bp.eps > 0.0 && bp.eps < 1.0)) throw ConfigError("bubble eps must lie in (0, 1)");
  if (bp.center_radius != 0.0) throw ConfigError("only origin-centred bubbles are supported");
  if (!(bp.cutoff_inner > 0.0 && bp.cutoff_inner < bp.cutoff_outer && bp.cutoff_outer < 1.0))
    throw ConfigError("cutoff radii must satisfy 0 < inner < outer < 1");
}

double cutoff(const BubbleParams& bp, double r) {
  if (r <= bp.cutoff_inner) return 1.0;
  if (r >= bp.cutoff_outer) return 0.0;
  const double s = (r - bp.cutoff_inner) / (bp.cutoff_outer - bp.cutoff_inner);
  return 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
}

double bubble_profile(int n, double mu, double eps, double r) {
  const SharpConstants c = sharp_constants(n, mu);
  const double d = n - mu + 2.0;
  const double scale = std::pow(c.S, (n - mu) * (2.0 - n) / (4.0 * d)) *
                       std::pow(c.C_nmu, (2.0 - n) / (2.0 * d)) *
                       std::pow(n * (n - 2.0), 0.25 * (n - 2.0));
  return scale * std::pow(eps / (eps * eps + r * r), 0.5 * (n - 2.0));
}

Field talenti_bubble(const GridPtr& grid, double mu, const BubbleParams& bp) {
  validate(bp);
  const Eigen::VectorXd& r = grid->radii();
  Eigen::VectorXd w(grid->size());
  for (int i = 0; i < grid->size(); ++i)
    w[i] = cutoff(bp, r[i]) * bubble_profile(grid->dim(), mu, bp.eps, r[i]);
  return Field{grid, w};
}

Field shifted_bubble(const GridPtr& grid, double mu, double eps) {
  const Eigen::VectorXd& r = grid->radii();
  const double edge = bubble_profile(grid->dim(), mu, eps, 1.0);
  Eigen::VectorXd w(grid->size());
  for (int i = 0; i < grid->size(); ++i) w[i] = bubble_profile(grid->dim(), mu, eps, r[i]) - edge;
  return Field{grid, w};
}

double hl_rayleigh_quotient(const ChoquardKernel& k, const Eigen::VectorXd& u) {
  return k.grid()->dirichlet_form(u) / std::pow(k.hl_energy(u), 1.0 / k.exponent());
}

HlsResult hls_check(const ChoquardKernel& k, const Field& g, const Field& h, double r_exp,
                    double q_exp) {
  const int n = k.grid()->dim();
  if (!(r_exp > 1.0) || !(q_exp > 1.0)) throw ConfigError("HLS exponents must exceed 1");
  if (std::abs(1.0 / r_exp + 1.0 / q_exp + k.mu() / n - 2.0) > 1e-12)
    throw ConfigError("HLS exponents violate 1/r + 1/q + mu/n = 2");
  if (std::abs(r_exp - q_exp) > 1e-12)
    throw ConfigError("only the diagonal HLS case r = q has a known sharp constant");
  const Eigen::VectorXd& vol = k.grid()->partition_volumes();
  auto lnorm = [&](const Eigen::VectorXd& f, double e) {
    return std::pow(vol.dot(f.cwiseAbs().array().pow(e).matrix()), 1.0 / e);
  };
  HlsResult out;
  out.lhs = k.form(g.values, h.values);
  out.rhs = sharp_constants(n, k.mu()).C_nmu * lnorm(g.values, r_exp) * lnorm(h.values, q_exp);
  out.ratio = out.rhs > 0.0 ? out.lhs / out.rhs : 0.0;
  return out;
}

}  // namespace choquard
