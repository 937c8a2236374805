#include "mslddmm/spectral_kernel.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>

#include "mslddmm/parallel.hpp"

namespace mslddmm {

namespace {

constexpr char kSpectralMagic[8] = {'M', 'S', 'S', 'P', 'E', 'C', '0', '1'};

struct Hyperbolic {
  double inv_sinh;
  double coth;
};

Hyperbolic hyperbolic(double x) {
  const double q = std::exp(-2.0 * x);
  const double one_minus_q = -std::expm1(-2.0 * x);
  return {2.0 * std::exp(-x) / one_minus_q, (1.0 + q) / one_minus_q};
}

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw std::runtime_error("truncated spectral table file");
  return value;
}

}  // namespace

SpectralGrid SpectralGrid::uniform(const ScaleLadder& ladder, int dimension, int count) {
  return uniform(4.0 / (std::numbers::pi * ladder.s1()), dimension, count);
}

SpectralGrid SpectralGrid::uniform(double xi_max, int dimension, int count) {
  if (count < 2) throw std::invalid_argument("spectral grid needs at least two frequencies");
  if (!(xi_max > 0.0)) throw std::invalid_argument("spectral grid needs a positive maximum frequency");
  SpectralGrid grid;
  grid.dimension = dimension;
  grid.xi.resize(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) grid.xi[static_cast<std::size_t>(j)] = xi_max * j / (count - 1);
  return grid;
}

void SpectralGrid::validate() const {
  if (xi.size() < 2) throw std::invalid_argument("spectral grid needs at least two frequencies");
  if (!(xi.front() >= 0.0)) throw std::invalid_argument("spectral grid frequencies must be nonnegative");
  for (std::size_t j = 1; j < xi.size(); ++j)
    if (!(xi[j] > xi[j - 1])) throw std::invalid_argument("spectral grid must be strictly increasing");
  if (dimension < 1) throw std::invalid_argument("spectral grid dimension must be positive");
}

TridiagonalSystem<double> build_tridiagonal(const ScaleLadder& ladder, double sigma, double xi, int k0, int d) {
  const int n = ladder.intervals();
  const int m = n + 1;
  if (k0 < 0 || k0 >= m) throw std::out_of_range("k0 outside the ladder nodes");
  if (!(sigma > 0.0)) throw std::invalid_argument("Lebesgue density weight must be positive");

  std::vector<Hyperbolic> hyp(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) hyp[static_cast<std::size_t>(k)] = hyperbolic(sigma * ladder.width(k));
  // psi(i) = chi_{i-1} / chi_i for interior nodes, 1 at the top node.
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(m);
  for (int i = 1; i < n; ++i) psi(i) = chi_ratio(ladder.node(i - 1), ladder.node(i), xi, d);
  psi(n) = 1.0;

  TridiagonalSystem<double> sys;
  sys.lower = Eigen::VectorXd::Zero(m);
  sys.diag = Eigen::VectorXd::Zero(m);
  sys.upper = Eigen::VectorXd::Zero(m);
  sys.rhs = Eigen::VectorXd::Zero(m);
  for (int i = 0; i < m; ++i) {
    const bool has_right = i < n;  // interval i lies above node i
    const bool has_left = i > 0;   // interval i-1 lies below node i
    double diag = 0.0;
    if (has_right) {
      const auto& h = hyp[static_cast<std::size_t>(i)];
      diag -= sigma * h.coth;
      sys.upper(i) = sigma * psi(i + 1) * h.inv_sinh;
    }
    if (has_left) {
      const auto& h = hyp[static_cast<std::size_t>(i - 1)];
      // On the top node g carries chi_{n-1}, so the left coefficient has no psi factor.
      diag -= sigma * h.coth * (i < n ? psi(i) : 1.0);
      sys.lower(i) = sigma * h.inv_sinh;
    }
    sys.diag(i) = diag;
  }
  sys.rhs(k0) = -1.0;
  return sys;
}

Eigen::VectorXd kernel_hat_from_g(const ScaleLadder& ladder, const Eigen::VectorXd& g, double xi, int d) {
  const int n = ladder.intervals();
  Eigen::VectorXd h(n + 1);
  for (int i = 0; i < n; ++i) h(i) = g(i) * gaussian_spectrum(ladder.node(i), xi, d);
  h(n) = g(n) * gaussian_spectrum(ladder.node(n - 1), xi, d);
  return h;
}

Eigen::VectorXd kernel_hat_column(const ScaleLadder& ladder, double sigma, double xi, int k0, int d) {
  return kernel_hat_from_g(ladder, solve_tridiagonal(build_tridiagonal(ladder, sigma, xi, k0, d)), xi, d);
}

// ---------------------------------------------------------------------------

SpectralTable::SpectralTable(ScaleLadder ladder, double sigma, SpectralGrid grid)
    : ladder_(std::move(ladder)), sigma_(sigma), grid_(std::move(grid)) {
  grid_.validate();
  values_.assign(static_cast<std::size_t>(nodes()) * static_cast<std::size_t>(nodes()) *
                     static_cast<std::size_t>(grid_.size()),
                 0.0);
}

Eigen::VectorXd SpectralTable::spectrum(int k, int k0) const {
  Eigen::VectorXd out(grid_.size());
  for (int j = 0; j < grid_.size(); ++j) out(j) = (*this)(k, k0, j);
  return out;
}

void SpectralTable::write_binary(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out.write(kSpectralMagic, sizeof(kSpectralMagic));
  write_pod<std::int32_t>(out, dimension());
  write_pod<std::int32_t>(out, ladder_.intervals());
  write_pod<std::int32_t>(out, grid_.size());
  write_pod<double>(out, sigma_);
  for (double r : ladder_.nodes()) write_pod<double>(out, r);
  for (double xi : grid_.xi) write_pod<double>(out, xi);
  out.write(reinterpret_cast<const char*>(values_.data()),
            static_cast<std::streamsize>(values_.size() * sizeof(double)));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

SpectralTable SpectralTable::read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[sizeof(kSpectralMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kSpectralMagic, sizeof(magic)) != 0)
    throw std::runtime_error(path.string() + " is not a spectral table");
  const int d = read_pod<std::int32_t>(in);
  const int n = read_pod<std::int32_t>(in);
  const int J = read_pod<std::int32_t>(in);
  const double sigma = read_pod<double>(in);
  std::vector<double> nodes(static_cast<std::size_t>(n) + 1);
  for (double& r : nodes) r = read_pod<double>(in);
  SpectralGrid grid;
  grid.dimension = d;
  grid.xi.resize(static_cast<std::size_t>(J));
  for (double& xi : grid.xi) xi = read_pod<double>(in);
  SpectralTable table(ScaleLadder(std::move(nodes)), sigma, std::move(grid));
  in.read(reinterpret_cast<char*>(table.values_.data()),
          static_cast<std::streamsize>(table.values_.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated spectral table payload");
  return table;
}

void SpectralTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "k,k0,j,xi,value\n" << std::setprecision(17);
  for (int k = 0; k < nodes(); ++k)
    for (int k0 = 0; k0 < nodes(); ++k0)
      for (int j = 0; j < grid_.size(); ++j)
        out << k << ',' << k0 << ',' << j << ',' << grid_.xi[static_cast<std::size_t>(j)] << ','
            << (*this)(k, k0, j) << '\n';
}

SpectralTable compute_spectral_table(const ScaleLadder& ladder, double sigma, const SpectralGrid& grid) {
  SpectralTable table(ladder, sigma, grid);
  const int m = ladder.node_count();
  const int d = grid.dimension;
  parallel_for(static_cast<std::size_t>(grid.size()), [&](std::size_t begin, std::size_t end) {
    for (std::size_t jj = begin; jj < end; ++jj) {
      const int j = static_cast<int>(jj);
      const double xi = grid.xi[jj];
      for (int k0 = 0; k0 < m; ++k0) {
        Eigen::VectorXd h;
        try {
          h = kernel_hat_column(ladder, sigma, xi, k0, d);
        } catch (const SolverFailure& e) {
          throw SolverFailure(std::string(e.what()) + " (frequency index " + std::to_string(j) + ", k0 " +
                              std::to_string(k0) + ")");
        }
        for (int k = 0; k < m; ++k) table(k, k0, j) = h(k);
      }
    }
  });
  return table;
}

// ---------------------------------------------------------------------------

SpectralKernel::SpectralKernel(ScaleLadder ladder, double sigma, int dimension, double xi_max,
                               int quadrature_points)
    : ladder_(std::move(ladder)), sigma_(sigma), dimension_(dimension) {
  if (dimension_ < 2) throw std::invalid_argument("spectral kernel inversion needs dimension >= 2");
  if (quadrature_points % 2 == 0) ++quadrature_points;  // Simpson needs an even interval count
  const int q = quadrature_points;
  const double step = xi_max / (q - 1);
  xi_.resize(static_cast<std::size_t>(q));
  weight_.resize(static_cast<std::size_t>(q));
  hat_.resize(static_cast<std::size_t>(q));
  const int m = ladder_.node_count();
  for (int i = 0; i < q; ++i) {
    xi_[static_cast<std::size_t>(i)] = step * i;
    const double w = (i == 0 || i == q - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    weight_[static_cast<std::size_t>(i)] = w * step / 3.0;
  }
  parallel_for(static_cast<std::size_t>(q), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Eigen::MatrixXd h(m, m);
      for (int k0 = 0; k0 < m; ++k0) h.col(k0) = kernel_hat_column(ladder_, sigma_, xi_[i], k0, dimension_);
      hat_[i] = std::move(h);
    }
  });
}

RadialSample SpectralKernel::sample(double lam, double mu, double r) const {
  const auto k = ladder_.node_index(lam);
  const auto l = ladder_.node_index(mu);
  if (!k || !l) throw std::out_of_range("spectral kernel is only tabulated at ladder nodes");
  const double nu = 0.5 * dimension_ - 1.0;
  const double two_pi = 2.0 * std::numbers::pi;
  RadialSample out;
  for (std::size_t i = 0; i < xi_.size(); ++i) {
    const double xi = xi_[i];
    if (xi == 0.0) continue;  // integrand carries xi^{nu+1}
    const double f = weight_[i] * 0.5 * (hat_[i](*k, *l) + hat_[i](*l, *k)) * std::pow(xi, nu + 1.0);
    const double arg = two_pi * r * xi;
    double radial;       // r^{-nu} J_nu(2 pi r xi)
    double radial_next;  // r^{-nu-1} J_{nu+1}(2 pi r xi)
    if (arg < 1e-8) {
      radial = std::pow(std::numbers::pi * xi, nu) / std::tgamma(nu + 1.0);
      radial_next = std::pow(std::numbers::pi * xi, nu + 1.0) / std::tgamma(nu + 2.0);
    } else {
      radial = std::cyl_bessel_j(nu, arg) / std::pow(r, nu);
      radial_next = std::cyl_bessel_j(nu + 1.0, arg) / std::pow(r, nu + 1.0);
    }
    out.value += f * radial;
    out.slope -= f * two_pi * xi * radial_next;
  }
  out.value *= two_pi;
  out.slope *= two_pi;
  return out;
}

}  // namespace mslddmm
