#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "mslddmm/kernel.hpp"
#include "mslddmm/scale_ladder.hpp"

namespace mslddmm {

/// Fourier transform of the unit Gaussian of width r in dimension d:
/// (2 pi r^2)^{d/2} exp(-2 pi^2 r^2 xi^2).
template <typename Scalar>
Scalar gaussian_spectrum(Scalar r, Scalar xi, int d) {
  using std::exp;
  using std::pow;
  const Scalar pi = std::numbers::pi_v<Scalar>;
  return pow(Scalar(2) * pi * r * r, Scalar(d) / Scalar(2)) * exp(Scalar(-2) * pi * pi * r * r * xi * xi);
}

/// chi = 1 / gaussian_spectrum. Overflows to +inf at high frequency.
template <typename Scalar>
Scalar chi_gaussian(Scalar r, Scalar xi, int d) {
  using std::exp;
  using std::pow;
  const Scalar pi = std::numbers::pi_v<Scalar>;
  return pow(Scalar(2) * pi * r * r, -Scalar(d) / Scalar(2)) * exp(Scalar(2) * pi * pi * r * r * xi * xi);
}

/// chi(r_prev) / chi(r) = (r / r_prev)^d exp(-2 (r^2 - r_prev^2) pi^2 xi^2),
/// evaluated without forming either chi. Exceeds 1 at low frequency.
template <typename Scalar>
Scalar chi_ratio(Scalar r_prev, Scalar r, Scalar xi, int d) {
  using std::exp;
  using std::pow;
  const Scalar pi = std::numbers::pi_v<Scalar>;
  return pow(r / r_prev, Scalar(d)) * exp(Scalar(-2) * (r * r - r_prev * r_prev) * pi * pi * xi * xi);
}

/// Radial frequency samples xi_0 < ... < xi_{J-1}.
struct SpectralGrid {
  std::vector<double> xi;
  int dimension = 2;

  /// J uniform samples on [0, 4 / (pi s1)], beyond which the finest Gaussian
  /// spectrum has decayed below 1e-12 of its peak.
  static SpectralGrid uniform(const ScaleLadder& ladder, int dimension, int count = 256);
  static SpectralGrid uniform(double xi_max, int dimension, int count);

  int size() const { return static_cast<int>(xi.size()); }
  double max() const { return xi.back(); }
  void validate() const;
};

/// Three-term system lower(k) x(k-1) + diag(k) x(k) + upper(k) x(k+1) = rhs(k).
template <typename Scalar>
struct TridiagonalSystem {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector lower;  ///< lower(0) unused
  Vector diag;
  Vector upper;  ///< upper(m-1) unused
  Vector rhs;

  Eigen::Index size() const { return diag.size(); }

  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dense() const {
    const Eigen::Index m = size();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> a =
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(m, m);
    for (Eigen::Index k = 0; k < m; ++k) {
      a(k, k) = diag(k);
      if (k > 0) a(k, k - 1) = lower(k);
      if (k + 1 < m) a(k, k + 1) = upper(k);
    }
    return a;
  }

  Vector apply(const Vector& x) const {
    const Eigen::Index m = size();
    Vector y(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      y(k) = diag(k) * x(k);
      if (k > 0) y(k) += lower(k) * x(k - 1);
      if (k + 1 < m) y(k) += upper(k) * x(k + 1);
    }
    return y;
  }
};

/// Thrown when elimination meets a pivot too small for the system's scale.
class SolverFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thomas algorithm. The systems assembled here are column diagonally
/// dominant, so elimination without pivoting is stable.
template <typename Scalar>
typename TridiagonalSystem<Scalar>::Vector solve_tridiagonal(const TridiagonalSystem<Scalar>& system) {
  using std::abs;
  using Vector = typename TridiagonalSystem<Scalar>::Vector;
  const Eigen::Index m = system.size();
  if (m == 0) return Vector();
  const Scalar scale = system.diag.cwiseAbs().maxCoeff();
  const Scalar tiny = scale * Scalar(1e-14);
  Vector c_prime(m), d_prime(m);
  Scalar pivot = system.diag(0);
  if (!(abs(pivot) > tiny)) throw SolverFailure("tridiagonal solve: vanishing pivot at row 0");
  c_prime(0) = m > 1 ? system.upper(0) / pivot : Scalar(0);
  d_prime(0) = system.rhs(0) / pivot;
  for (Eigen::Index k = 1; k < m; ++k) {
    pivot = system.diag(k) - system.lower(k) * c_prime(k - 1);
    if (!(abs(pivot) > tiny))
      throw SolverFailure("tridiagonal solve: vanishing pivot at row " + std::to_string(k));
    c_prime(k) = k + 1 < m ? system.upper(k) / pivot : Scalar(0);
    d_prime(k) = (system.rhs(k) - system.lower(k) * d_prime(k - 1)) / pivot;
  }
  Vector x(m);
  x(m - 1) = d_prime(m - 1);
  for (Eigen::Index k = m - 2; k >= 0; --k) x(k) = d_prime(k) - c_prime(k) * x(k + 1);
  return x;
}

/// Per-frequency system in g_k = chi_k h_k (g_n = chi_{n-1} h_n) for the
/// Lebesgue measure sigma^2 d lambda with Gaussian widths frozen on the
/// ladder, with right-hand side -delta at node k0 (zero-based).
///
/// Hyperbolic coefficients are formed from exp(-2 sigma rho) through expm1,
/// which neither overflows for large sigma*rho nor cancels for small.
TridiagonalSystem<double> build_tridiagonal(const ScaleLadder& ladder, double sigma, double xi, int k0, int d);

/// Maps the solved g back to h_k = kappa_hat_W(r_k, r_k0, xi).
Eigen::VectorXd kernel_hat_from_g(const ScaleLadder& ladder, const Eigen::VectorXd& g, double xi, int d);

/// kappa_hat_W(r_k, r_k0, xi) for every node k.
Eigen::VectorXd kernel_hat_column(const ScaleLadder& ladder, double sigma, double xi, int k0, int d);

/// kappa_hat_W over node pairs and frequency samples.
class SpectralTable {
 public:
  SpectralTable(ScaleLadder ladder, double sigma, SpectralGrid grid);

  const ScaleLadder& ladder() const { return ladder_; }
  double sigma() const { return sigma_; }
  const SpectralGrid& grid() const { return grid_; }
  int dimension() const { return grid_.dimension; }
  int nodes() const { return ladder_.node_count(); }

  double& operator()(int k, int k0, int j) { return values_[index(k, k0, j)]; }
  double operator()(int k, int k0, int j) const { return values_[index(k, k0, j)]; }

  /// Samples over the frequency grid for one node pair.
  Eigen::VectorXd spectrum(int k, int k0) const;

  const std::vector<double>& values() const { return values_; }

  void write_binary(const std::filesystem::path& path) const;
  static SpectralTable read_binary(const std::filesystem::path& path);
  void write_csv(const std::filesystem::path& path) const;

 private:
  std::size_t index(int k, int k0, int j) const {
    return (static_cast<std::size_t>(k) * static_cast<std::size_t>(nodes()) + static_cast<std::size_t>(k0)) *
               static_cast<std::size_t>(grid_.size()) +
           static_cast<std::size_t>(j);
  }

  ScaleLadder ladder_;
  double sigma_;
  SpectralGrid grid_;
  std::vector<double> values_;
};

/// Solves every (xi_j, k0) system; frequencies fan out across workers.
SpectralTable compute_spectral_table(const ScaleLadder& ladder, double sigma, const SpectralGrid& grid);

/// Real-space kernel from the tridiagonal spectra by numerical inverse Hankel
/// transform. Slow; serves as a reference for fitted tables. Scales must be
/// ladder nodes and the dimension at least 2.
class SpectralKernel final : public ScaleSpaceKernel {
 public:
  SpectralKernel(ScaleLadder ladder, double sigma, int dimension, double xi_max, int quadrature_points = 4001);
  RadialSample sample(double lam, double mu, double r) const override;

 private:
  ScaleLadder ladder_;
  double sigma_;
  int dimension_;
  std::vector<double> xi_;
  std::vector<double> weight_;
  std::vector<Eigen::MatrixXd> hat_;  ///< per quadrature node: kappa_hat_W over node pairs
};

}  // namespace mslddmm
