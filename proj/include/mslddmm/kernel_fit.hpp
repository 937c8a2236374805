#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "mslddmm/kernel.hpp"
#include "mslddmm/scale_ladder.hpp"
#include "mslddmm/spectral_kernel.hpp"

namespace mslddmm {

/// Gaussian Hankel pairs h_q(r) = exp(-r^2 / (2 tau_q^2)) and
/// h_hat_q(xi) = (2 pi tau_q^2)^{d/2} exp(-2 pi^2 tau_q^2 xi^2).
struct HankelBasis {
  std::vector<double> widths;
  int dimension = 2;

  /// Q widths log-spaced on [s1 / sqrt(2), sqrt(2) s2].
  static HankelBasis log_spaced(double s1, double s2, int count, int dimension);

  int size() const { return static_cast<int>(widths.size()); }
  double spatial(int q, double r) const { return gaussian(r, widths[static_cast<std::size_t>(q)]); }
  double spectral(int q, double xi) const {
    return gaussian_spectrum(widths[static_cast<std::size_t>(q)], xi, dimension);
  }
  /// J x Q matrix of h_hat_q(xi_j).
  Eigen::MatrixXd spectral_matrix(const std::vector<double>& xi) const;
  bool operator==(const HankelBasis&) const = default;
};

struct FitResult {
  Eigen::VectorXd beta;
  double residual = 0.0;  ///< max_j |target - fit|
  double peak = 0.0;      ///< max_j |target|
  double margin = 0.0;    ///< smallest constraint slack (unscaled)
  int iterations = 0;
};

/// min_beta max_j |target_j - sum_q beta_q h_hat_q(xi_j)| subject to a
/// nonnegative fitted spectrum at every sample.
FitResult fit_diagonal(const Eigen::VectorXd& target, const HankelBasis& basis, const std::vector<double>& xi);

/// Same objective subject to |fit_j| <= c_j = sqrt(diag_k(xi_j) diag_l(xi_j))
/// with diag_* the fitted diagonal spectra. Throws std::invalid_argument if
/// k == l.
FitResult fit_offdiagonal(int k, int l, const Eigen::VectorXd& target, const Eigen::VectorXd& diag_k,
                          const Eigen::VectorXd& diag_l, const HankelBasis& basis, const std::vector<double>& xi);

/// Fourier-domain kernel for rho = w1 delta_{s1} + w2 delta_{s2} with widths
/// frozen on the ladder, sampled like a tridiagonal spectral table.
SpectralTable sum_dirac_spectral_table(const ScaleLadder& ladder, double weight_s1, double weight_s2,
                                       const SpectralGrid& grid);

struct PairReport {
  int k = 0;
  int l = 0;
  double residual = 0.0;
  double peak = 0.0;
  double margin = 0.0;
  int iterations = 0;
};

/// Fitted kernel sum_q beta_q(s_k, s_l) h_q(r) over ladder nodes.
///
/// Stores every diagonal pair plus the pairs requested at fit time. Queries
/// at other scales throw std::out_of_range unless interpolation is enabled,
/// in which case beta is interpolated linearly between neighbouring nodes.
class KernelTable final : public ScaleSpaceKernel {
 public:
  KernelTable(ScaleLadder ladder, HankelBasis basis);

  const ScaleLadder& ladder() const { return ladder_; }
  const HankelBasis& basis() const { return basis_; }

  void set(int k, int l, Eigen::VectorXd beta);
  bool has(int k, int l) const;
  const Eigen::VectorXd& beta(int k, int l) const;
  std::vector<std::pair<int, int>> pairs() const;

  void set_interpolation(bool enabled) { interpolate_ = enabled; }
  bool interpolation() const { return interpolate_; }

  std::vector<PairReport>& report() { return report_; }
  const std::vector<PairReport>& report() const { return report_; }

  /// Fitted spectrum sum_q beta_q h_hat_q(xi_j).
  Eigen::VectorXd spectrum(int k, int l, const std::vector<double>& xi) const;

  RadialSample sample(double lam, double mu, double r) const override;
  RadialFunction bind(double lam, double mu) const override;
  std::optional<GaussianExpansion> expansion(double lam, double mu) const override;

  /// Coefficients at a scale pair, interpolated if enabled.
  Eigen::VectorXd coefficients(double lam, double mu) const;

  void write_binary(const std::filesystem::path& path) const;
  static KernelTable read_binary(const std::filesystem::path& path);
  void write_csv(const std::filesystem::path& path) const;
  void write_report_json(const std::filesystem::path& path) const;

 private:
  ScaleLadder ladder_;
  HankelBasis basis_;
  std::map<std::pair<int, int>, Eigen::VectorXd> beta_;  ///< keyed with k <= l
  std::vector<PairReport> report_;
  bool interpolate_ = false;
};

struct FitOptions {
  int basis_size = 15;
  /// Off-diagonal pairs are fitted between every node and these node indices;
  /// empty means every pair.
  std::vector<int> base_nodes;
};

/// Diagonal fits first (they supply c_j), then off-diagonals; each phase fans
/// out across workers.
KernelTable fit_kernel_table(const SpectralTable& table, const FitOptions& options);

struct PositivityReport {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  bool pass = false;
};

/// Gram matrix of the fitted kernel on the given (scale node, point) samples;
/// passes iff min eig >= -1e-8 max eig.
PositivityReport certify_pairwise_positivity(const KernelTable& table, const std::vector<int>& scale_nodes,
                                             const std::vector<Eigen::VectorXd>& points);

}  // namespace mslddmm
