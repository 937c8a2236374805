#pragma once

#include <Eigen/Dense>

#include <functional>
#include <variant>

#include "mslddmm/kernel.hpp"
#include "mslddmm/scale_ladder.hpp"

namespace mslddmm {

/// How the per-scale Gaussian width depends on the scale parameter.
enum class ScaleProfile {
  Continuous,         ///< kappa_lam(r) = exp(-r^2 / (2 lam^2))
  PiecewiseConstant,  ///< width frozen at node(k) on interval k
};

/// Per-scale Gaussian kernels over a ladder.
struct GaussianScaleFamily {
  ScaleLadder ladder;
  int dimension = 2;
  ScaleProfile profile = ScaleProfile::PiecewiseConstant;

  /// Gaussian width used at scale lam.
  double width_at(double lam) const;
  RadialSample kernel(double lam, double r) const;
};

struct DiracMeasure {
  double s0 = 0.0;
  double sigma = 1.0;
  bool operator==(const DiracMeasure&) const = default;
};

/// rho = w1 delta_{s1} + w2 delta_{s2}.
struct SumDiracMeasure {
  double weight_s1 = 1.0;
  double weight_s2 = 1.0;
  bool operator==(const SumDiracMeasure&) const = default;
};

/// rho = sigma^2 * Lebesgue.
struct LebesgueMeasure {
  double sigma = 1.0;
  bool operator==(const LebesgueMeasure&) const = default;
};

using ScaleMeasure = std::variant<DiracMeasure, SumDiracMeasure, LebesgueMeasure>;

/// Throws std::invalid_argument unless all weights are positive and a Dirac
/// atom lies inside the ladder.
void validate(const ScaleMeasure& measure, const ScaleLadder& ladder);

// ---------------------------------------------------------------------------
// Scale integrals of the Gaussian family. Each returns the integral over
// [lam1, lam2] of kappa_mu(r) d mu together with its derivative in c = r^2/2.

/// Continuous widths, closed form through erf.
RadialSample integrate_gaussian_scales(double lam1, double lam2, double r);

/// Piecewise-constant widths: exact interval sum on the ladder.
RadialSample integrate_piecewise_scales(const ScaleLadder& ladder, double lam1, double lam2, double r);

/// Integral of (alpha + beta * mu) kappa_mu(r) over [lam1, lam2] for either profile.
RadialSample integrate_scales(const GaussianScaleFamily& family, double lam1, double lam2, double r,
                              double alpha = 1.0, double beta = 0.0);

/// Integral of exp(-r^2 / (2 mu^2)) over [lam1, lam2]; throws std::domain_error if lam1 > lam2.
double gauss_scale_integral(const GaussianScaleFamily& family, double lam1, double lam2, double r);

/// Interval-sum integral with widths frozen on the ladder; throws std::domain_error if lam1 > lam2.
double piecewise_scale_integral(const GaussianScaleFamily& family, double lam1, double lam2, double r);

// ---------------------------------------------------------------------------
// Closed-form multiscale kernels.

/// Kernel for rho = sigma delta_{s0}. The leading per-scale term carries the
/// same 1/sigma factor as the integral term. Throws std::invalid_argument
/// unless the measure is a Dirac.
double dirac_kernel(const ScaleMeasure& measure, const GaussianScaleFamily& family, double lam,
                    double lam0, double r);

class DiracKernel final : public ScaleSpaceKernel {
 public:
  DiracKernel(GaussianScaleFamily family, DiracMeasure measure);
  RadialSample sample(double lam, double mu, double r) const override;
  const GaussianScaleFamily& family() const { return family_; }

 private:
  GaussianScaleFamily family_;
  DiracMeasure measure_;
};

/// Fourier-domain kernel for rho = delta_{s1} + delta_{s2}:
///
///   (1 + chi2 (X(s2) - X(max))) (1 + chi1 X(min)) / (chi1 + chi2 + chi1 chi2 X(s2))
///
/// with X(lam) the integral of 1/chi from s1 to lam. Evaluated in the
/// equivalent 1/chi form so infinite chi (underflowed spectra) is handled.
double sum_dirac_kernel_hat(double chi_s1, double chi_s2, const std::function<double(double)>& X, double s2,
                            double lam, double lam0);

/// Kernel obtained by integrating the Dirac kernel over s0 with sigma = s2 - s1.
double integrated_dirac_kernel(const GaussianScaleFamily& family, double lam, double lam0, double r);

class IntegratedDiracKernel final : public ScaleSpaceKernel {
 public:
  explicit IntegratedDiracKernel(GaussianScaleFamily family);
  RadialSample sample(double lam, double mu, double r) const override;

 private:
  GaussianScaleFamily family_;
};

// ---------------------------------------------------------------------------
// Product kernels K_scale(lam, mu) K_space(h(lam, x), h(mu, y)). These are not
// translation invariant once h depends on the scale, so they evaluate on point
// pairs rather than distances.

struct ProductKernel {
  std::function<double(double, double)> scale_kernel;
  std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> space_kernel;
  std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)> warp;

  double operator()(double lam, double mu, const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;

  /// h(lam, x) = x / lam with Gaussian factors on both components.
  static ProductKernel rescaling(double scale_width, double space_width);
  /// h(lam, x) = x: separable and therefore the same space at every scale.
  static ProductKernel separable(double scale_width, double space_width);
};

double product_kernel(const ProductKernel& kernel, double lam, double mu, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& y);

}  // namespace mslddmm
