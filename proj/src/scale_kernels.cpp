#include "mslddmm/scale_kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mslddmm {

namespace {

// 8-point Gauss-Legendre on [-1, 1].
constexpr std::array<double, 8> kGLNodes = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                            -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                            0.7966664774136267,  0.9602898564975363};
constexpr std::array<double, 8> kGLWeights = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                              0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                              0.2223810344533745, 0.1012285362903763};

// Intervals this short relative to their left end are integrated by
// Gauss-Legendre: the closed-form antiderivative differences cancel there.
constexpr double kShortInterval = 1e-4;

double exponential_integral_e1(double x) { return -std::expint(-x); }

RadialSample gauss_legendre(double a, double b, double c, double alpha, double beta) {
  RadialSample out;
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  for (std::size_t i = 0; i < kGLNodes.size(); ++i) {
    const double mu = mid + half * kGLNodes[i];
    const double w = half * kGLWeights[i] * (alpha + beta * mu);
    const double e = std::exp(-c / (mu * mu));
    out.value += w * e;
    out.slope -= w * e / (mu * mu);
  }
  return out;
}

// Integral of mu * exp(-c / mu^2) over [a, b] and its c-derivative.
RadialSample first_moment(double a, double b, double c) {
  if (c == 0.0) return {0.5 * (b * b - a * a), -std::log(b / a)};
  const double ua = c / (a * a);
  const double ub = c / (b * b);
  const double e1a = exponential_integral_e1(ua);
  const double e1b = exponential_integral_e1(ub);
  RadialSample out;
  out.value = 0.5 * (b * b * std::exp(-ub) - a * a * std::exp(-ua)) - 0.5 * c * (e1b - e1a);
  out.slope = -0.5 * (e1b - e1a);
  return out;
}

RadialSample continuous_weighted(double a, double b, double r, double alpha, double beta) {
  const double c = 0.5 * r * r;
  if (b - a < kShortInterval * a) return gauss_legendre(a, b, c, alpha, beta);
  RadialSample out;
  if (alpha != 0.0) {
    const RadialSample zeroth = integrate_gaussian_scales(a, b, r);
    out.value += alpha * zeroth.value;
    out.slope += alpha * zeroth.slope;
  }
  if (beta != 0.0) {
    const RadialSample first = first_moment(a, b, c);
    out.value += beta * first.value;
    out.slope += beta * first.slope;
  }
  return out;
}

RadialSample piecewise_weighted(const ScaleLadder& ladder, double a, double b, double r, double alpha,
                                double beta) {
  const double c = 0.5 * r * r;
  RadialSample out;
  const int first = ladder.interval_of(a);
  const int last = ladder.interval_of(b);
  for (int k = first; k <= last; ++k) {
    const double lo = std::max(a, ladder.node(k));
    const double hi = std::min(b, ladder.node(k + 1));
    if (!(hi > lo)) continue;
    const double weight = alpha * (hi - lo) + 0.5 * beta * (hi * hi - lo * lo);
    const double width = ladder.node(k);
    const double inv_w2 = 1.0 / (width * width);
    const double e = std::exp(-c * inv_w2);
    out.value += weight * e;
    out.slope -= weight * inv_w2 * e;
  }
  return out;
}

}  // namespace

double GaussianScaleFamily::width_at(double lam) const {
  if (profile == ScaleProfile::Continuous) return ladder.clamp(lam);
  return ladder.node(ladder.interval_of(lam));
}

RadialSample GaussianScaleFamily::kernel(double lam, double r) const {
  const double w = width_at(lam);
  const double e = gaussian(r, w);
  return {e, -e / (w * w)};
}

void validate(const ScaleMeasure& measure, const ScaleLadder& ladder) {
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, DiracMeasure>) {
          if (!(m.sigma > 0.0)) throw std::invalid_argument("Dirac measure weight must be positive");
          if (m.s0 < ladder.s1() - ScaleLadder::kClampTolerance ||
              m.s0 > ladder.s2() + ScaleLadder::kClampTolerance)
            throw std::invalid_argument("Dirac atom s0 outside [s1, s2]");
        } else if constexpr (std::is_same_v<M, SumDiracMeasure>) {
          if (!(m.weight_s1 > 0.0) || !(m.weight_s2 > 0.0))
            throw std::invalid_argument("sum-of-Diracs weights must be positive");
        } else {
          if (!(m.sigma > 0.0)) throw std::invalid_argument("Lebesgue density weight must be positive");
        }
      },
      measure);
}

RadialSample integrate_gaussian_scales(double lam1, double lam2, double r) {
  if (lam1 > lam2) throw std::domain_error("scale integral bounds reversed");
  if (lam1 == lam2) return {};
  if (!(lam1 > 0.0)) throw std::domain_error("scale integral requires positive scales");
  const double c = 0.5 * r * r;
  if (c == 0.0) return {lam2 - lam1, -(1.0 / lam1 - 1.0 / lam2)};
  if (lam2 - lam1 < kShortInterval * lam1) return gauss_legendre(lam1, lam2, c, 1.0, 0.0);

  const double sqrt_c = std::sqrt(c);
  const double a1 = sqrt_c / lam1;  // a1 > a2
  const double a2 = sqrt_c / lam2;
  const double e1 = std::exp(-a1 * a1);
  const double e2 = std::exp(-a2 * a2);
  // erf(a2) - erf(a1) = erfc(a1) - erfc(a2); the erfc form keeps digits once both arguments are large.
  const double erf_gap = a2 > 0.5 ? std::erfc(a1) - std::erfc(a2) : std::erf(a2) - std::erf(a1);
  RadialSample out;
  out.value = lam2 * e2 - lam1 * e1 + std::sqrt(c * std::numbers::pi) * erf_gap;
  out.slope = std::sqrt(std::numbers::pi) / (2.0 * sqrt_c) * erf_gap;
  return out;
}

RadialSample integrate_piecewise_scales(const ScaleLadder& ladder, double lam1, double lam2, double r) {
  if (lam1 > lam2) throw std::domain_error("scale integral bounds reversed");
  return piecewise_weighted(ladder, ladder.clamp(lam1), ladder.clamp(lam2), r, 1.0, 0.0);
}

RadialSample integrate_scales(const GaussianScaleFamily& family, double lam1, double lam2, double r,
                              double alpha, double beta) {
  if (lam1 > lam2) throw std::domain_error("scale integral bounds reversed");
  lam1 = family.ladder.clamp(lam1);
  lam2 = family.ladder.clamp(lam2);
  if (lam1 == lam2) return {};
  if (family.profile == ScaleProfile::Continuous) return continuous_weighted(lam1, lam2, r, alpha, beta);
  return piecewise_weighted(family.ladder, lam1, lam2, r, alpha, beta);
}

double gauss_scale_integral(const GaussianScaleFamily& family, double lam1, double lam2, double r) {
  if (lam1 > lam2) throw std::domain_error("scale integral bounds reversed");
  return integrate_gaussian_scales(family.ladder.clamp(lam1), family.ladder.clamp(lam2), r).value;
}

double piecewise_scale_integral(const GaussianScaleFamily& family, double lam1, double lam2, double r) {
  return integrate_piecewise_scales(family.ladder, lam1, lam2, r).value;
}

// ---------------------------------------------------------------------------

namespace {

RadialSample dirac_sample(const GaussianScaleFamily& family, const DiracMeasure& m, double lam, double lam0,
                          double r) {
  lam = family.ladder.clamp(lam);
  lam0 = family.ladder.clamp(lam0);
  const double s0 = family.ladder.clamp(m.s0);
  // The scale window is the stretch between s0 and lam clamped to the
  // segment joining s0 and lam0; it is empty when lam and lam0 sit on
  // opposite sides of s0.
  const double end = std::clamp(lam, std::min(s0, lam0), std::max(s0, lam0));
  const RadialSample lead = family.kernel(s0, r);
  const RadialSample window = integrate_scales(family, std::min(s0, end), std::max(s0, end), r);
  return {(lead.value + window.value) / m.sigma, (lead.slope + window.slope) / m.sigma};
}

RadialSample integrated_dirac_sample(const GaussianScaleFamily& family, double lam, double lam0, double r) {
  lam = family.ladder.clamp(lam);
  lam0 = family.ladder.clamp(lam0);
  const double s1 = family.ladder.s1();
  const double s2 = family.ladder.s2();
  const double length = s2 - s1;
  const double lo = std::min(lam, lam0);
  const double hi = std::max(lam, lam0);
  RadialSample out = integrate_scales(family, s1, s2, r);
  const RadialSample below = integrate_scales(family, s1, lo, r, -s1 / length, 1.0 / length);
  const RadialSample above = integrate_scales(family, hi, s2, r, s2 / length, -1.0 / length);
  out.value += below.value + above.value;
  out.slope += below.slope + above.slope;
  return out;
}

}  // namespace

double dirac_kernel(const ScaleMeasure& measure, const GaussianScaleFamily& family, double lam, double lam0,
                    double r) {
  const auto* dirac = std::get_if<DiracMeasure>(&measure);
  if (!dirac) throw std::invalid_argument("dirac_kernel requires a Dirac scale measure");
  validate(measure, family.ladder);
  return dirac_sample(family, *dirac, lam, lam0, r).value;
}

DiracKernel::DiracKernel(GaussianScaleFamily family, DiracMeasure measure)
    : family_(std::move(family)), measure_(measure) {
  validate(ScaleMeasure{measure_}, family_.ladder);
}

RadialSample DiracKernel::sample(double lam, double mu, double r) const {
  return dirac_sample(family_, measure_, lam, mu, r);
}

double sum_dirac_kernel_hat(double chi_s1, double chi_s2, const std::function<double(double)>& X, double s2,
                            double lam, double lam0) {
  if (!(chi_s1 > 0.0) || !(chi_s2 > 0.0)) throw std::invalid_argument("chi values must be positive");
  const double inv1 = 1.0 / chi_s1;  // 0 when chi overflowed to +inf
  const double inv2 = 1.0 / chi_s2;
  const double x_end = X(s2);
  const double x_max = X(std::max(lam, lam0));
  const double x_min = X(std::min(lam, lam0));
  return (inv2 + x_end - x_max) * (inv1 + x_min) / (inv1 + inv2 + x_end);
}

double integrated_dirac_kernel(const GaussianScaleFamily& family, double lam, double lam0, double r) {
  return integrated_dirac_sample(family, lam, lam0, r).value;
}

IntegratedDiracKernel::IntegratedDiracKernel(GaussianScaleFamily family) : family_(std::move(family)) {}

RadialSample IntegratedDiracKernel::sample(double lam, double mu, double r) const {
  return integrated_dirac_sample(family_, lam, mu, r);
}

// ---------------------------------------------------------------------------

double ProductKernel::operator()(double lam, double mu, const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& y) const {
  return scale_kernel(lam, mu) * space_kernel(warp(lam, x), warp(mu, y));
}

namespace {

ProductKernel gaussian_product(double scale_width, double space_width,
                               std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)> warp) {
  ProductKernel k;
  k.scale_kernel = [scale_width](double lam, double mu) { return gaussian(lam - mu, scale_width); };
  k.space_kernel = [space_width](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    return gaussian((x - y).norm(), space_width);
  };
  k.warp = std::move(warp);
  return k;
}

}  // namespace

ProductKernel ProductKernel::rescaling(double scale_width, double space_width) {
  return gaussian_product(scale_width, space_width,
                          [](double lam, const Eigen::VectorXd& x) -> Eigen::VectorXd { return x / lam; });
}

ProductKernel ProductKernel::separable(double scale_width, double space_width) {
  return gaussian_product(scale_width, space_width,
                          [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd { return x; });
}

double product_kernel(const ProductKernel& kernel, double lam, double mu, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& y) {
  return kernel(lam, mu, x, y);
}

}  // namespace mslddmm
