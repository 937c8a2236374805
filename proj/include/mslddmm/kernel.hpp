#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace mslddmm {

/// Radial kernel value together with its slope with respect to c = r^2 / 2,
/// so that the spatial gradient of z -> k(|z|) is slope * z.
struct RadialSample {
  double value = 0.0;
  double slope = 0.0;
};

/// Radial profile for one fixed pair of scales.
using RadialFunction = std::function<RadialSample(double r)>;

/// k(r) = sum_q weights[q] exp(-r^2 / (2 widths[q]^2)).
struct GaussianExpansion {
  std::vector<double> widths;
  std::vector<double> weights;
};

/// Scalar, radial kernel on scale x space: K((lam, x), (mu, y)) = k(lam, mu, |x - y|) I_d.
///
/// Implementations are immutable after construction and may be shared across
/// threads.
class ScaleSpaceKernel {
 public:
  virtual ~ScaleSpaceKernel() = default;

  virtual RadialSample sample(double lam, double mu, double r) const = 0;

  double operator()(double lam, double mu, double r) const { return sample(lam, mu, r).value; }

  /// Binds a scale pair. Backends override this to hoist lookups out of the
  /// per-distance path.
  virtual RadialFunction bind(double lam, double mu) const {
    return [this, lam, mu](double r) { return sample(lam, mu, r); };
  }

  /// Finite Gaussian sum at a scale pair, if the kernel is one. Evaluators
  /// use it for vectorized paths.
  virtual std::optional<GaussianExpansion> expansion(double /*lam*/, double /*mu*/) const { return std::nullopt; }
};

/// Unit Gaussian exp(-r^2 / (2 s^2)).
template <typename Scalar>
Scalar gaussian(Scalar r, Scalar scale) {
  using std::exp;
  const Scalar z = r / scale;
  return exp(-z * z / Scalar(2));
}

}  // namespace mslddmm
