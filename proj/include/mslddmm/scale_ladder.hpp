#pragma once

#include <optional>
#include <span>
#include <vector>

namespace mslddmm {

/// Discretization s1 = r_0 < r_1 < ... < r_n = s2 of the scale interval.
///
/// Indices are zero-based: node(k) for k in [0, n], interval k spans
/// [node(k), node(k+1)) and carries the per-scale kernel of width node(k).
class ScaleLadder {
 public:
  /// Queries further than this outside [s1, s2] are rejected; closer ones are clamped.
  static constexpr double kClampTolerance = 1e-12;

  explicit ScaleLadder(std::vector<double> nodes);

  /// Nodes first*step, (first+1)*step, ..., last*step.
  static ScaleLadder stepped(double step, int first, int last);
  static ScaleLadder uniform(double s1, double s2, int intervals);

  double s1() const { return nodes_.front(); }
  double s2() const { return nodes_.back(); }
  int intervals() const { return static_cast<int>(nodes_.size()) - 1; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  double node(int k) const { return nodes_[static_cast<std::size_t>(k)]; }
  double width(int k) const { return node(k + 1) - node(k); }
  std::span<const double> nodes() const { return nodes_; }

  /// Returns lam clamped into [s1, s2]; throws std::domain_error if lam is
  /// outside by more than kClampTolerance.
  double clamp(double lam) const;

  /// Interval k with node(k) <= lam < node(k+1); s2 maps to the last interval.
  int interval_of(double lam) const;

  /// Index of the node equal to lam (within tol), if any.
  std::optional<int> node_index(double lam, double tol = kClampTolerance) const;

  bool operator==(const ScaleLadder&) const = default;

 private:
  std::vector<double> nodes_;
};

}  // namespace mslddmm
