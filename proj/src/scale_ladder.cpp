#include "mslddmm/scale_ladder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mslddmm {

ScaleLadder::ScaleLadder(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2) throw std::invalid_argument("scale ladder needs at least two nodes");
  if (!(nodes_.front() > 0.0)) throw std::invalid_argument("scale ladder requires s1 > 0");
  for (std::size_t k = 0; k + 1 < nodes_.size(); ++k) {
    if (!(nodes_[k + 1] > nodes_[k]))
      throw std::invalid_argument("scale ladder nodes must be strictly increasing (node " +
                                  std::to_string(k + 1) + ")");
  }
  if (!std::isfinite(nodes_.back())) throw std::invalid_argument("scale ladder node is not finite");
}

ScaleLadder ScaleLadder::stepped(double step, int first, int last) {
  if (last <= first) throw std::invalid_argument("stepped ladder needs last > first");
  std::vector<double> nodes;
  for (int n = first; n <= last; ++n) nodes.push_back(n * step);
  return ScaleLadder(std::move(nodes));
}

ScaleLadder ScaleLadder::uniform(double s1, double s2, int intervals) {
  if (intervals < 1) throw std::invalid_argument("uniform ladder needs at least one interval");
  std::vector<double> nodes(static_cast<std::size_t>(intervals) + 1);
  for (int k = 0; k <= intervals; ++k) nodes[static_cast<std::size_t>(k)] = s1 + (s2 - s1) * k / intervals;
  nodes.back() = s2;
  return ScaleLadder(std::move(nodes));
}

double ScaleLadder::clamp(double lam) const {
  if (lam < s1()) {
    if (s1() - lam > kClampTolerance)
      throw std::domain_error("scale " + std::to_string(lam) + " below s1");
    return s1();
  }
  if (lam > s2()) {
    if (lam - s2() > kClampTolerance)
      throw std::domain_error("scale " + std::to_string(lam) + " above s2");
    return s2();
  }
  return lam;
}

int ScaleLadder::interval_of(double lam) const {
  lam = clamp(lam);
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), lam);
  int k = static_cast<int>(it - nodes_.begin()) - 1;
  return std::clamp(k, 0, intervals() - 1);
}

std::optional<int> ScaleLadder::node_index(double lam, double tol) const {
  auto it = std::lower_bound(nodes_.begin(), nodes_.end(), lam - tol);
  if (it != nodes_.end() && std::abs(*it - lam) <= tol) return static_cast<int>(it - nodes_.begin());
  return std::nullopt;
}

}  // namespace mslddmm
