#include "mslddmm/simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mslddmm {

namespace {

constexpr double kCostTol = 1e-12;
constexpr double kPivotTol = 1e-9;
constexpr double kPerturbation = 1e-11;

enum class PhaseStatus { Optimal, Unbounded, IterationLimit };

// Revised simplex on min cost^T x, A x = b, x >= 0 from a feasible basis.
// Columns j >= enter_limit may stay basic but never enter.
PhaseStatus run_phase(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, const Eigen::VectorXd& cost,
                      std::vector<int>& basis, int enter_limit, int& iterations, int max_iterations) {
  const int m = static_cast<int>(A.rows());
  std::vector<char> in_basis(static_cast<std::size_t>(A.cols()), 0);
  for (int j : basis) in_basis[static_cast<std::size_t>(j)] = 1;
  Eigen::MatrixXd B(m, m);
  Eigen::VectorXd cost_b(m);
  while (iterations < max_iterations) {
    for (int i = 0; i < m; ++i) {
      B.col(i) = A.col(basis[static_cast<std::size_t>(i)]);
      cost_b(i) = cost(basis[static_cast<std::size_t>(i)]);
    }
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    const Eigen::VectorXd x_b = lu.solve(b);
    const Eigen::VectorXd pi = lu.transpose().solve(cost_b);

    // Bland: lowest-index improving column enters.
    const double pi_norm = pi.lpNorm<Eigen::Infinity>();
    int entering = -1;
    for (int j = 0; j < enter_limit; ++j) {
      if (in_basis[static_cast<std::size_t>(j)]) continue;
      const double reduced = cost(j) - pi.dot(A.col(j));
      const double scale = std::abs(cost(j)) + pi_norm * A.col(j).lpNorm<1>();
      if (reduced < -kCostTol * std::max(scale, 1.0)) {
        entering = j;
        break;
      }
    }
    if (entering < 0) return PhaseStatus::Optimal;

    const Eigen::VectorXd u = lu.solve(A.col(entering));
    const double pivot_floor = kPivotTol * std::max(u.lpNorm<Eigen::Infinity>(), 1.0);
    int leaving = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      if (u(i) <= pivot_floor) continue;
      const double ratio = std::max(x_b(i), 0.0) / u(i);
      // Bland tie-break: smallest basic variable index leaves among near-equal ratios.
      const double tie = 1e-12 * std::max(best, 1e-300);
      if (leaving < 0 || ratio < best - tie ||
          (ratio <= best + tie && basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leaving)])) {
        best = std::min(best, ratio);
        leaving = i;
      }
    }
    if (leaving < 0) return PhaseStatus::Unbounded;
    in_basis[static_cast<std::size_t>(basis[static_cast<std::size_t>(leaving)])] = 0;
    in_basis[static_cast<std::size_t>(entering)] = 1;
    basis[static_cast<std::size_t>(leaving)] = entering;
    ++iterations;
  }
  return PhaseStatus::IterationLimit;
}

}  // namespace

LpResult solve_inequality_lp(const Eigen::MatrixXd& G, const Eigen::VectorXd& h, const Eigen::VectorXd& c,
                             int max_iterations) {
  if (G.rows() != h.size() || G.cols() != c.size())
    throw std::invalid_argument("solve_inequality_lp: inconsistent dimensions");
  const int m = static_cast<int>(G.cols());  // dual rows
  const int n = static_cast<int>(G.rows());  // dual structural columns

  // Dual in standard form with rows signed so the right-hand side is nonnegative.
  Eigen::VectorXd sign = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd b = -c;
  for (int i = 0; i < m; ++i)
    if (b(i) < 0.0) {
      sign(i) = -1.0;
      b(i) = -b(i);
    }
  // Distinct positive shifts break the dual degeneracy that makes roundoff
  // cycle under Bland's rule. z stays feasible because it depends on the
  // final basis only; the objective moves by at most kPerturbation * |z|_1.
  const double b_scale = std::max(b.lpNorm<Eigen::Infinity>(), 1.0);
  for (int i = 0; i < m; ++i) b(i) += kPerturbation * b_scale * (1.0 + std::fmod(0.6180339887498949 * (i + 1), 1.0));
  Eigen::MatrixXd A(m, n + m);
  A.leftCols(n) = sign.asDiagonal() * G.transpose();
  A.rightCols(m).setIdentity();

  LpResult result;
  std::vector<int> basis(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) basis[static_cast<std::size_t>(i)] = n + i;

  Eigen::VectorXd cost1 = Eigen::VectorXd::Zero(n + m);
  cost1.tail(m).setOnes();
  PhaseStatus status = run_phase(A, b, cost1, basis, n, result.iterations, max_iterations);
  if (status == PhaseStatus::IterationLimit) return result;

  // Phase-one optimum must have driven every artificial to zero.
  Eigen::MatrixXd B(m, m);
  for (int i = 0; i < m; ++i) B.col(i) = A.col(basis[static_cast<std::size_t>(i)]);
  {
    const Eigen::VectorXd x_b = Eigen::PartialPivLU<Eigen::MatrixXd>(B).solve(b);
    double artificial = 0.0;
    for (int i = 0; i < m; ++i)
      if (basis[static_cast<std::size_t>(i)] >= n) artificial += std::abs(x_b(i));
    if (artificial > 1e-9 * (1.0 + b.lpNorm<Eigen::Infinity>())) {
      // Dual infeasible: the primal is unbounded (or itself infeasible).
      result.status = LpStatus::Unbounded;
      return result;
    }
  }
  // Pivot zero-level artificials out where a structural column can replace them.
  for (int i = 0; i < m; ++i) {
    if (basis[static_cast<std::size_t>(i)] < n) continue;
    for (int r = 0; r < m; ++r) B.col(r) = A.col(basis[static_cast<std::size_t>(r)]);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    for (int j = 0; j < n; ++j) {
      if (std::find(basis.begin(), basis.end(), j) != basis.end()) continue;
      const Eigen::VectorXd u = lu.solve(A.col(j));
      if (std::abs(u(i)) > 1e-9) {
        basis[static_cast<std::size_t>(i)] = j;
        break;
      }
    }
  }

  Eigen::VectorXd cost2 = Eigen::VectorXd::Zero(n + m);
  cost2.head(n) = h;
  status = run_phase(A, b, cost2, basis, n, result.iterations, max_iterations);
  if (status == PhaseStatus::IterationLimit) return result;
  if (status == PhaseStatus::Unbounded) {
    // Dual unbounded below means the primal constraints are inconsistent.
    result.status = LpStatus::Infeasible;
    return result;
  }

  Eigen::VectorXd cost_b(m);
  for (int i = 0; i < m; ++i) {
    B.col(i) = A.col(basis[static_cast<std::size_t>(i)]);
    cost_b(i) = cost2(basis[static_cast<std::size_t>(i)]);
  }
  const Eigen::VectorXd pi = Eigen::PartialPivLU<Eigen::MatrixXd>(B).transpose().solve(cost_b);
  result.z = sign.cwiseProduct(pi);
  result.objective = c.dot(result.z);
  result.status = LpStatus::Optimal;
  return result;
}

}  // namespace mslddmm
