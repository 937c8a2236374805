#pragma once

#include <Eigen/Dense>

namespace mslddmm {

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct LpResult {
  LpStatus status = LpStatus::IterationLimit;
  Eigen::VectorXd z;       ///< primal minimizer
  double objective = 0.0;  ///< c^T z
  int iterations = 0;      ///< pivots over both phases
};

/// min c^T z subject to G z <= h with z free.
///
/// Solved through the standard-form dual min h^T y, G^T y = -c, y >= 0 by a
/// two-phase revised simplex with Bland's rule; z is read off as the
/// simplex multipliers of the optimal dual basis. The pivot sequence depends
/// only on the inputs, so repeated solves are bitwise identical.
///
/// Suited to many constraints over few variables (the dual has one row per
/// variable of z). Rows of G and entries of h should be of order one.
LpResult solve_inequality_lp(const Eigen::MatrixXd& G, const Eigen::VectorXd& h, const Eigen::VectorXd& c,
                             int max_iterations = 200000);

}  // namespace mslddmm
