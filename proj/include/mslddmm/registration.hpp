#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <vector>

#include "mslddmm/flow_engine.hpp"
#include "mslddmm/kernel.hpp"

namespace mslddmm {

/// F(a) = 0.5 * dt * sum_i a_i^T K(x_i) a_i + w * sum_p |x_p(1) - T_p|^2 over
/// the explicit Euler discretization with `steps` steps.
struct Objective {
  const ScaleSpaceKernel* kernel = nullptr;
  LandmarkSystem system;
  int steps = 20;

  Objective(const ScaleSpaceKernel& k, LandmarkSystem s, int t) : kernel(&k), system(std::move(s)), steps(t) {}
};

struct Evaluation {
  double value = 0.0;
  double energy = 0.0;
  double match = 0.0;
};

Evaluation evaluate(const Objective& objective, const Controls& controls);

/// Exact gradient of the discretized objective by a reverse sweep through
/// the Euler steps. Costates P_i follow
///   P_T = 2 w (x_T - target),
///   P_i[r] = P_{i+1}[r] + dt sum_q s_rq (x_r - x_q) (P_{i+1}[r].a_q + P_{i+1}[q].a_r + a_r.a_q),
/// with s the kernel slope in c = |x|^2/2, and the control gradient is
///   dF/da_i[q] = dt sum_p K_qp (P_{i+1}[p] + a_i[p]).
Controls gradient(const Objective& objective, const Controls& controls, Evaluation* at = nullptr);

struct GradientCheck {
  double max_relative_error = 0.0;
  int worst_coordinate = -1;
  int coordinates = 0;
};

/// Compares gradient() with central differences of step h on the listed
/// flattened coordinates (all when empty). Per-coordinate error is
/// |fd - g| / max(|fd|, |g|, 1e-6 max_i |g_i|).
GradientCheck check_gradient(const Objective& objective, const Controls& controls, double h,
                             const std::vector<int>& coordinates = {});

enum class OptimizerMethod { LBFGS, GradientDescent };

struct OptimizerOptions {
  OptimizerMethod method = OptimizerMethod::LBFGS;
  int max_iterations = 1000;
  double tolerance = 1e-8;  ///< relative decrease and gradient sup-norm
  int memory = 10;
  double armijo = 1e-4;
  int max_halvings = 40;
  bool operator==(const OptimizerOptions&) const = default;
};

struct HistoryEntry {
  int iteration = 0;
  double value = 0.0;
  double energy = 0.0;
  double match = 0.0;
  double step = 0.0;
  double gradient_norm = 0.0;  ///< sup-norm
};

struct OptimizationResult {
  Controls controls;
  std::vector<HistoryEntry> history;  ///< entry 0 is the initial point
  bool converged = false;
  bool line_search_failed = false;
  int iterations = 0;
};

/// Descent with Armijo backtracking. Every accepted step strictly decreases
/// the objective; after max_halvings failed halvings the best iterate is
/// returned with line_search_failed set.
OptimizationResult optimize(const Objective& objective, const Controls& initial, const OptimizerOptions& options = {});

void write_history_csv(const std::vector<HistoryEntry>& history, const std::filesystem::path& path);

/// Serializes the landmark system with its controls; read_controls_json
/// restores both.
void write_controls_json(const LandmarkSystem& system, const Controls& controls, const std::filesystem::path& path);
std::pair<LandmarkSystem, Controls> read_controls_json(const std::filesystem::path& path);

}  // namespace mslddmm
