#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mslddmm/kernel.hpp"
#include "mslddmm/scale_ladder.hpp"

namespace mslddmm {

/// Landmarks at their base scales. Rows of initial/target are points; row p
/// lives at scale base_scales[scale_of[p]].
struct LandmarkSystem {
  int dimension = 2;
  std::vector<double> base_scales;
  std::vector<int> scale_of;
  Eigen::MatrixXd initial;
  Eigen::MatrixXd target;
  double weight = 1.0;

  /// Stacks one template/target pair per base scale.
  static LandmarkSystem from_groups(std::vector<double> scales, const std::vector<Eigen::MatrixXd>& templates,
                                    const std::vector<Eigen::MatrixXd>& targets, double weight);

  int size() const { return static_cast<int>(initial.rows()); }
  double scale(int p) const { return base_scales[static_cast<std::size_t>(scale_of[static_cast<std::size_t>(p)])]; }
  /// Row indices of the landmarks at base scale k.
  std::vector<int> group(int k) const;

  /// Throws std::invalid_argument on shape mismatches or base scales that
  /// are not ladder nodes (when a ladder is given).
  void validate(const ScaleLadder* ladder = nullptr) const;
};

/// Piecewise-constant-in-time controls: a[i] is N x d on [t_i, t_{i+1}).
struct Controls {
  std::vector<Eigen::MatrixXd> a;

  static Controls zero(int steps, int points, int dimension);
  int steps() const { return static_cast<int>(a.size()); }
  Eigen::VectorXd flatten() const;
  static Controls unflatten(const Eigen::VectorXd& v, int steps, int points, int dimension);
  /// Holds each step constant over `factor` substeps; the scaled flow is the
  /// same piecewise-constant control on a finer time grid.
  Controls refined(int factor) const;
};

/// Raised when positions stop being finite.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, int step) : std::runtime_error(what), step_(step) {}
  int step() const { return step_; }

 private:
  int step_;
};

struct FlowTrajectory {
  std::vector<Eigen::MatrixXd> x;  ///< T + 1 landmark configurations
  std::vector<double> norms;       ///< |v(t_i)|^2_W for each step
  double energy = 0.0;             ///< 0.5 * dt * sum of norms
  double dt = 0.0;
  int steps() const { return static_cast<int>(norms.size()); }
};

/// Scale-pair radial functions bound once per flow.
class BoundKernel {
 public:
  BoundKernel(const ScaleSpaceKernel& kernel, const LandmarkSystem& system);
  /// Radial function between query scale lam and every base scale.
  std::vector<RadialFunction> against_bases(double lam) const;
  const RadialFunction& pair(int k, int l) const {
    return pairs_[static_cast<std::size_t>(k) * static_cast<std::size_t>(m_) + static_cast<std::size_t>(l)];
  }
  const ScaleSpaceKernel& kernel() const { return kernel_; }

 private:
  const ScaleSpaceKernel& kernel_;
  std::vector<double> scales_;
  int m_ = 0;
  std::vector<RadialFunction> pairs_;
};

/// v(t_i, lam, x) = sum_p kappa_W(lam, lam_p, |x - x_p(t_i)|) a_p(t_i).
Eigen::VectorXd velocity(const ScaleSpaceKernel& kernel, const LandmarkSystem& system, const FlowTrajectory& trajectory,
                         const Controls& controls, int step, double lam, const Eigen::VectorXd& x);

/// Explicit Euler over controls.steps() steps of size 1/T.
FlowTrajectory integrate_forward(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                                 const Controls& controls);

/// Points origin + sum_a i_a * axes.col(a), i_a in [0, counts[a]); the first
/// axis varies fastest.
struct StructuredGrid {
  Eigen::VectorXd origin;
  Eigen::MatrixXd axes;  ///< d x d, columns are step vectors
  std::vector<int> counts;

  static StructuredGrid box(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, std::vector<int> counts);
  /// Bounding box of the rows of points grown by margin * extent on each side.
  static StructuredGrid around(const Eigen::MatrixXd& points, double margin, std::vector<int> counts);

  int dimension() const { return static_cast<int>(origin.size()); }
  int size() const;
  Eigen::MatrixXd points() const;
  int index(const std::vector<int>& multi) const;
};

struct DeformationField {
  double scale = 0.0;
  StructuredGrid grid;
  Eigen::MatrixXd source;        ///< P x d
  Eigen::MatrixXd mapped;        ///< P x d
  Eigen::VectorXd log_jacobian;  ///< P, NaN where det <= 0; empty until computed
  int folded_cells = 0;

  double max_displacement() const { return (mapped - source).rowwise().norm().maxCoeff(); }
  void write_csv(const std::filesystem::path& path) const;
  void write_binary(const std::filesystem::path& path) const;
  static DeformationField read_binary(const std::filesystem::path& path);
};

/// Forward flow of arbitrary points at scale lam; the points do not act on the
/// landmarks.
Eigen::MatrixXd transport_points(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                                 const FlowTrajectory& trajectory, const Controls& controls, double lam,
                                 const Eigen::MatrixXd& points);

/// Approximate inverse: y_i = y_{i+1} - dt v(t_i, lam, y_{i+1}) from t = 1 to 0.
Eigen::MatrixXd inverse_points(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                               const FlowTrajectory& trajectory, const Controls& controls, double lam,
                               const Eigen::MatrixXd& points);

DeformationField transport_grid(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                                const FlowTrajectory& trajectory, const Controls& controls, double lam,
                                const StructuredGrid& grid);

DeformationField inverse_map(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                             const FlowTrajectory& trajectory, const Controls& controls, double lam,
                             const StructuredGrid& grid);

/// rho_k = psi_{r_k} o psi_{r_{k-1}}^{-1} at every ladder node, rho_0 = psi_{r_0}.
std::vector<DeformationField> residual_maps(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                                            const FlowTrajectory& trajectory, const Controls& controls,
                                            const ScaleLadder& ladder, const StructuredGrid& grid);

struct CompositionCheck {
  double composition_error = 0.0;  ///< sup |rho_K o ... o rho_0 - psi_K| on the grid
  double inverse_error = 0.0;      ///< max over nodes of sup |psi_k^{-1} o psi_k - id|
};

/// Reconstructs psi at the last node from the residual chain.
CompositionCheck residual_composition_check(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                                            const FlowTrajectory& trajectory, const Controls& controls,
                                            const ScaleLadder& ladder, const StructuredGrid& grid);

/// Fills field.log_jacobian by second-order finite differences of the mapped
/// grid (central inside, one-sided on the boundary). Nonpositive determinants
/// become NaN and are counted in folded_cells.
void log_jacobian(DeformationField& field);

}  // namespace mslddmm
