#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mslddmm/registration.hpp"
#include "mslddmm/scale_kernels.hpp"
#include "mslddmm/scale_ladder.hpp"
#include "mslddmm/shapes.hpp"

namespace mslddmm {

/// Raised for malformed or inconsistent experiment configurations.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Nodes r_n = n * step for n = s1/step .. s2/step.
struct LadderSpec {
  double s1 = 0.1;
  double s2 = 2.0;
  double step = 0.1;
  ScaleLadder build() const;
  bool operator==(const LadderSpec&) const = default;
};

enum class KernelBackend { Fitted, Spectral, ClosedFormDirac, IntegratedDirac };

std::string to_string(KernelBackend backend);
KernelBackend kernel_backend_from_string(const std::string& name);

struct KernelSpec {
  KernelBackend backend = KernelBackend::Fitted;
  int basis_size = 15;
  int frequencies = 256;
  double max_residual = 1e-2;  ///< per-pair residual bound relative to the pair's peak
  bool interpolate = false;    ///< linear coefficient interpolation between nodes
  bool operator==(const KernelSpec&) const = default;
};

/// Template and target contours matched at one base scale.
struct ShapePair {
  double scale = 0.1;
  ShapeSpec template_shape;
  ShapeSpec target_shape;
  bool operator==(const ShapePair&) const = default;
};

struct GridSpec {
  std::vector<int> counts{64, 64};
  double margin = 0.25;    ///< fraction of the landmark bounding box added on each side
  std::vector<int> nodes;  ///< ladder nodes to export; empty means all
  bool render_svg = false;
  bool operator==(const GridSpec&) const = default;
};

struct Thresholds {
  double rmse_fraction = 0.02;  ///< endpoint RMSE bound relative to the target diameter
  double composition_ratio = 10.0;
  bool operator==(const Thresholds&) const = default;
};

struct ExperimentConfig {
  static constexpr int kSchemaVersion = 1;

  std::string name = "experiment";
  LadderSpec ladder;
  ScaleMeasure measure = LebesgueMeasure{};
  KernelSpec kernel;
  std::vector<ShapePair> shapes;
  int time_steps = 20;
  double weight = 1.0;
  OptimizerOptions optimizer;
  GridSpec grid;
  Thresholds thresholds;
  std::uint64_t seed = 0;
  std::string output_dir = "runs";

  /// Throws ConfigError when base scales are off the ladder, shape pairs
  /// disagree in point count, or the measure and backend are incompatible.
  void validate() const;

  std::vector<double> base_scales() const;
  LandmarkSystem landmark_system() const;

  bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Throws ConfigError on unknown keys, wrong types or a schema mismatch.
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON and
/// taken as a string if that fails; array elements are addressed by index.
void apply_override(nlohmann::json& document, const std::string& assignment);

/// Reads, overrides, parses and validates.
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Canonical serialization; the basis of the run hash.
std::string canonical_dump(const ExperimentConfig& config);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

}  // namespace mslddmm
