#pragma once

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace mslddmm {

enum class ShapeKind { Circle, Ellipse, BumpyEllipse, Flower, SchematicHuman, Points };

/// Parametric 2D contour. Fields not used by a kind keep their defaults.
struct ShapeSpec {
  ShapeKind kind = ShapeKind::Circle;
  int count = 30;  ///< points per contour
  std::array<double, 2> center{0.0, 0.0};
  double radius = 1.0;                   ///< circle
  std::array<double, 2> radii{1.0, 1.0};  ///< ellipse, bumpy ellipse semi-axes
  double rotation = 0.0;                  ///< ellipse, bumpy ellipse, flower (radians)
  double phase = 0.0;                     ///< angular offset of the first sample (radians)
  double amplitude = 0.0;                 ///< bumpy ellipse normal displacement
  int frequency = 5;                      ///< bumpy ellipse bumps
  int petals = 5;                         ///< flower
  double inner = 0.5;                     ///< flower trough radius
  double outer = 1.0;                     ///< flower tip radius
  std::array<double, 2> head{0.25, 0.25};  ///< human head semi-axes
  double left_arm = 0.0;                  ///< human arm elevation (radians, 0 = horizontal)
  double right_arm = 0.0;
  double size = 1.0;  ///< human torso height
  std::vector<std::array<double, 2>> points;  ///< explicit coordinates

  bool operator==(const ShapeSpec&) const = default;
};

std::string to_string(ShapeKind kind);
/// Throws std::invalid_argument for unknown names.
ShapeKind shape_kind_from_string(const std::string& name);

/// Ordered points, one row each. Closed contours are sampled counterclockwise
/// from angle `phase` without repeating the start point. The schematic human
/// emits its head contour followed by its body contour, `count` points each.
/// Throws std::invalid_argument on nonpositive counts or radii.
Eigen::MatrixXd generate_shape(const ShapeSpec& spec);

/// Largest pairwise distance between rows.
double diameter(const Eigen::MatrixXd& points);

/// `count` points spaced evenly by arc length along the closed polygon.
Eigen::MatrixXd resample_closed_polygon(const Eigen::MatrixXd& vertices, int count);

}  // namespace mslddmm
