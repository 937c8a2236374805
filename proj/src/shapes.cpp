#include "mslddmm/shapes.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace mslddmm {

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::Vector2d rotate(const Eigen::Vector2d& p, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * p.x() - s * p.y(), s * p.x() + c * p.y()};
}

template <typename F>
Eigen::MatrixXd polar(const ShapeSpec& spec, F&& point_at) {
  Eigen::MatrixXd out(spec.count, 2);
  const Eigen::Vector2d c(spec.center[0], spec.center[1]);
  for (int i = 0; i < spec.count; ++i) {
    const double t = spec.phase + 2.0 * kPi * i / spec.count;
    out.row(i) = (c + rotate(point_at(t), spec.rotation)).transpose();
  }
  return out;
}

// Torso with two arms as sheared rectangles hinged at the shoulders.
Eigen::MatrixXd human_body(const ShapeSpec& spec) {
  const double h = spec.size;
  const double w = 0.4 * h;
  const double t = 0.15 * h;
  const double len = 0.6 * h;
  const Eigen::Vector2d right(std::cos(spec.right_arm), std::sin(spec.right_arm));
  const Eigen::Vector2d left(-std::cos(spec.left_arm), std::sin(spec.left_arm));
  const Eigen::Vector2d rs_low(w / 2, h - t), rs_high(w / 2, h);
  const Eigen::Vector2d ls_low(-w / 2, h - t), ls_high(-w / 2, h);
  std::vector<Eigen::Vector2d> v = {
      {-w / 2, 0.0}, {w / 2, 0.0}, rs_low, rs_low + len * right, rs_high + len * right, rs_high,
      ls_high,       ls_high + len * left, ls_low + len * left, ls_low,
  };
  Eigen::MatrixXd vertices(static_cast<Eigen::Index>(v.size()), 2);
  const Eigen::Vector2d c(spec.center[0], spec.center[1] - 0.5 * h);
  for (std::size_t i = 0; i < v.size(); ++i) vertices.row(static_cast<Eigen::Index>(i)) = (c + v[i]).transpose();
  return resample_closed_polygon(vertices, spec.count);
}

}  // namespace

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Ellipse: return "ellipse";
    case ShapeKind::BumpyEllipse: return "bumpy_ellipse";
    case ShapeKind::Flower: return "flower";
    case ShapeKind::SchematicHuman: return "schematic_human";
    case ShapeKind::Points: return "points";
  }
  return "unknown";
}

ShapeKind shape_kind_from_string(const std::string& name) {
  for (ShapeKind k : {ShapeKind::Circle, ShapeKind::Ellipse, ShapeKind::BumpyEllipse, ShapeKind::Flower,
                      ShapeKind::SchematicHuman, ShapeKind::Points})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown shape type '" + name + "'");
}

Eigen::MatrixXd resample_closed_polygon(const Eigen::MatrixXd& vertices, int count) {
  const Eigen::Index n = vertices.rows();
  if (n < 2 || count < 1) throw std::invalid_argument("polygon resampling needs two vertices and a positive count");
  std::vector<double> cumulative(static_cast<std::size_t>(n) + 1, 0.0);
  for (Eigen::Index i = 0; i < n; ++i)
    cumulative[static_cast<std::size_t>(i) + 1] =
        cumulative[static_cast<std::size_t>(i)] + (vertices.row((i + 1) % n) - vertices.row(i)).norm();
  const double total = cumulative.back();
  if (!(total > 0.0)) throw std::invalid_argument("degenerate polygon");
  Eigen::MatrixXd out(count, vertices.cols());
  Eigen::Index seg = 0;
  for (int i = 0; i < count; ++i) {
    const double s = total * i / count;
    while (cumulative[static_cast<std::size_t>(seg) + 1] <= s) ++seg;
    const double len = cumulative[static_cast<std::size_t>(seg) + 1] - cumulative[static_cast<std::size_t>(seg)];
    const double f = (s - cumulative[static_cast<std::size_t>(seg)]) / len;
    out.row(i) = (1.0 - f) * vertices.row(seg) + f * vertices.row((seg + 1) % n);
  }
  return out;
}

Eigen::MatrixXd generate_shape(const ShapeSpec& spec) {
  if (spec.kind == ShapeKind::Points) {
    if (spec.points.empty()) throw std::invalid_argument("explicit shape has no points");
    Eigen::MatrixXd out(static_cast<Eigen::Index>(spec.points.size()), 2);
    for (std::size_t i = 0; i < spec.points.size(); ++i)
      out.row(static_cast<Eigen::Index>(i)) << spec.points[i][0], spec.points[i][1];
    return out;
  }
  if (spec.count < 1) throw std::invalid_argument("shape point count must be positive");
  switch (spec.kind) {
    case ShapeKind::Circle:
      if (!(spec.radius > 0.0)) throw std::invalid_argument("circle radius must be positive");
      return polar(spec, [&](double t) { return Eigen::Vector2d(spec.radius * std::cos(t), spec.radius * std::sin(t)); });
    case ShapeKind::Ellipse:
    case ShapeKind::BumpyEllipse: {
      const double a = spec.radii[0], b = spec.radii[1];
      if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("ellipse semi-axes must be positive");
      const double amp = spec.kind == ShapeKind::BumpyEllipse ? spec.amplitude : 0.0;
      return polar(spec, [&](double t) {
        const Eigen::Vector2d p(a * std::cos(t), b * std::sin(t));
        const Eigen::Vector2d normal = Eigen::Vector2d(b * std::cos(t), a * std::sin(t)).normalized();
        return Eigen::Vector2d(p + amp * std::sin(spec.frequency * t) * normal);
      });
    }
    case ShapeKind::Flower: {
      if (!(spec.inner > 0.0 && spec.outer >= spec.inner)) throw std::invalid_argument("flower needs 0 < inner <= outer");
      return polar(spec, [&](double t) {
        const double r = spec.inner + (spec.outer - spec.inner) * 0.5 * (1.0 + std::cos(spec.petals * t));
        return Eigen::Vector2d(r * std::cos(t), r * std::sin(t));
      });
    }
    case ShapeKind::SchematicHuman: {
      if (!(spec.size > 0.0 && spec.head[0] > 0.0 && spec.head[1] > 0.0))
        throw std::invalid_argument("human size and head semi-axes must be positive");
      ShapeSpec head = spec;
      head.kind = ShapeKind::Ellipse;
      head.radii = spec.head;
      head.rotation = 0.0;
      head.center = {spec.center[0], spec.center[1] + 0.5 * spec.size + 0.05 * spec.size + spec.head[1]};
      Eigen::MatrixXd out(2 * spec.count, 2);
      out.topRows(spec.count) = generate_shape(head);
      out.bottomRows(spec.count) = human_body(spec);
      return out;
    }
    case ShapeKind::Points: break;
  }
  throw std::invalid_argument("unsupported shape");
}

double diameter(const Eigen::MatrixXd& points) {
  double best = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    for (Eigen::Index j = i + 1; j < points.rows(); ++j) best = std::max(best, (points.row(i) - points.row(j)).norm());
  return best;
}

}  // namespace mslddmm
