#include "mslddmm/flow_engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>

#include "mslddmm/parallel.hpp"

namespace mslddmm {

LandmarkSystem LandmarkSystem::from_groups(std::vector<double> scales, const std::vector<Eigen::MatrixXd>& templates,
                                           const std::vector<Eigen::MatrixXd>& targets, double weight) {
  if (scales.size() != templates.size() || scales.size() != targets.size())
    throw std::invalid_argument("one template and one target per base scale required");
  if (scales.empty()) throw std::invalid_argument("at least one base scale required");
  LandmarkSystem sys;
  sys.dimension = static_cast<int>(templates.front().cols());
  sys.base_scales = std::move(scales);
  sys.weight = weight;
  Eigen::Index total = 0;
  for (std::size_t k = 0; k < templates.size(); ++k) {
    if (templates[k].rows() != targets[k].rows() || templates[k].cols() != targets[k].cols())
      throw std::invalid_argument("template and target point counts differ at base scale " + std::to_string(k));
    if (templates[k].cols() != sys.dimension) throw std::invalid_argument("mixed point dimensions");
    total += templates[k].rows();
  }
  sys.initial.resize(total, sys.dimension);
  sys.target.resize(total, sys.dimension);
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < templates.size(); ++k) {
    sys.initial.middleRows(row, templates[k].rows()) = templates[k];
    sys.target.middleRows(row, targets[k].rows()) = targets[k];
    for (Eigen::Index p = 0; p < templates[k].rows(); ++p) sys.scale_of.push_back(static_cast<int>(k));
    row += templates[k].rows();
  }
  return sys;
}

std::vector<int> LandmarkSystem::group(int k) const {
  std::vector<int> out;
  for (int p = 0; p < size(); ++p)
    if (scale_of[static_cast<std::size_t>(p)] == k) out.push_back(p);
  return out;
}

void LandmarkSystem::validate(const ScaleLadder* ladder) const {
  if (dimension < 1) throw std::invalid_argument("dimension must be positive");
  if (initial.cols() != dimension || target.cols() != dimension || initial.rows() != target.rows())
    throw std::invalid_argument("initial and target landmark arrays differ in shape");
  if (static_cast<Eigen::Index>(scale_of.size()) != initial.rows())
    throw std::invalid_argument("every landmark needs a base scale");
  for (int k : scale_of)
    if (k < 0 || k >= static_cast<int>(base_scales.size())) throw std::invalid_argument("base scale index out of range");
  if (!(weight >= 0.0)) throw std::invalid_argument("matching weight must be nonnegative");
  if (!initial.allFinite() || !target.allFinite()) throw std::invalid_argument("landmarks must be finite");
  if (ladder)
    for (double s : base_scales)
      if (!ladder->node_index(s)) throw std::invalid_argument("base scale " + std::to_string(s) + " is not a ladder node");
}

Controls Controls::zero(int steps, int points, int dimension) {
  if (steps < 1) throw std::invalid_argument("at least one time step required");
  Controls c;
  c.a.assign(static_cast<std::size_t>(steps), Eigen::MatrixXd::Zero(points, dimension));
  return c;
}

Eigen::VectorXd Controls::flatten() const {
  if (a.empty()) return {};
  const Eigen::Index block = a.front().size();
  Eigen::VectorXd v(block * steps());
  for (int i = 0; i < steps(); ++i) {
    const Eigen::MatrixXd& m = a[static_cast<std::size_t>(i)];
    for (Eigen::Index p = 0; p < m.rows(); ++p)
      for (Eigen::Index c = 0; c < m.cols(); ++c) v(i * block + p * m.cols() + c) = m(p, c);
  }
  return v;
}

Controls Controls::unflatten(const Eigen::VectorXd& v, int steps, int points, int dimension) {
  if (v.size() != static_cast<Eigen::Index>(steps) * points * dimension)
    throw std::invalid_argument("flattened control vector has the wrong length");
  Controls c = zero(steps, points, dimension);
  const Eigen::Index block = static_cast<Eigen::Index>(points) * dimension;
  for (int i = 0; i < steps; ++i)
    for (int p = 0; p < points; ++p)
      for (int k = 0; k < dimension; ++k) c.a[static_cast<std::size_t>(i)](p, k) = v(i * block + p * dimension + k);
  return c;
}

Controls Controls::refined(int factor) const {
  if (factor < 1) throw std::invalid_argument("refinement factor must be positive");
  Controls out;
  for (const auto& m : a)
    for (int r = 0; r < factor; ++r) out.a.push_back(m);
  return out;
}

// ---------------------------------------------------------------------------

BoundKernel::BoundKernel(const ScaleSpaceKernel& kernel, const LandmarkSystem& system)
    : kernel_(kernel), scales_(system.base_scales), m_(static_cast<int>(system.base_scales.size())) {
  for (int k = 0; k < m_; ++k)
    for (int l = 0; l < m_; ++l) pairs_.push_back(kernel_.bind(scales_[static_cast<std::size_t>(k)], scales_[static_cast<std::size_t>(l)]));
}

std::vector<RadialFunction> BoundKernel::against_bases(double lam) const {
  std::vector<RadialFunction> out;
  for (double s : scales_) out.push_back(kernel_.bind(lam, s));
  return out;
}

namespace {

void check_controls(const LandmarkSystem& system, const Controls& controls) {
  if (controls.steps() < 1) throw std::invalid_argument("at least one time step required");
  for (const auto& m : controls.a)
    if (m.rows() != system.size() || m.cols() != system.dimension)
      throw std::invalid_argument("control shape does not match the landmark system");
}

Eigen::VectorXd velocity_at(const std::vector<RadialFunction>& funcs, const LandmarkSystem& system,
                            const Eigen::MatrixXd& x, const Eigen::MatrixXd& a, const Eigen::VectorXd& y) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(y.size());
  for (Eigen::Index p = 0; p < x.rows(); ++p) {
    const double r = (y - x.row(p).transpose()).norm();
    v += funcs[static_cast<std::size_t>(system.scale_of[static_cast<std::size_t>(p)])](r).value * a.row(p).transpose();
  }
  return v;
}

// Cubic Hermite table of a radial profile on [0, R]; exact beyond R. R is
// where the profile has decayed below 1e-15 of its peak.
class RadialTable {
 public:
  explicit RadialTable(RadialFunction f) : f_(std::move(f)) {
    const double peak = std::max(std::abs(f_(0.0).value), 1e-300);
    double R = 0.125;
    while (R < 1e3 && (std::abs(f_(R).value) > 1e-15 * peak || std::abs(f_(1.5 * R).value) > 1e-15 * peak)) R *= 2.0;
    range_ = R;
    h_ = R / kKnots;
    value_.resize(kKnots + 1);
    deriv_.resize(kKnots + 1);
    for (int i = 0; i <= kKnots; ++i) {
      const double r = i * h_;
      const RadialSample s = f_(r);
      value_[static_cast<std::size_t>(i)] = s.value;
      deriv_[static_cast<std::size_t>(i)] = s.slope * r * h_;
    }
  }

  double operator()(double r) const {
    if (!(r < range_)) return f_(r).value;
    const double u = r / h_;
    const auto i = static_cast<std::size_t>(u);
    const double t = u - static_cast<double>(i);
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * value_[i] + (t3 - 2 * t2 + t) * deriv_[i] + (-2 * t3 + 3 * t2) * value_[i + 1] +
           (t3 - t2) * deriv_[i + 1];
  }

 private:
  static constexpr int kKnots = 1 << 15;
  RadialFunction f_;
  double range_ = 0.0;
  double h_ = 0.0;
  std::vector<double> value_, deriv_;
};

enum class Direction { Forward, Backward };

Eigen::MatrixXd flow_points(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                            const FlowTrajectory& trajectory, const Controls& controls, double lam,
                            const Eigen::MatrixXd& points, Direction direction) {
  check_controls(system, controls);
  if (trajectory.steps() != controls.steps()) throw std::invalid_argument("trajectory and controls differ in length");
  const int m = static_cast<int>(system.base_scales.size());
  std::vector<RadialTable> table;
  std::vector<std::vector<int>> groups;
  for (int k = 0; k < m; ++k) {
    table.emplace_back(kernel.bind(lam, system.base_scales[static_cast<std::size_t>(k)]));
    groups.push_back(system.group(k));
  }
  // Landmarks and controls regrouped by base scale, once per step.
  const int T = controls.steps();
  std::vector<std::vector<Eigen::MatrixXd>> xg(static_cast<std::size_t>(T)), ag(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i)
    for (int k = 0; k < m; ++k) {
      const auto& idx = groups[static_cast<std::size_t>(k)];
      xg[static_cast<std::size_t>(i)].push_back(trajectory.x[static_cast<std::size_t>(i)](idx, Eigen::all));
      ag[static_cast<std::size_t>(i)].push_back(controls.a[static_cast<std::size_t>(i)](idx, Eigen::all));
    }
  const double dt = trajectory.dt;
  Eigen::MatrixXd out = points;
  parallel_for(static_cast<std::size_t>(points.rows()), [&](std::size_t begin, std::size_t end) {
    for (std::size_t row = begin; row < end; ++row) {
      Eigen::RowVectorXd y = out.row(static_cast<Eigen::Index>(row));
      for (int s = 0; s < T; ++s) {
        const auto i = static_cast<std::size_t>(direction == Direction::Forward ? s : T - 1 - s);
        Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(y.size());
        for (int k = 0; k < m; ++k) {
          const Eigen::MatrixXd& x = xg[i][static_cast<std::size_t>(k)];
          if (x.rows() == 0) continue;
          const RadialTable& f = table[static_cast<std::size_t>(k)];
          const Eigen::MatrixXd& a = ag[i][static_cast<std::size_t>(k)];
          for (Eigen::Index p = 0; p < x.rows(); ++p) v.noalias() += f((x.row(p) - y).norm()) * a.row(p);
        }
        if (direction == Direction::Forward)
          y += dt * v;
        else
          y -= dt * v;
        if (!y.allFinite()) throw NumericalFailure("grid point left the finite range", static_cast<int>(i));
      }
      out.row(static_cast<Eigen::Index>(row)) = y;
    }
  });
  return out;
}

}  // namespace

Eigen::VectorXd velocity(const ScaleSpaceKernel& kernel, const LandmarkSystem& system, const FlowTrajectory& trajectory,
                         const Controls& controls, int step, double lam, const Eigen::VectorXd& x) {
  if (step < 0 || step >= controls.steps()) throw std::out_of_range("time step outside the control range");
  return velocity_at(BoundKernel(kernel, system).against_bases(lam), system, trajectory.x[static_cast<std::size_t>(step)],
                     controls.a[static_cast<std::size_t>(step)], x);
}

FlowTrajectory integrate_forward(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                                 const Controls& controls) {
  check_controls(system, controls);
  const BoundKernel bound(kernel, system);
  const int T = controls.steps();
  const int N = system.size();
  FlowTrajectory traj;
  traj.dt = 1.0 / T;
  traj.x.reserve(static_cast<std::size_t>(T) + 1);
  traj.x.push_back(system.initial);
  Eigen::MatrixXd K(N, N);
  for (int i = 0; i < T; ++i) {
    const Eigen::MatrixXd& x = traj.x.back();
    const Eigen::MatrixXd& a = controls.a[static_cast<std::size_t>(i)];
    for (int p = 0; p < N; ++p)
      for (int q = 0; q <= p; ++q) {
        const double r = (x.row(p) - x.row(q)).norm();
        const double k = bound.pair(system.scale_of[static_cast<std::size_t>(p)],
                                    system.scale_of[static_cast<std::size_t>(q)])(r).value;
        K(p, q) = k;
        K(q, p) = k;
      }
    const Eigen::MatrixXd v = K * a;
    traj.norms.push_back((a.transpose() * v).trace());
    Eigen::MatrixXd next = x + traj.dt * v;
    if (!next.allFinite()) throw NumericalFailure("landmark positions left the finite range at step " + std::to_string(i), i);
    traj.x.push_back(std::move(next));
  }
  double sum = 0.0;
  for (double n : traj.norms) sum += n;
  traj.energy = 0.5 * traj.dt * sum;
  return traj;
}

// ---------------------------------------------------------------------------

StructuredGrid StructuredGrid::box(const Eigen::VectorXd& lower, const Eigen::VectorXd& upper, std::vector<int> counts) {
  const Eigen::Index d = lower.size();
  if (upper.size() != d || static_cast<Eigen::Index>(counts.size()) != d)
    throw std::invalid_argument("grid bounds and counts differ in dimension");
  StructuredGrid g;
  g.origin = lower;
  g.axes = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    if (counts[static_cast<std::size_t>(a)] < 2) throw std::invalid_argument("grid needs at least two points per axis");
    if (!(upper(a) > lower(a))) throw std::invalid_argument("grid box must have positive extent");
    g.axes(a, a) = (upper(a) - lower(a)) / (counts[static_cast<std::size_t>(a)] - 1);
  }
  g.counts = std::move(counts);
  return g;
}

StructuredGrid StructuredGrid::around(const Eigen::MatrixXd& points, double margin, std::vector<int> counts) {
  Eigen::VectorXd lo = points.colwise().minCoeff().transpose();
  Eigen::VectorXd hi = points.colwise().maxCoeff().transpose();
  const Eigen::VectorXd extent = (hi - lo).cwiseMax(1e-6 * std::max(1.0, (hi - lo).maxCoeff()));
  return box(lo - margin * extent, hi + margin * extent, std::move(counts));
}

int StructuredGrid::size() const {
  int n = 1;
  for (int c : counts) n *= c;
  return n;
}

int StructuredGrid::index(const std::vector<int>& multi) const {
  int idx = 0;
  int stride = 1;
  for (std::size_t a = 0; a < counts.size(); ++a) {
    idx += multi[a] * stride;
    stride *= counts[a];
  }
  return idx;
}

Eigen::MatrixXd StructuredGrid::points() const {
  const int d = dimension();
  Eigen::MatrixXd out(size(), d);
  std::vector<int> multi(static_cast<std::size_t>(d), 0);
  for (int p = 0; p < size(); ++p) {
    Eigen::VectorXd x = origin;
    for (int a = 0; a < d; ++a) x += multi[static_cast<std::size_t>(a)] * axes.col(a);
    out.row(p) = x.transpose();
    for (int a = 0; a < d; ++a) {
      if (++multi[static_cast<std::size_t>(a)] < counts[static_cast<std::size_t>(a)]) break;
      multi[static_cast<std::size_t>(a)] = 0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd transport_points(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                                 const FlowTrajectory& trajectory, const Controls& controls, double lam,
                                 const Eigen::MatrixXd& points) {
  return flow_points(kernel, system, trajectory, controls, lam, points, Direction::Forward);
}

Eigen::MatrixXd inverse_points(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                               const FlowTrajectory& trajectory, const Controls& controls, double lam,
                               const Eigen::MatrixXd& points) {
  return flow_points(kernel, system, trajectory, controls, lam, points, Direction::Backward);
}

DeformationField transport_grid(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                                const FlowTrajectory& trajectory, const Controls& controls, double lam,
                                const StructuredGrid& grid) {
  DeformationField f;
  f.scale = lam;
  f.grid = grid;
  f.source = grid.points();
  f.mapped = transport_points(kernel, system, trajectory, controls, lam, f.source);
  return f;
}

DeformationField inverse_map(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                             const FlowTrajectory& trajectory, const Controls& controls, double lam,
                             const StructuredGrid& grid) {
  DeformationField f;
  f.scale = lam;
  f.grid = grid;
  f.source = grid.points();
  f.mapped = inverse_points(kernel, system, trajectory, controls, lam, f.source);
  return f;
}

std::vector<DeformationField> residual_maps(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                                            const FlowTrajectory& trajectory, const Controls& controls,
                                            const ScaleLadder& ladder, const StructuredGrid& grid) {
  std::vector<DeformationField> out;
  const Eigen::MatrixXd source = grid.points();
  for (int k = 0; k < ladder.node_count(); ++k) {
    DeformationField f;
    f.scale = ladder.node(k);
    f.grid = grid;
    f.source = source;
    const Eigen::MatrixXd pulled =
        k == 0 ? source : inverse_points(kernel, system, trajectory, controls, ladder.node(k - 1), source);
    f.mapped = transport_points(kernel, system, trajectory, controls, ladder.node(k), pulled);
    out.push_back(std::move(f));
  }
  return out;
}

CompositionCheck residual_composition_check(const ScaleSpaceKernel& kernel, const LandmarkSystem& system,
                                            const FlowTrajectory& trajectory, const Controls& controls,
                                            const ScaleLadder& ladder, const StructuredGrid& grid) {
  const Eigen::MatrixXd source = grid.points();
  const int last = ladder.node_count() - 1;
  CompositionCheck check;
  Eigen::MatrixXd chain = source;
  for (int k = 0; k <= last; ++k) {
    const double lam = ladder.node(k);
    const Eigen::MatrixXd forward = transport_points(kernel, system, trajectory, controls, lam, source);
    const Eigen::MatrixXd back = inverse_points(kernel, system, trajectory, controls, lam, forward);
    check.inverse_error = std::max(check.inverse_error, (back - source).rowwise().norm().maxCoeff());
    if (k > 0) chain = inverse_points(kernel, system, trajectory, controls, ladder.node(k - 1), chain);
    chain = transport_points(kernel, system, trajectory, controls, lam, chain);
    if (k == last) check.composition_error = (chain - forward).rowwise().norm().maxCoeff();
  }
  return check;
}

void log_jacobian(DeformationField& field) {
  const StructuredGrid& g = field.grid;
  const int d = g.dimension();
  const int P = g.size();
  if (field.mapped.rows() != P || field.mapped.cols() != d)
    throw std::invalid_argument("mapped points do not match the grid");
  const double log_det_axes = std::log(std::abs(g.axes.determinant()));
  field.log_jacobian.resize(P);
  field.folded_cells = 0;
  std::vector<int> stride(static_cast<std::size_t>(d), 1);
  for (int a = 1; a < d; ++a)
    stride[static_cast<std::size_t>(a)] = stride[static_cast<std::size_t>(a) - 1] * g.counts[static_cast<std::size_t>(a) - 1];
  const double axes_sign = g.axes.determinant() > 0.0 ? 1.0 : -1.0;
  std::vector<int> multi(static_cast<std::size_t>(d), 0);
  Eigen::MatrixXd D(d, d);
  for (int p = 0; p < P; ++p) {
    for (int a = 0; a < d; ++a) {
      const int i = multi[static_cast<std::size_t>(a)];
      const int n = g.counts[static_cast<std::size_t>(a)];
      const int s = stride[static_cast<std::size_t>(a)];
      auto at = [&](int offset) { return field.mapped.row(p + offset * s).transpose(); };
      if (n == 2)
        D.col(a) = i == 0 ? Eigen::VectorXd(at(1) - at(0)) : Eigen::VectorXd(at(0) - at(-1));
      else if (i == 0)
        D.col(a) = 0.5 * (-3.0 * at(0) + 4.0 * at(1) - at(2));
      else if (i == n - 1)
        D.col(a) = 0.5 * (3.0 * at(0) - 4.0 * at(-1) + at(-2));
      else
        D.col(a) = 0.5 * (at(1) - at(-1));
    }
    const double det = axes_sign * D.determinant();
    if (det > 0.0 && std::isfinite(det)) {
      field.log_jacobian(p) = std::log(det) - log_det_axes;
    } else {
      field.log_jacobian(p) = std::numeric_limits<double>::quiet_NaN();
      ++field.folded_cells;
    }
    for (int a = 0; a < d; ++a) {
      if (++multi[static_cast<std::size_t>(a)] < g.counts[static_cast<std::size_t>(a)]) break;
      multi[static_cast<std::size_t>(a)] = 0;
    }
  }
}

// ---------------------------------------------------------------------------

void DeformationField::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  const Eigen::Index d = source.cols();
  static const char* names[] = {"x", "y", "z"};
  for (Eigen::Index c = 0; c < d; ++c) out << (d <= 3 ? names[c] : ("x" + std::to_string(c)).c_str()) << ',';
  for (Eigen::Index c = 0; c < d; ++c) out << "psi" << (d <= 3 ? names[c] : std::to_string(c).c_str()) << ',';
  out << "logJac\n" << std::setprecision(17);
  for (Eigen::Index p = 0; p < source.rows(); ++p) {
    for (Eigen::Index c = 0; c < d; ++c) out << source(p, c) << ',';
    for (Eigen::Index c = 0; c < d; ++c) out << mapped(p, c) << ',';
    if (log_jacobian.size() == source.rows())
      out << log_jacobian(p);
    else
      out << "nan";
    out << '\n';
  }
}

namespace {

constexpr char kFieldMagic[8] = {'M', 'S', 'F', 'I', 'E', 'L', 'D', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated deformation field file");
  return v;
}

}  // namespace

// Little-endian layout: magic, f64 scale, i32 d, i32 counts[d], f64 origin[d],
// f64 axes[d*d] (column-major), i32 has_logjac, f64 mapped[P*d] (row-major),
// f64 logjac[P] if present.
void DeformationField::write_binary(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out.write(kFieldMagic, sizeof(kFieldMagic));
  put<double>(out, scale);
  const int d = grid.dimension();
  put<std::int32_t>(out, d);
  for (int c : grid.counts) put<std::int32_t>(out, c);
  for (int a = 0; a < d; ++a) put<double>(out, grid.origin(a));
  for (Eigen::Index i = 0; i < grid.axes.size(); ++i) put<double>(out, grid.axes.data()[i]);
  const bool has = log_jacobian.size() == mapped.rows();
  put<std::int32_t>(out, has ? 1 : 0);
  for (Eigen::Index p = 0; p < mapped.rows(); ++p)
    for (Eigen::Index c = 0; c < mapped.cols(); ++c) put<double>(out, mapped(p, c));
  if (has)
    for (Eigen::Index p = 0; p < log_jacobian.size(); ++p) put<double>(out, log_jacobian(p));
  put<std::int32_t>(out, folded_cells);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

DeformationField DeformationField::read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[sizeof(kFieldMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kFieldMagic, sizeof(magic)) != 0)
    throw std::runtime_error(path.string() + " is not a deformation field");
  DeformationField f;
  f.scale = get<double>(in);
  const int d = get<std::int32_t>(in);
  f.grid.counts.resize(static_cast<std::size_t>(d));
  for (int& c : f.grid.counts) c = get<std::int32_t>(in);
  f.grid.origin.resize(d);
  for (int a = 0; a < d; ++a) f.grid.origin(a) = get<double>(in);
  f.grid.axes.resize(d, d);
  for (Eigen::Index i = 0; i < f.grid.axes.size(); ++i) f.grid.axes.data()[i] = get<double>(in);
  const bool has = get<std::int32_t>(in) != 0;
  f.source = f.grid.points();
  f.mapped.resize(f.source.rows(), d);
  for (Eigen::Index p = 0; p < f.mapped.rows(); ++p)
    for (Eigen::Index c = 0; c < d; ++c) f.mapped(p, c) = get<double>(in);
  if (has) {
    f.log_jacobian.resize(f.mapped.rows());
    for (Eigen::Index p = 0; p < f.log_jacobian.size(); ++p) f.log_jacobian(p) = get<double>(in);
  }
  f.folded_cells = get<std::int32_t>(in);
  return f;
}

}  // namespace mslddmm
