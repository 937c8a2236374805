#include "mslddmm/registration.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <limits>

#include <json.hpp>

namespace mslddmm {

namespace {

struct ForwardPass {
  std::vector<Eigen::MatrixXd> x;  // T + 1
  std::vector<Eigen::MatrixXd> K;  // T kernel matrices
  std::vector<Eigen::MatrixXd> S;  // T slope matrices
  Evaluation eval;
};

// Gaussian terms beyond this exponent are below 2e-22 of their weight.
constexpr double kNegligibleExponent = 50.0;

// Kernel and slope matrices over landmark pairs. Kernels that expand into
// one shared set of Gaussians are summed inline.
class PairMatrices {
 public:
  PairMatrices(const ScaleSpaceKernel& kernel, const LandmarkSystem& sys) : bound_(kernel, sys), sys_(sys) {
    const int m = static_cast<int>(sys.base_scales.size());
    std::vector<GaussianExpansion> ex;
    for (int k = 0; k < m; ++k)
      for (int l = 0; l < m; ++l) {
        auto e = kernel.expansion(sys.base_scales[static_cast<std::size_t>(k)], sys.base_scales[static_cast<std::size_t>(l)]);
        if (!e || (!ex.empty() && e->widths != ex.front().widths)) return;
        ex.push_back(std::move(*e));
      }
    const int N = sys.size();
    for (double w : ex.front().widths) rate_.push_back(1.0 / (2.0 * w * w));
    for (const GaussianExpansion& e : ex) weight_.insert(weight_.end(), e.weights.begin(), e.weights.end());
    for (int p = 0; p < N; ++p)
      for (int r = 0; r < N; ++r)
        pair_.push_back(sys.scale_of[static_cast<std::size_t>(p)] * m + sys.scale_of[static_cast<std::size_t>(r)]);
  }

  void compute(const Eigen::MatrixXd& x, Eigen::MatrixXd& K, Eigen::MatrixXd& S) const {
    const int N = sys_.size();
    if (!rate_.empty()) {
      const std::size_t Q = rate_.size();
      for (int p = 0; p < N; ++p)
        for (int r = 0; r <= p; ++r) {
          const double d2 = (x.row(p) - x.row(r)).squaredNorm();
          const double* w = &weight_[static_cast<std::size_t>(pair_[static_cast<std::size_t>(p) * N + r]) * Q];
          double value = 0.0, slope = 0.0;
          for (std::size_t q = 0; q < Q; ++q) {
            const double t = rate_[q] * d2;
            if (t > kNegligibleExponent) continue;
            const double e = w[q] * std::exp(-t);
            value += e;
            slope -= 2.0 * rate_[q] * e;
          }
          K(p, r) = K(r, p) = value;
          S(p, r) = S(r, p) = slope;
        }
      return;
    }
    for (int p = 0; p < N; ++p)
      for (int q = 0; q <= p; ++q) {
        const RadialSample s = bound_.pair(sys_.scale_of[static_cast<std::size_t>(p)],
                                           sys_.scale_of[static_cast<std::size_t>(q)])((x.row(p) - x.row(q)).norm());
        K(p, q) = K(q, p) = s.value;
        S(p, q) = S(q, p) = s.slope;
      }
  }

 private:
  BoundKernel bound_;
  const LandmarkSystem& sys_;
  std::vector<double> rate_;
  std::vector<double> weight_;  // per scale pair, Q weights each
  std::vector<int> pair_;       // scale pair of each landmark pair
};

ForwardPass forward(const Objective& objective, const Controls& controls, bool keep_kernels) {
  const LandmarkSystem& sys = objective.system;
  if (controls.steps() != objective.steps) throw std::invalid_argument("control count differs from the step count");
  for (const auto& m : controls.a)
    if (m.rows() != sys.size() || m.cols() != sys.dimension)
      throw std::invalid_argument("control shape does not match the landmark system");
  const PairMatrices pairs(*objective.kernel, sys);
  const int T = objective.steps;
  const int N = sys.size();
  const double dt = 1.0 / T;
  ForwardPass fp;
  fp.x.push_back(sys.initial);
  Eigen::MatrixXd K(N, N), S(N, N);
  double norms = 0.0;
  for (int i = 0; i < T; ++i) {
    const Eigen::MatrixXd& x = fp.x.back();
    pairs.compute(x, K, S);
    const Eigen::MatrixXd& a = controls.a[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd v = K * a;
    norms += (a.transpose() * v).trace();
    Eigen::MatrixXd next = x + dt * v;
    if (!next.allFinite()) throw NumericalFailure("landmark positions left the finite range at step " + std::to_string(i), i);
    fp.x.push_back(std::move(next));
    if (keep_kernels) {
      fp.K.push_back(K);
      fp.S.push_back(S);
    }
  }
  fp.eval.energy = 0.5 * dt * norms;
  fp.eval.match = sys.weight * (fp.x.back() - sys.target).squaredNorm();
  fp.eval.value = fp.eval.energy + fp.eval.match;
  return fp;
}

}  // namespace

Evaluation evaluate(const Objective& objective, const Controls& controls) {
  return forward(objective, controls, false).eval;
}

Controls gradient(const Objective& objective, const Controls& controls, Evaluation* at) {
  const ForwardPass fp = forward(objective, controls, true);
  if (at) *at = fp.eval;
  const LandmarkSystem& sys = objective.system;
  const int T = objective.steps;
  const double dt = 1.0 / T;
  Controls grad;
  grad.a.resize(static_cast<std::size_t>(T));
  Eigen::MatrixXd P = 2.0 * sys.weight * (fp.x.back() - sys.target);
  for (int i = T - 1; i >= 0; --i) {
    const auto ii = static_cast<std::size_t>(i);
    const Eigen::MatrixXd& x = fp.x[ii];
    const Eigen::MatrixXd& a = controls.a[ii];
    const Eigen::MatrixXd& K = fp.K[ii];
    grad.a[ii] = dt * K * (P + a);
    const Eigen::MatrixXd M = P * a.transpose();  // M(r, q) = P_r . a_q
    const Eigen::MatrixXd C = fp.S[ii].cwiseProduct(M + M.transpose() + a * a.transpose());
    const Eigen::MatrixXd acc = C.rowwise().sum().asDiagonal() * x - C * x;
    P += dt * acc;
  }
  return grad;
}

GradientCheck check_gradient(const Objective& objective, const Controls& controls, double h,
                             const std::vector<int>& coordinates) {
  const int T = objective.steps;
  const int N = objective.system.size();
  const int d = objective.system.dimension;
  const Eigen::VectorXd g = gradient(objective, controls).flatten();
  const Eigen::VectorXd z = controls.flatten();
  std::vector<int> coords = coordinates;
  if (coords.empty())
    for (int i = 0; i < z.size(); ++i) coords.push_back(i);
  const double floor = 1e-6 * g.lpNorm<Eigen::Infinity>();
  GradientCheck out;
  for (int i : coords) {
    if (i < 0 || i >= z.size()) throw std::out_of_range("gradient check coordinate out of range");
    Eigen::VectorXd zp = z, zm = z;
    zp(i) += h;
    zm(i) -= h;
    const double fd = (evaluate(objective, Controls::unflatten(zp, T, N, d)).value -
                       evaluate(objective, Controls::unflatten(zm, T, N, d)).value) /
                      (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(g(i)), floor, 1e-300});
    const double err = std::abs(fd - g(i)) / denom;
    if (err > out.max_relative_error || out.worst_coordinate < 0) {
      out.max_relative_error = std::max(out.max_relative_error, err);
      if (err >= out.max_relative_error) out.worst_coordinate = i;
    }
    ++out.coordinates;
  }
  return out;
}

// ---------------------------------------------------------------------------

OptimizationResult optimize(const Objective& objective, const Controls& initial, const OptimizerOptions& options) {
  const int T = objective.steps;
  const int N = objective.system.size();
  const int d = objective.system.dimension;
  OptimizationResult result;

  Eigen::VectorXd z = initial.flatten();
  Evaluation eval;
  Eigen::VectorXd g = gradient(objective, initial, &eval).flatten();
  if (!std::isfinite(eval.value)) throw NumericalFailure("initial objective is not finite", 0);
  result.history.push_back({0, eval.value, eval.energy, eval.match, 0.0, g.lpNorm<Eigen::Infinity>()});

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  double last_step = 1.0;

  for (int it = 1; it <= options.max_iterations; ++it) {
    if (g.size() == 0 || g.lpNorm<Eigen::Infinity>() < options.tolerance) {
      result.converged = true;
      break;
    }
    // Search direction.
    Eigen::VectorXd dir;
    double alpha = 1.0;
    if (options.method == OptimizerMethod::LBFGS && !s_hist.empty()) {
      Eigen::VectorXd q = g;
      std::vector<double> coef(s_hist.size());
      for (std::size_t j = s_hist.size(); j-- > 0;) {
        coef[j] = rho_hist[j] * s_hist[j].dot(q);
        q -= coef[j] * y_hist[j];
      }
      q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
      for (std::size_t j = 0; j < s_hist.size(); ++j) {
        const double beta = rho_hist[j] * y_hist[j].dot(q);
        q += (coef[j] - beta) * s_hist[j];
      }
      dir = -q;
      if (!(dir.dot(g) < 0.0)) {
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        dir = -g;
        alpha = 1.0 / std::max(g.norm(), 1e-300);
      }
    } else {
      dir = -g;
      alpha = options.method == OptimizerMethod::LBFGS ? 1.0 / std::max(g.norm(), 1e-300) : 2.0 * last_step;
    }

    // Armijo backtracking.
    const double slope = g.dot(dir);
    bool accepted = false;
    Eigen::VectorXd z_new;
    Evaluation e_new;
    Eigen::VectorXd g_new;  // filled when the first trial carries its gradient
    for (int h = 0; h <= options.max_halvings; ++h, alpha *= 0.5) {
      z_new = z + alpha * dir;
      try {
        if (h == 0)
          g_new = gradient(objective, Controls::unflatten(z_new, T, N, d), &e_new).flatten();
        else
          e_new = evaluate(objective, Controls::unflatten(z_new, T, N, d));
      } catch (const NumericalFailure&) {
        g_new.resize(0);
        continue;
      }
      if (h > 0) g_new.resize(0);
      if (std::isfinite(e_new.value) && e_new.value <= eval.value + options.armijo * alpha * slope &&
          e_new.value < eval.value) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      result.line_search_failed = true;
      break;
    }
    last_step = alpha;
    if (g_new.size() == 0) g_new = gradient(objective, Controls::unflatten(z_new, T, N, d)).flatten();
    const Eigen::VectorXd s = z_new - z;
    const Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(y);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > options.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    const double decrease = (eval.value - e_new.value) / std::max(std::abs(eval.value), 1e-300);
    z = z_new;
    g = g_new;
    eval = e_new;
    result.iterations = it;
    result.history.push_back({it, eval.value, eval.energy, eval.match, alpha, g.lpNorm<Eigen::Infinity>()});
    if (decrease < options.tolerance || g.lpNorm<Eigen::Infinity>() < options.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.controls = Controls::unflatten(z, T, N, d);
  return result;
}

void write_history_csv(const std::vector<HistoryEntry>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "iteration,value,energy,match,step,gradient_norm\n" << std::setprecision(17);
  for (const HistoryEntry& h : history)
    out << h.iteration << ',' << h.value << ',' << h.energy << ',' << h.match << ',' << h.step << ','
        << h.gradient_norm << '\n';
}

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd json_matrix(const nlohmann::json& j, int cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (static_cast<int>(j[r].size()) != cols) throw std::runtime_error("ragged matrix in controls file");
    for (int c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(r), c) = j[r][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

void write_controls_json(const LandmarkSystem& system, const Controls& controls, const std::filesystem::path& path) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["dimension"] = system.dimension;
  j["base_scales"] = system.base_scales;
  j["scale_of"] = system.scale_of;
  j["weight"] = system.weight;
  j["initial"] = matrix_json(system.initial);
  j["target"] = matrix_json(system.target);
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& a : controls.a) steps.push_back(matrix_json(a));
  j["controls"] = steps;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(1) << '\n';
}

std::pair<LandmarkSystem, Controls> read_controls_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const nlohmann::json j = nlohmann::json::parse(in);
  if (j.at("schema_version").get<int>() != 1) throw std::runtime_error("unsupported controls schema version");
  LandmarkSystem sys;
  sys.dimension = j.at("dimension").get<int>();
  sys.base_scales = j.at("base_scales").get<std::vector<double>>();
  sys.scale_of = j.at("scale_of").get<std::vector<int>>();
  sys.weight = j.at("weight").get<double>();
  sys.initial = json_matrix(j.at("initial"), sys.dimension);
  sys.target = json_matrix(j.at("target"), sys.dimension);
  sys.validate();
  Controls c;
  for (const auto& step : j.at("controls")) c.a.push_back(json_matrix(step, sys.dimension));
  return {std::move(sys), std::move(c)};
}

}  // namespace mslddmm
