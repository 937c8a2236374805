#include "mslddmm/kernel_fit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mslddmm/parallel.hpp"
#include "mslddmm/simplex.hpp"

namespace mslddmm {

namespace {

constexpr char kTableMagic[6] = {'M', 'S', 'K', 'T', 'B', 'L'};
constexpr std::int32_t kTableVersion = 1;

struct ScaledBasis {
  Eigen::MatrixXd A;       // J x Q, columns scaled to unit peak
  Eigen::VectorXd scale;   // column peaks
};

ScaledBasis scaled_basis(const HankelBasis& basis, const std::vector<double>& xi) {
  ScaledBasis out;
  out.A = basis.spectral_matrix(xi);
  out.scale = out.A.colwise().maxCoeff().transpose();
  for (int q = 0; q < out.A.cols(); ++q) {
    if (!(out.scale(q) > 0.0)) throw std::invalid_argument("basis spectrum vanishes on the frequency grid");
    out.A.col(q) /= out.scale(q);
  }
  return out;
}

// Epigraph rows |y - A gamma| <= t; the caller appends its own constraint block.
Eigen::MatrixXd epigraph_rows(const Eigen::MatrixXd& A, int extra_rows) {
  const Eigen::Index J = A.rows();
  const Eigen::Index Q = A.cols();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2 * J + extra_rows, Q + 1);
  G.topLeftCorner(J, Q) = A;
  G.block(0, Q, J, 1).setConstant(-1.0);
  G.block(J, 0, J, Q) = -A;
  G.block(J, Q, J, 1).setConstant(-1.0);
  return G;
}

FitResult solve_fit(const Eigen::MatrixXd& G, const Eigen::VectorXd& h, const ScaledBasis& sb, double peak,
                    const Eigen::VectorXd& target, const HankelBasis& basis, const std::vector<double>& xi) {
  const Eigen::Index Q = sb.A.cols();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(Q + 1);
  c(Q) = 1.0;
  const LpResult lp = solve_inequality_lp(G, h, c);
  if (lp.status != LpStatus::Optimal)
    throw SolverFailure("kernel fit linear program did not reach optimality (status " +
                             std::to_string(static_cast<int>(lp.status)) + ", " + std::to_string(lp.iterations) + " pivots)");
  FitResult out;
  out.beta = lp.z.head(Q).cwiseQuotient(sb.scale) * peak;
  out.iterations = lp.iterations;
  out.peak = peak;
  out.residual = (target - basis.spectral_matrix(xi) * out.beta).cwiseAbs().maxCoeff();
  return out;
}

}  // namespace

HankelBasis HankelBasis::log_spaced(double s1, double s2, int count, int dimension) {
  if (count < 1) throw std::invalid_argument("basis needs at least one width");
  if (!(s1 > 0.0) || !(s2 > s1)) throw std::invalid_argument("basis range needs 0 < s1 < s2");
  HankelBasis basis;
  basis.dimension = dimension;
  const double lo = std::log(s1 / std::sqrt(2.0));
  const double hi = std::log(s2 * std::sqrt(2.0));
  for (int q = 0; q < count; ++q)
    basis.widths.push_back(count == 1 ? std::exp(0.5 * (lo + hi)) : std::exp(lo + (hi - lo) * q / (count - 1)));
  return basis;
}

Eigen::MatrixXd HankelBasis::spectral_matrix(const std::vector<double>& xi) const {
  Eigen::MatrixXd A(static_cast<Eigen::Index>(xi.size()), size());
  for (std::size_t j = 0; j < xi.size(); ++j)
    for (int q = 0; q < size(); ++q) A(static_cast<Eigen::Index>(j), q) = spectral(q, xi[j]);
  return A;
}

FitResult fit_diagonal(const Eigen::VectorXd& target, const HankelBasis& basis, const std::vector<double>& xi) {
  if (target.size() != static_cast<Eigen::Index>(xi.size()))
    throw std::invalid_argument("target and frequency grid differ in length");
  if (!target.allFinite()) throw std::invalid_argument("target spectrum is not finite");
  if (basis.size() > target.size()) throw std::invalid_argument("more basis functions than frequency samples");
  const double peak = target.cwiseAbs().maxCoeff();
  const ScaledBasis sb = scaled_basis(basis, xi);
  const Eigen::Index J = sb.A.rows();
  const Eigen::Index Q = sb.A.cols();
  if (peak == 0.0) {
    FitResult out;
    out.beta = Eigen::VectorXd::Zero(Q);
    return out;
  }
  const Eigen::VectorXd y = target / peak;

  Eigen::MatrixXd G = epigraph_rows(sb.A, static_cast<int>(J));
  G.block(2 * J, 0, J, Q) = -sb.A;
  Eigen::VectorXd h(3 * J);
  h << y, -y, Eigen::VectorXd::Zero(J);

  FitResult out = solve_fit(G, h, sb, peak, target, basis, xi);
  // Roundoff can leave samples a few ulps below zero. The narrowest basis
  // spectrum is the slowest to decay, so the smallest multiple of it that
  // lifts every sample is a negligible change to the fit.
  const Eigen::MatrixXd H = basis.spectral_matrix(xi);
  int narrowest = 0;
  for (int q = 1; q < basis.size(); ++q)
    if (basis.widths[static_cast<std::size_t>(q)] < basis.widths[static_cast<std::size_t>(narrowest)]) narrowest = q;
  for (int pass = 0; pass < 4; ++pass) {
    const Eigen::VectorXd fit = H * out.beta;
    double lift = 0.0;
    for (Eigen::Index j = 0; j < J; ++j)
      if (fit(j) < 0.0 && H(j, narrowest) > 0.0) lift = std::max(lift, -fit(j) / H(j, narrowest));
    if (lift == 0.0) break;
    out.beta(narrowest) += 2.0 * lift;
  }
  out.residual = (target - H * out.beta).cwiseAbs().maxCoeff();
  out.margin = (H * out.beta).minCoeff();
  return out;
}

FitResult fit_offdiagonal(int k, int l, const Eigen::VectorXd& target, const Eigen::VectorXd& diag_k,
                          const Eigen::VectorXd& diag_l, const HankelBasis& basis, const std::vector<double>& xi) {
  if (k == l) throw std::invalid_argument("fit_offdiagonal called with a diagonal pair");
  const Eigen::Index J = static_cast<Eigen::Index>(xi.size());
  if (target.size() != J || diag_k.size() != J || diag_l.size() != J)
    throw std::invalid_argument("spectra and frequency grid differ in length");
  if (!target.allFinite()) throw std::invalid_argument("target spectrum is not finite");
  const Eigen::VectorXd bound = diag_k.cwiseMax(0.0).cwiseProduct(diag_l.cwiseMax(0.0)).cwiseSqrt();
  const double peak = target.cwiseAbs().maxCoeff();
  const ScaledBasis sb = scaled_basis(basis, xi);
  const Eigen::Index Q = sb.A.cols();
  FitResult out;
  if (peak == 0.0) {
    out.beta = Eigen::VectorXd::Zero(Q);
    out.margin = bound.minCoeff();
    return out;
  }
  const Eigen::VectorXd y = target / peak;
  const Eigen::VectorXd scaled_bound = bound / peak;

  Eigen::MatrixXd G = epigraph_rows(sb.A, static_cast<int>(2 * J));
  G.block(2 * J, 0, J, Q) = sb.A;
  G.block(3 * J, 0, J, Q) = -sb.A;
  Eigen::VectorXd h(4 * J);
  const Eigen::VectorXd b = scaled_bound.cwiseMax(0.0);
  h << y, -y, b, b;

  out = solve_fit(G, h, sb, peak, target, basis, xi);
  out.margin = (bound - (basis.spectral_matrix(xi) * out.beta).cwiseAbs()).minCoeff();
  return out;
}

SpectralTable sum_dirac_spectral_table(const ScaleLadder& ladder, double weight_s1, double weight_s2,
                                       const SpectralGrid& grid) {
  if (!(weight_s1 > 0.0) || !(weight_s2 > 0.0)) throw std::invalid_argument("Dirac weights must be positive");
  SpectralTable table(ladder, 0.0, grid);
  const int m = ladder.node_count();
  const int n = ladder.intervals();
  const int d = grid.dimension;
  for (int j = 0; j < grid.size(); ++j) {
    const double xi = grid.xi[static_cast<std::size_t>(j)];
    // X at the nodes: cumulative interval sums of 1/chi = kappa_hat.
    std::vector<double> X(static_cast<std::size_t>(m), 0.0);
    for (int k = 0; k < n; ++k)
      X[static_cast<std::size_t>(k) + 1] =
          X[static_cast<std::size_t>(k)] + ladder.width(k) * gaussian_spectrum(ladder.node(k), xi, d);
    const double inv1 = gaussian_spectrum(ladder.node(0), xi, d) / weight_s1;
    const double inv2 = gaussian_spectrum(ladder.node(n - 1), xi, d) / weight_s2;
    const double x_end = X.back();
    const double denom = inv1 + inv2 + x_end;
    for (int k = 0; k < m; ++k)
      for (int k0 = 0; k0 < m; ++k0) {
        const double x_max = X[static_cast<std::size_t>(std::max(k, k0))];
        const double x_min = X[static_cast<std::size_t>(std::min(k, k0))];
        table(k, k0, j) = denom > 0.0 ? (inv2 + x_end - x_max) * (inv1 + x_min) / denom : 0.0;
      }
  }
  return table;
}

// ---------------------------------------------------------------------------

KernelTable::KernelTable(ScaleLadder ladder, HankelBasis basis) : ladder_(std::move(ladder)), basis_(std::move(basis)) {}

void KernelTable::set(int k, int l, Eigen::VectorXd beta) {
  if (beta.size() != basis_.size()) throw std::invalid_argument("coefficient count differs from basis size");
  if (k < 0 || l < 0 || k >= ladder_.node_count() || l >= ladder_.node_count())
    throw std::out_of_range("kernel table pair outside the ladder");
  beta_[{std::min(k, l), std::max(k, l)}] = std::move(beta);
}

bool KernelTable::has(int k, int l) const { return beta_.count({std::min(k, l), std::max(k, l)}) > 0; }

const Eigen::VectorXd& KernelTable::beta(int k, int l) const {
  const auto it = beta_.find({std::min(k, l), std::max(k, l)});
  if (it == beta_.end())
    throw std::out_of_range("kernel table has no pair (" + std::to_string(k) + ", " + std::to_string(l) + ")");
  return it->second;
}

std::vector<std::pair<int, int>> KernelTable::pairs() const {
  std::vector<std::pair<int, int>> out;
  for (const auto& [key, value] : beta_) out.push_back(key);
  return out;
}

Eigen::VectorXd KernelTable::spectrum(int k, int l, const std::vector<double>& xi) const {
  return basis_.spectral_matrix(xi) * beta(k, l);
}

namespace {

struct NodeWeights {
  int k[2] = {0, 0};
  double w[2] = {1.0, 0.0};
  int count = 1;
};

}  // namespace

Eigen::VectorXd KernelTable::coefficients(double lam, double mu) const {
  const auto k = ladder_.node_index(lam);
  const auto l = ladder_.node_index(mu);
  if (k && l) return beta(*k, *l);
  if (!interpolate_)
    throw std::out_of_range("scale not tabulated and interpolation is disabled");
  auto weights = [&](double s, const std::optional<int>& idx) {
    NodeWeights nw;
    if (idx) {
      nw.k[0] = *idx;
      return nw;
    }
    const double c = ladder_.clamp(s);
    const int i = ladder_.interval_of(c);
    const double t = (c - ladder_.node(i)) / ladder_.width(i);
    nw.k[0] = i;
    nw.k[1] = i + 1;
    nw.w[0] = 1.0 - t;
    nw.w[1] = t;
    nw.count = 2;
    return nw;
  };
  const NodeWeights a = weights(lam, k);
  const NodeWeights b = weights(mu, l);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(basis_.size());
  for (int i = 0; i < a.count; ++i)
    for (int j = 0; j < b.count; ++j) out += a.w[i] * b.w[j] * beta(a.k[i], b.k[j]);
  return out;
}

namespace {

RadialSample evaluate_basis(const Eigen::VectorXd& beta, const std::vector<double>& inv_two_tau2, double r) {
  RadialSample out;
  const double r2 = r * r;
  for (std::size_t q = 0; q < inv_two_tau2.size(); ++q) {
    const double e = beta(static_cast<Eigen::Index>(q)) * std::exp(-r2 * inv_two_tau2[q]);
    out.value += e;
    out.slope -= 2.0 * inv_two_tau2[q] * e;
  }
  return out;
}

std::vector<double> inverse_widths(const HankelBasis& basis) {
  std::vector<double> out;
  for (double tau : basis.widths) out.push_back(1.0 / (2.0 * tau * tau));
  return out;
}

}  // namespace

RadialSample KernelTable::sample(double lam, double mu, double r) const {
  return evaluate_basis(coefficients(lam, mu), inverse_widths(basis_), r);
}

RadialFunction KernelTable::bind(double lam, double mu) const {
  return [beta = coefficients(lam, mu), inv = inverse_widths(basis_)](double r) {
    return evaluate_basis(beta, inv, r);
  };
}

std::optional<GaussianExpansion> KernelTable::expansion(double lam, double mu) const {
  const Eigen::VectorXd beta = coefficients(lam, mu);
  return GaussianExpansion{basis_.widths, std::vector<double>(beta.data(), beta.data() + beta.size())};
}

// Little-endian fixed-width layout:
//   "MSKTBL" i32 version i32 d i32 nodes f64[nodes] i32 Q f64[Q] i32 interpolate
//   i32 pairs {i32 k i32 l f64[Q]}[pairs] i32 reports {i32 k i32 l f64 residual f64 peak f64 margin i32 iters}
namespace {

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated kernel table file");
  return v;
}

}  // namespace

void KernelTable::write_binary(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out.write(kTableMagic, sizeof(kTableMagic));
  put<std::int32_t>(out, kTableVersion);
  put<std::int32_t>(out, basis_.dimension);
  put<std::int32_t>(out, ladder_.node_count());
  for (double r : ladder_.nodes()) put<double>(out, r);
  put<std::int32_t>(out, basis_.size());
  for (double tau : basis_.widths) put<double>(out, tau);
  put<std::int32_t>(out, interpolate_ ? 1 : 0);
  put<std::int32_t>(out, static_cast<std::int32_t>(beta_.size()));
  for (const auto& [key, beta] : beta_) {
    put<std::int32_t>(out, key.first);
    put<std::int32_t>(out, key.second);
    for (Eigen::Index q = 0; q < beta.size(); ++q) put<double>(out, beta(q));
  }
  put<std::int32_t>(out, static_cast<std::int32_t>(report_.size()));
  for (const PairReport& r : report_) {
    put<std::int32_t>(out, r.k);
    put<std::int32_t>(out, r.l);
    put<double>(out, r.residual);
    put<double>(out, r.peak);
    put<double>(out, r.margin);
    put<std::int32_t>(out, r.iterations);
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

KernelTable KernelTable::read_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[sizeof(kTableMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kTableMagic, sizeof(magic)) != 0)
    throw std::runtime_error(path.string() + " is not a kernel table");
  const auto version = get<std::int32_t>(in);
  if (version != kTableVersion) throw std::runtime_error("unsupported kernel table version " + std::to_string(version));
  HankelBasis basis;
  basis.dimension = get<std::int32_t>(in);
  std::vector<double> nodes(static_cast<std::size_t>(get<std::int32_t>(in)));
  for (double& r : nodes) r = get<double>(in);
  basis.widths.resize(static_cast<std::size_t>(get<std::int32_t>(in)));
  for (double& tau : basis.widths) tau = get<double>(in);
  KernelTable table(ScaleLadder(std::move(nodes)), std::move(basis));
  table.interpolate_ = get<std::int32_t>(in) != 0;
  const auto pairs = get<std::int32_t>(in);
  for (std::int32_t p = 0; p < pairs; ++p) {
    const int k = get<std::int32_t>(in);
    const int l = get<std::int32_t>(in);
    Eigen::VectorXd beta(table.basis_.size());
    for (Eigen::Index q = 0; q < beta.size(); ++q) beta(q) = get<double>(in);
    table.set(k, l, std::move(beta));
  }
  const auto reports = get<std::int32_t>(in);
  for (std::int32_t p = 0; p < reports; ++p) {
    PairReport r;
    r.k = get<std::int32_t>(in);
    r.l = get<std::int32_t>(in);
    r.residual = get<double>(in);
    r.peak = get<double>(in);
    r.margin = get<double>(in);
    r.iterations = get<std::int32_t>(in);
    table.report_.push_back(r);
  }
  return table;
}

void KernelTable::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "k,l,q,beta\n" << std::setprecision(17);
  for (const auto& [key, beta] : beta_)
    for (Eigen::Index q = 0; q < beta.size(); ++q)
      out << key.first << ',' << key.second << ',' << q << ',' << beta(q) << '\n';
}

void KernelTable::write_report_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["dimension"] = basis_.dimension;
  j["nodes"] = std::vector<double>(ladder_.nodes().begin(), ladder_.nodes().end());
  j["basis_widths"] = basis_.widths;
  j["interpolation"] = interpolate_ ? "linear (approximate)" : "disabled";
  nlohmann::json pairs = nlohmann::json::array();
  double worst = 0.0;
  for (const PairReport& r : report_) {
    const double rel = r.peak > 0.0 ? r.residual / r.peak : 0.0;
    worst = std::max(worst, rel);
    pairs.push_back({{"k", r.k},
                     {"l", r.l},
                     {"residual", r.residual},
                     {"peak", r.peak},
                     {"relative_residual", rel},
                     {"constraint_margin", r.margin},
                     {"simplex_iterations", r.iterations}});
  }
  j["pairs"] = pairs;
  j["max_relative_residual"] = worst;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

KernelTable fit_kernel_table(const SpectralTable& table, const FitOptions& options) {
  const ScaleLadder& ladder = table.ladder();
  const int m = table.nodes();
  const auto& xi = table.grid().xi;
  HankelBasis basis = HankelBasis::log_spaced(ladder.s1(), ladder.s2(), options.basis_size, table.dimension());
  for (int b : options.base_nodes)
    if (b < 0 || b >= m) throw std::out_of_range("base node outside the ladder");

  // Diagonal pass.
  std::vector<FitResult> diag(static_cast<std::size_t>(m));
  parallel_for(static_cast<std::size_t>(m), [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const int kk = static_cast<int>(k);
      diag[k] = fit_diagonal(table.spectrum(kk, kk), basis, xi);
    }
  });
  const Eigen::MatrixXd H = basis.spectral_matrix(xi);
  std::vector<Eigen::VectorXd> fitted(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) fitted[static_cast<std::size_t>(k)] = H * diag[static_cast<std::size_t>(k)].beta;

  // Off-diagonal pass over the requested pairs.
  std::set<std::pair<int, int>> wanted;
  if (options.base_nodes.empty()) {
    for (int k = 0; k < m; ++k)
      for (int l = k + 1; l < m; ++l) wanted.insert({k, l});
  } else {
    for (int b : options.base_nodes)
      for (int k = 0; k < m; ++k)
        if (k != b) wanted.insert({std::min(k, b), std::max(k, b)});
  }
  const std::vector<std::pair<int, int>> pairs(wanted.begin(), wanted.end());
  std::vector<FitResult> off(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      const auto [k, l] = pairs[p];
      const Eigen::VectorXd target = 0.5 * (table.spectrum(k, l) + table.spectrum(l, k));
      off[p] = fit_offdiagonal(k, l, target, fitted[static_cast<std::size_t>(k)], fitted[static_cast<std::size_t>(l)],
                               basis, xi);
    }
  });

  KernelTable out(ladder, std::move(basis));
  for (int k = 0; k < m; ++k) {
    const FitResult& f = diag[static_cast<std::size_t>(k)];
    out.set(k, k, f.beta);
    out.report().push_back({k, k, f.residual, f.peak, f.margin, f.iterations});
  }
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const FitResult& f = off[p];
    out.set(pairs[p].first, pairs[p].second, f.beta);
    out.report().push_back({pairs[p].first, pairs[p].second, f.residual, f.peak, f.margin, f.iterations});
  }
  return out;
}

PositivityReport certify_pairwise_positivity(const KernelTable& table, const std::vector<int>& scale_nodes,
                                             const std::vector<Eigen::VectorXd>& points) {
  if (scale_nodes.size() != points.size()) throw std::invalid_argument("one scale node per sample point required");
  const Eigen::Index N = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd gram(N, N);
  const ScaleLadder& ladder = table.ladder();
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double r = (points[static_cast<std::size_t>(i)] - points[static_cast<std::size_t>(j)]).norm();
      const double v = table(ladder.node(scale_nodes[static_cast<std::size_t>(i)]),
                             ladder.node(scale_nodes[static_cast<std::size_t>(j)]), r);
      gram(i, j) = v;
      gram(j, i) = v;
    }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  PositivityReport report;
  if (N == 0) {
    report.pass = true;
    return report;
  }
  report.min_eigenvalue = eig.eigenvalues().minCoeff();
  report.max_eigenvalue = eig.eigenvalues().maxCoeff();
  report.pass = report.min_eigenvalue >= -1e-8 * std::max(report.max_eigenvalue, 0.0);
  return report;
}

}  // namespace mslddmm
