#include "mslddmm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "mslddmm/flow_engine.hpp"
#include "mslddmm/kernel_fit.hpp"
#include "mslddmm/registration.hpp"
#include "mslddmm/spectral_kernel.hpp"

namespace mslddmm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class MissingInput : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return hex64(fnv1a(buf.str()));
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << j.dump(2) << '\n';
}

json read_json_or_empty(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return json::object();
  return json::parse(in);
}

fs::path prepare_run(const ExperimentConfig& config) {
  const fs::path dir = run_directory(config);
  fs::create_directories(dir);
  write_json(dir / "config.json", to_json(config));
  return dir;
}

void finish_run(const ExperimentConfig& config, const fs::path& dir, const std::string& section, const json& body) {
  json summary = read_json_or_empty(dir / "summary.json");
  summary[section] = body;
  write_json(dir / "summary.json", summary);
  write_json(dir / "manifest.json", build_manifest(config, dir));
}

std::vector<int> base_nodes(const ExperimentConfig& config, const ScaleLadder& ladder) {
  std::vector<int> out;
  for (double s : config.base_scales()) out.push_back(*ladder.node_index(s));
  return out;
}

GaussianScaleFamily family_for(const ScaleLadder& ladder) {
  return GaussianScaleFamily{ladder, 2, ScaleProfile::PiecewiseConstant};
}

SpectralTable target_table(const ExperimentConfig& config, const ScaleLadder& ladder) {
  const SpectralGrid grid = SpectralGrid::uniform(ladder, 2, config.kernel.frequencies);
  if (const auto* s = std::get_if<SumDiracMeasure>(&config.measure))
    return sum_dirac_spectral_table(ladder, s->weight_s1, s->weight_s2, grid);
  return compute_spectral_table(ladder, std::get<LebesgueMeasure>(config.measure).sigma, grid);
}

struct FitOutcome {
  KernelTable table;
  json report;
  bool pass = true;
};

FitOutcome fit_and_write(const ExperimentConfig& config, const fs::path& dir, std::ostream& log) {
  const ScaleLadder ladder = config.ladder.build();
  log << "computing spectral table (" << ladder.node_count() << " nodes, " << config.kernel.frequencies
      << " frequencies)\n";
  const SpectralTable spectra = target_table(config, ladder);
  FitOptions options;
  options.basis_size = config.kernel.basis_size;
  options.base_nodes = base_nodes(config, ladder);
  log << "fitting " << options.basis_size << "-term Gaussian basis\n";
  KernelTable table = fit_kernel_table(spectra, options);
  table.set_interpolation(config.kernel.interpolate);
  table.write_binary(dir / "kernel_table.bin");
  table.write_csv(dir / "kernel_table.csv");
  table.write_report_json(dir / "kernel_fit_report.json");

  const std::vector<double>& xi = spectra.grid().xi;
  double worst = 0.0;
  double min_diag = std::numeric_limits<double>::infinity();
  double min_det = std::numeric_limits<double>::infinity();
  for (const PairReport& r : table.report()) worst = std::max(worst, r.residual / r.peak);
  for (int k = 0; k < ladder.node_count(); ++k) min_diag = std::min(min_diag, table.spectrum(k, k, xi).minCoeff());
  for (auto [k, l] : table.pairs()) {
    if (k == l) continue;
    const Eigen::VectorXd kk = table.spectrum(k, k, xi), ll = table.spectrum(l, l, xi), kl = table.spectrum(k, l, xi);
    const double scale = kk.maxCoeff() * ll.maxCoeff();
    min_det = std::min(min_det, ((kk.array() * ll.array() - kl.array().square()) / scale).minCoeff());
  }
  FitOutcome out{std::move(table), json::object(), true};
  out.pass = worst <= config.kernel.max_residual && min_diag >= 0.0 && min_det >= -1e-12;
  out.report = {{"closed_form", false},
                {"backend", to_string(config.kernel.backend)},
                {"pairs", out.table.report().size()},
                {"max_relative_residual", worst},
                {"residual_bound", config.kernel.max_residual},
                {"min_diagonal_spectrum", min_diag},
                {"min_normalized_pair_determinant", std::isfinite(min_det) ? min_det : 0.0},
                {"pass", out.pass}};
  log << "worst pair residual " << worst << " of peak (bound " << config.kernel.max_residual << ")\n";
  return out;
}

std::unique_ptr<ScaleSpaceKernel> closed_form_kernel(const ExperimentConfig& config, const ScaleLadder& ladder) {
  switch (config.kernel.backend) {
    case KernelBackend::ClosedFormDirac:
      return std::make_unique<DiracKernel>(family_for(ladder), std::get<DiracMeasure>(config.measure));
    case KernelBackend::IntegratedDirac:
      return std::make_unique<IntegratedDiracKernel>(family_for(ladder));
    case KernelBackend::Spectral:
      return std::make_unique<SpectralKernel>(ladder, std::get<LebesgueMeasure>(config.measure).sigma, 2,
                                              SpectralGrid::uniform(ladder, 2, config.kernel.frequencies).max());
    case KernelBackend::Fitted: break;
  }
  return nullptr;
}

double rms(const Eigen::MatrixXd& diff) { return std::sqrt(diff.rowwise().squaredNorm().mean()); }

std::string node_tag(int k) {
  std::ostringstream s;
  s << std::setw(2) << std::setfill('0') << k;
  return s.str();
}

void write_svg(const fs::path& path, const Eigen::MatrixXd& deformed, const Eigen::MatrixXd& target,
               const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  const double w = hi(0) - lo(0), h = hi(1) - lo(1);
  const double px = 400.0 / std::max(w, h);
  auto X = [&](double x) { return (x - lo(0)) * px; };
  auto Y = [&](double y) { return (hi(1) - y) * px; };
  out << std::setprecision(6) << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w * px << "\" height=\""
      << h * px << "\">\n";
  for (Eigen::Index p = 0; p < target.rows(); ++p)
    out << "<circle cx=\"" << X(target(p, 0)) << "\" cy=\"" << Y(target(p, 1)) << "\" r=\"3\" fill=\"none\" stroke=\"gray\"/>\n";
  for (Eigen::Index p = 0; p < deformed.rows(); ++p)
    out << "<circle cx=\"" << X(deformed(p, 0)) << "\" cy=\"" << Y(deformed(p, 1)) << "\" r=\"2\" fill=\"black\"/>\n";
  out << "</svg>\n";
}

double finite_min(const Eigen::VectorXd& v) {
  double m = std::numeric_limits<double>::infinity();
  for (double x : v)
    if (std::isfinite(x)) m = std::min(m, x);
  return std::isfinite(m) ? m : 0.0;
}

double finite_max(const Eigen::VectorXd& v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v)
    if (std::isfinite(x)) m = std::max(m, x);
  return std::isfinite(m) ? m : 0.0;
}

}  // namespace

fs::path run_directory(const ExperimentConfig& config) {
  return fs::path(config.output_dir) / (config.name + "-" + hex64(fnv1a(canonical_dump(config))));
}

json build_manifest(const ExperimentConfig& config, const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  json list = json::array();
  for (const fs::path& f : files)
    list.push_back({{"path", fs::relative(f, dir).generic_string()},
                    {"bytes", fs::file_size(f)},
                    {"fnv1a", file_digest(f)}});
  return {{"name", config.name}, {"config_hash", hex64(fnv1a(canonical_dump(config)))}, {"files", list}};
}

std::unique_ptr<ScaleSpaceKernel> load_or_build_kernel(const ExperimentConfig& config, std::ostream& log) {
  const ScaleLadder ladder = config.ladder.build();
  if (config.kernel.backend != KernelBackend::Fitted) return closed_form_kernel(config, ladder);
  const fs::path dir = prepare_run(config);
  const fs::path file = dir / "kernel_table.bin";
  if (fs::exists(file)) {
    auto table = std::make_unique<KernelTable>(KernelTable::read_binary(file));
    table->set_interpolation(config.kernel.interpolate);
    return table;
  }
  log << "no kernel table in " << dir.string() << ", fitting\n";
  return std::make_unique<KernelTable>(fit_and_write(config, dir, log).table);
}

int cmd_fit_kernel(const ExperimentConfig& config, std::ostream& log) {
  const fs::path dir = prepare_run(config);
  if (config.kernel.backend != KernelBackend::Fitted) {
    log << "backend " << to_string(config.kernel.backend) << " is evaluated directly; nothing to fit\n";
    finish_run(config, dir, "fit", {{"closed_form", true}, {"backend", to_string(config.kernel.backend)}, {"pass", true}});
    return kExitSuccess;
  }
  FitOutcome fit = fit_and_write(config, dir, log);
  finish_run(config, dir, "fit", fit.report);
  return fit.pass ? kExitSuccess : kExitThreshold;
}

int cmd_register(const ExperimentConfig& config, std::ostream& log) {
  const std::unique_ptr<ScaleSpaceKernel> kernel = load_or_build_kernel(config, log);
  const fs::path dir = prepare_run(config);
  const LandmarkSystem sys = config.landmark_system();
  const Objective objective(*kernel, sys, config.time_steps);
  log << "registering " << sys.size() << " landmarks at " << sys.base_scales.size() << " base scale(s), T="
      << config.time_steps << '\n';
  const OptimizationResult result =
      optimize(objective, Controls::zero(config.time_steps, sys.size(), sys.dimension), config.optimizer);
  write_controls_json(sys, result.controls, dir / "controls.json");
  write_history_csv(result.history, dir / "history.csv");

  const FlowTrajectory traj = integrate_forward(*kernel, sys, result.controls);
  const Evaluation eval = evaluate(objective, result.controls);
  json scales = json::array();
  bool pass = true;
  for (int k = 0; k < static_cast<int>(sys.base_scales.size()); ++k) {
    const std::vector<int> idx = sys.group(k);
    const Eigen::MatrixXd end = traj.x.back()(idx, Eigen::all);
    const Eigen::MatrixXd target = sys.target(idx, Eigen::all);
    const double e = rms(end - target);
    const double diam = diameter(target);
    const double fraction = diam > 0.0 ? e / diam : e;
    pass = pass && fraction <= config.thresholds.rmse_fraction;
    scales.push_back({{"scale", sys.base_scales[static_cast<std::size_t>(k)]},
                      {"points", idx.size()},
                      {"rmse", e},
                      {"target_diameter", diam},
                      {"rmse_fraction", fraction}});
    log << "base scale " << sys.base_scales[static_cast<std::size_t>(k)] << ": endpoint RMSE " << e << " ("
        << fraction * 100.0 << "% of diameter)\n";
  }
  finish_run(config, dir, "register",
             {{"converged", result.converged},
              {"line_search_failed", result.line_search_failed},
              {"iterations", result.iterations},
              {"objective", eval.value},
              {"energy", eval.energy},
              {"match", eval.match},
              {"base_scales", scales},
              {"rmse_fraction_bound", config.thresholds.rmse_fraction},
              {"pass", pass}});
  return pass ? kExitSuccess : kExitThreshold;
}

int cmd_export_fields(const ExperimentConfig& config, const std::optional<fs::path>& controls_path,
                      std::ostream& log) {
  const fs::path dir = prepare_run(config);
  const fs::path source = controls_path ? *controls_path : dir / "controls.json";
  if (!fs::exists(source)) throw MissingInput("no controls at " + source.string() + "; run register first");
  const auto [sys, controls] = read_controls_json(source);
  const std::unique_ptr<ScaleSpaceKernel> kernel = load_or_build_kernel(config, log);
  const ScaleLadder ladder = config.ladder.build();
  sys.validate(&ladder);
  const FlowTrajectory traj = integrate_forward(*kernel, sys, controls);

  Eigen::MatrixXd cloud(2 * sys.size(), sys.dimension);
  cloud << sys.initial, sys.target;
  const StructuredGrid grid = StructuredGrid::around(cloud, config.grid.margin, config.grid.counts);
  const Eigen::MatrixXd points = grid.points();
  std::vector<int> nodes = config.grid.nodes;
  if (nodes.empty())
    for (int k = 0; k < ladder.node_count(); ++k) nodes.push_back(k);
  fs::create_directories(dir / "fields");
  log << "exporting " << nodes.size() << " node(s) on a " << config.grid.counts[0] << "x" << config.grid.counts[1]
      << " grid\n";

  Eigen::VectorXd lo = cloud.colwise().minCoeff().transpose(), hi = cloud.colwise().maxCoeff().transpose();
  const Eigen::VectorXd pad = 0.1 * (hi - lo).cwiseMax(1e-9);
  lo -= pad;
  hi += pad;

  json per_node = json::array();
  int folded_total = 0;
  for (int k : nodes) {
    const double lam = ladder.node(k);
    DeformationField psi = transport_grid(*kernel, sys, traj, controls, lam, grid);
    log_jacobian(psi);
    psi.write_csv(dir / "fields" / ("deformation_" + node_tag(k) + ".csv"));

    DeformationField residual;
    residual.scale = lam;
    residual.grid = grid;
    residual.source = points;
    const Eigen::MatrixXd pulled = k == 0 ? points : inverse_points(*kernel, sys, traj, controls, ladder.node(k - 1), points);
    residual.mapped = transport_points(*kernel, sys, traj, controls, lam, pulled);
    log_jacobian(residual);
    residual.write_csv(dir / "fields" / ("residual_" + node_tag(k) + ".csv"));

    if (config.grid.render_svg)
      write_svg(dir / "fields" / ("shape_" + node_tag(k) + ".svg"),
                transport_points(*kernel, sys, traj, controls, lam, sys.initial), sys.target, lo, hi);

    folded_total += psi.folded_cells + residual.folded_cells;
    if (psi.folded_cells > 0 || residual.folded_cells > 0)
      log << "node " << k << ": " << psi.folded_cells << " folded deformation cells, " << residual.folded_cells
          << " folded residual cells\n";
    per_node.push_back({{"node", k},
                        {"scale", lam},
                        {"max_displacement", psi.max_displacement()},
                        {"min_log_jacobian", finite_min(psi.log_jacobian)},
                        {"max_log_jacobian", finite_max(psi.log_jacobian)},
                        {"folded_cells", psi.folded_cells},
                        {"residual_min_log_jacobian", finite_min(residual.log_jacobian)},
                        {"residual_max_log_jacobian", finite_max(residual.log_jacobian)},
                        {"residual_folded_cells", residual.folded_cells}});
  }

  const CompositionCheck check = residual_composition_check(*kernel, sys, traj, controls, ladder, grid);
  const double ratio = check.inverse_error > 0.0 ? check.composition_error / check.inverse_error
                                                 : (check.composition_error > 0.0 ? INFINITY : 0.0);
  const bool pass = ratio <= config.thresholds.composition_ratio;
  log << "residual composition error " << check.composition_error << ", inverse error " << check.inverse_error
      << '\n';
  finish_run(config, dir, "export",
             {{"grid", {{"counts", grid.counts},
                        {"origin", std::vector<double>(grid.origin.data(), grid.origin.data() + grid.origin.size())},
                        {"spacing", {grid.axes(0, 0), grid.axes(1, 1)}}}},
              {"nodes", per_node},
              {"folded_cells_total", folded_total},
              {"composition", {{"composition_error", check.composition_error},
                               {"inverse_error", check.inverse_error},
                               {"ratio", std::isfinite(ratio) ? json(ratio) : json(nullptr)},
                               {"ratio_bound", config.thresholds.composition_ratio},
                               {"pass", pass}}}});
  return pass ? kExitSuccess : kExitThreshold;
}

int cmd_check(const ExperimentConfig& config, std::ostream& log) {
  const fs::path dir = prepare_run(config);
  json results = json::array();
  bool all = true;
  auto record = [&](const std::string& name, bool ok, double value, const std::string& detail) {
    log << (ok ? "PASS " : "FAIL ") << name << " " << detail << '\n';
    results.push_back({{"name", name}, {"pass", ok}, {"value", value}});
    all = all && ok;
  };

  const bool round_trip = config_from_json(to_json(config)) == config;
  record("config_round_trip", round_trip, round_trip ? 0.0 : 1.0, "");

  const std::unique_ptr<ScaleSpaceKernel> kernel = load_or_build_kernel(config, log);
  const ScaleLadder ladder = config.ladder.build();
  const std::vector<double> bases = config.base_scales();
  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Symmetry and positivity at the base scales, where every backend is defined.
  double asym = 0.0;
  bool origin_positive = true;
  for (int i = 0; i < 50; ++i) {
    const double lam = bases[rng() % bases.size()], mu = bases[rng() % bases.size()];
    const double r = 3.0 * unit(rng);
    asym = std::max(asym, std::abs((*kernel)(lam, mu, r) - (*kernel)(mu, lam, r)));
    origin_positive = origin_positive && (*kernel)(lam, mu, 0.0) > 0.0;
  }
  record("kernel_symmetry", asym <= 1e-12, asym, "max |k(l,m,r) - k(m,l,r)| = " + std::to_string(asym));
  record("kernel_positive_at_origin", origin_positive, origin_positive ? 1.0 : 0.0, "");

  const int samples = 30;
  Eigen::MatrixXd gram(samples, samples);
  std::vector<double> scales(samples);
  Eigen::MatrixXd pts(samples, 2);
  for (int i = 0; i < samples; ++i) {
    scales[static_cast<std::size_t>(i)] = bases[rng() % bases.size()];
    pts.row(i) << 2.0 * unit(rng) - 1.0, 2.0 * unit(rng) - 1.0;
  }
  for (int i = 0; i < samples; ++i)
    for (int j = 0; j < samples; ++j)
      gram(i, j) = (*kernel)(scales[static_cast<std::size_t>(i)], scales[static_cast<std::size_t>(j)],
                             (pts.row(i) - pts.row(j)).norm());
  const Eigen::VectorXd eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(0.5 * (gram + gram.transpose())).eigenvalues();
  const bool psd = eig.minCoeff() >= -1e-8 * eig.maxCoeff();
  record("gram_positivity", psd, eig.minCoeff() / eig.maxCoeff(),
         "min/max eigenvalue = " + std::to_string(eig.minCoeff() / eig.maxCoeff()));

  // Adjoint gradient on a reduced copy of the configured system.
  LandmarkSystem full = config.landmark_system();
  std::vector<Eigen::MatrixXd> templates, targets;
  for (int k = 0; k < static_cast<int>(bases.size()); ++k) {
    std::vector<int> idx = full.group(k);
    const std::size_t stride = std::max<std::size_t>(1, idx.size() / 5);
    std::vector<int> keep;
    for (std::size_t i = 0; i < idx.size() && keep.size() < 5; i += stride) keep.push_back(idx[i]);
    templates.push_back(full.initial(keep, Eigen::all));
    targets.push_back(full.target(keep, Eigen::all));
  }
  const LandmarkSystem small = LandmarkSystem::from_groups(bases, templates, targets, config.weight);
  const int steps = std::min(config.time_steps, 5);
  Controls c = Controls::zero(steps, small.size(), small.dimension);
  for (auto& m : c.a)
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.5 * (2.0 * unit(rng) - 1.0);
  const GradientCheck gc = check_gradient(Objective(*kernel, small, steps), c, 1e-5);
  record("adjoint_gradient", gc.max_relative_error <= 1e-5, gc.max_relative_error,
         "max relative error " + std::to_string(gc.max_relative_error) + " over " + std::to_string(gc.coordinates) +
             " coordinates");

  // Identity controls leave every grid undeformed.
  const Controls zero = Controls::zero(config.time_steps, full.size(), full.dimension);
  const FlowTrajectory still = integrate_forward(*kernel, full, zero);
  Eigen::MatrixXd cloud(2 * full.size(), 2);
  cloud << full.initial, full.target;
  const StructuredGrid grid = StructuredGrid::around(cloud, config.grid.margin, {16, 16});
  double worst = 0.0;
  for (double lam : {ladder.s1(), ladder.node(ladder.node_count() / 2), ladder.s2()}) {
    DeformationField f = transport_grid(*kernel, full, still, zero, lam, grid);
    log_jacobian(f);
    worst = std::max(worst, f.log_jacobian.cwiseAbs().maxCoeff());
  }
  record("identity_log_jacobian", worst <= 1e-12, worst, "max |log J| = " + std::to_string(worst));

  finish_run(config, dir, "check", {{"results", results}, {"pass", all}});
  return all ? kExitSuccess : kExitThreshold;
}

int run_command(const std::string& verb, const fs::path& config_path, const std::vector<std::string>& overrides,
                const std::optional<fs::path>& controls, std::ostream& log, std::ostream& err) {
  try {
    const ExperimentConfig config = load_config(config_path, overrides);
    log << "run directory " << run_directory(config).string() << '\n';
    if (verb == "fit-kernel") return cmd_fit_kernel(config, log);
    if (verb == "register") return cmd_register(config, log);
    if (verb == "export-fields") return cmd_export_fields(config, controls, log);
    if (verb == "check") return cmd_check(config, log);
    err << "unknown command '" << verb << "'\n";
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const MissingInput& e) {
    err << "missing input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalFailure& e) {
    err << "numerical failure at step " << e.step() << ": " << e.what() << '\n';
    return kExitNumerical;
  } catch (const SolverFailure& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace mslddmm
