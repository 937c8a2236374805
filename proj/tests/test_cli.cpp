#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mslddmm/config.hpp"
#include "mslddmm/pipeline.hpp"
#include "mslddmm/shapes.hpp"

using namespace mslddmm;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = MSLDDMM_CONFIG_DIR;

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("mslddmm_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

int run(const std::string& verb, const fs::path& config, std::vector<std::string> overrides,
        const std::optional<fs::path>& controls = std::nullopt) {
  std::ostringstream log, err;
  const int code = run_command(verb, config, overrides, controls, log, err);
  if (code != 0) MESSAGE(verb << " exited " << code << ": " << err.str());
  return code;
}

/// Example 2 shrunk so every command runs in about a second; the heavier
/// weight keeps 12 points inside the RMSE bound.
std::vector<std::string> quick(const fs::path& out) {
  return {"output_dir=\"" + out.string() + "\"", "shapes.0.template.count=12", "shapes.0.target.count=12",
          "shapes.1.template.count=12", "shapes.1.target.count=12", "grid.counts=[16,16]", "grid.nodes=[0,9,19]",
          "kernel.frequencies=128", "time_steps=10", "weight=100"};
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("every example config round-trips") {
  int seen = 0;
  for (const auto& entry : fs::directory_iterator(kConfigs)) {
    if (entry.path().extension() != ".json") continue;
    ++seen;
    const ExperimentConfig c = load_config(entry.path());
    CHECK_NOTHROW(c.validate());
    CHECK(config_from_json(to_json(c)) == c);
    CHECK(canonical_dump(config_from_json(nlohmann::json::parse(canonical_dump(c)))) == canonical_dump(c));
    CHECK(c.landmark_system().size() > 0);
  }
  CHECK(seen == 5);
}

TEST_CASE("paper protocol in the example configs") {
  const ExperimentConfig c = load_config(kConfigs / "example2_bumpy_ellipse.json");
  CHECK(c.ladder.build().node_count() == 20);
  CHECK(c.base_scales() == std::vector<double>{0.1, 2.0});
  CHECK(c.time_steps == 20);
  CHECK(c.weight == 1.0);
  const ExperimentConfig two = load_config(kConfigs / "example5_two_templates.json");
  const LandmarkSystem sys = two.landmark_system();
  const auto g0 = sys.group(0), g1 = sys.group(1);
  REQUIRE(g0.size() == g1.size());
  double gap = 0.0;
  for (std::size_t i = 0; i < g0.size(); ++i) gap = std::max(gap, (sys.initial.row(g0[i]) - sys.initial.row(g1[i])).norm());
  CHECK(gap > 0.1);
}

TEST_CASE("overrides and validation") {
  const fs::path cfg = kConfigs / "example2_bumpy_ellipse.json";
  const ExperimentConfig c = load_config(cfg, {"time_steps=40", "shapes.1.target.amplitude=0.1", "name=alt"});
  CHECK(c.time_steps == 40);
  CHECK(c.shapes[1].target_shape.amplitude == 0.1);
  CHECK(c.name == "alt");
  CHECK_THROWS_AS(load_config(cfg, {"no_such_key=1"}), ConfigError);
  CHECK_THROWS_AS(load_config(cfg, {"time_steps"}), ConfigError);
  CHECK_THROWS_AS(load_config(cfg, {"shapes.0.scale=0.15"}), ConfigError);
  CHECK_THROWS_AS(load_config(cfg, {"shapes.0.target.count=31"}), ConfigError);
  CHECK_THROWS_AS(load_config(cfg, {"measure={\"type\":\"dirac\",\"s0\":1.0,\"sigma\":1.0}"}), ConfigError);
  CHECK_THROWS_AS(load_config(cfg, {"schema_version=2"}), ConfigError);
  CHECK_THROWS_AS(load_config(cfg, {"kernel.backend=\"magic\""}), ConfigError);
  CHECK_NOTHROW(load_config(cfg, {"measure={\"type\":\"dirac\",\"s0\":1.0,\"sigma\":1.0}", "kernel.backend=dirac"}));

  nlohmann::json doc = {{"a", {{"b", nlohmann::json::array({1, 2})}}}};
  apply_override(doc, "a.b.1=7");
  apply_override(doc, "a.c=hello");
  CHECK(doc["a"]["b"][1] == 7);
  CHECK(doc["a"]["c"] == "hello");
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("shape generators") {
  ShapeSpec circle;
  circle.count = 24;
  circle.radius = 1.5;
  const Eigen::MatrixXd c = generate_shape(circle);
  CHECK(c.rows() == 24);
  CHECK((c.rowwise().norm().array() - 1.5).abs().maxCoeff() <= 1e-14);
  CHECK(diameter(c) == doctest::Approx(3.0));
  CHECK(c(1, 1) > 0.0);  // counterclockwise

  ShapeSpec flower;
  flower.kind = ShapeKind::Flower;
  flower.petals = 5;
  flower.inner = 0.5;
  flower.outer = 1.1;
  flower.count = 60;
  const Eigen::VectorXd r = generate_shape(flower).rowwise().norm();
  CHECK(r.maxCoeff() == doctest::Approx(1.1));
  CHECK(r.minCoeff() >= 0.5 - 1e-12);

  ShapeSpec bumpy;
  bumpy.kind = ShapeKind::BumpyEllipse;
  bumpy.radii = {1.2, 0.8};
  bumpy.amplitude = 0.0;
  const Eigen::MatrixXd e = generate_shape(bumpy);
  for (Eigen::Index i = 0; i < e.rows(); ++i)
    CHECK(std::pow(e(i, 0) / 1.2, 2) + std::pow(e(i, 1) / 0.8, 2) == doctest::Approx(1.0));

  ShapeSpec human;
  human.kind = ShapeKind::SchematicHuman;
  CHECK(generate_shape(human).rows() == 60);
  human.right_arm = 1.0;
  CHECK_FALSE(generate_shape(human).isApprox(generate_shape(ShapeSpec{.kind = ShapeKind::SchematicHuman})));

  Eigen::MatrixXd square(4, 2);
  square << 0, 0, 1, 0, 1, 1, 0, 1;
  const Eigen::MatrixXd rs = resample_closed_polygon(square, 8);
  CHECK(rs.rows() == 8);
  for (Eigen::Index i = 0; i < 8; ++i) CHECK((rs.row((i + 1) % 8) - rs.row(i)).norm() == doctest::Approx(0.5));

  CHECK_THROWS_AS(generate_shape(ShapeSpec{.count = 0}), std::invalid_argument);
  CHECK(shape_kind_from_string(to_string(ShapeKind::Flower)) == ShapeKind::Flower);
  CHECK_THROWS_AS(shape_kind_from_string("blob"), std::invalid_argument);
}

TEST_CASE("end-to-end run on a reduced example") {
  Scratch s("e2e");
  const fs::path cfg = kConfigs / "example2_bumpy_ellipse.json";
  const auto ov = quick(s.dir);
  const ExperimentConfig c = load_config(cfg, ov);
  const fs::path run_dir = run_directory(c);
  CHECK(run_dir.parent_path() == s.dir);
  CHECK(run_dir.filename().string().rfind("example2_bumpy_ellipse-", 0) == 0);
  CHECK(run_dir.filename().string().size() == std::string("example2_bumpy_ellipse-").size() + 16);

  REQUIRE(run("fit-kernel", cfg, ov) == kExitSuccess);
  for (const char* f : {"kernel_table.bin", "kernel_table.csv", "kernel_fit_report.json", "config.json", "summary.json", "manifest.json"})
    CHECK(fs::exists(run_dir / f));
  const nlohmann::json fit = read_json(run_dir / "summary.json").at("fit");
  CHECK(fit.at("pass").get<bool>());
  CHECK(fit.at("max_relative_residual").get<double>() <= 1e-2);
  CHECK(fit.at("min_diagonal_spectrum").get<double>() >= 0.0);
  // Every node against both base scales.
  const nlohmann::json report = read_json(run_dir / "kernel_fit_report.json");
  int diag = 0, cross = 0;
  for (const auto& p : report.at("pairs")) (p.at("k") == p.at("l") ? diag : cross) += 1;
  CHECK(diag == 20);
  CHECK(cross == 2 * 18 + 1);

  REQUIRE(run("register", cfg, ov) == kExitSuccess);
  CHECK(fs::exists(run_dir / "controls.json"));
  CHECK(fs::exists(run_dir / "history.csv"));
  const nlohmann::json reg = read_json(run_dir / "summary.json").at("register");
  CHECK(reg.at("base_scales").size() == 2);
  for (const auto& b : reg.at("base_scales")) CHECK(b.at("rmse_fraction").get<double>() <= 0.02);

  REQUIRE(run("export-fields", cfg, ov) == kExitSuccess);
  for (int n : {0, 9, 19}) {
    char name[32];
    std::snprintf(name, sizeof name, "deformation_%02d.csv", n);
    CHECK(fs::exists(run_dir / "fields" / name));
    std::snprintf(name, sizeof name, "residual_%02d.csv", n);
    CHECK(fs::exists(run_dir / "fields" / name));
  }
  const nlohmann::json ex = read_json(run_dir / "summary.json").at("export");
  CHECK(ex.at("nodes").size() == 3);
  CHECK(ex.at("composition").contains("ratio"));
  CHECK(read_json(run_dir / "summary.json").contains("fit"));

  // The manifest lists every file but itself, sorted, with matching digests.
  const nlohmann::json manifest = read_json(run_dir / "manifest.json");
  std::vector<std::string> names;
  for (const auto& f : manifest.at("files")) {
    names.push_back(f.at("path").get<std::string>());
    CHECK(f.at("bytes").get<std::uintmax_t>() == fs::file_size(run_dir / names.back()));
  }
  CHECK(std::is_sorted(names.begin(), names.end()));
  CHECK(std::find(names.begin(), names.end(), "manifest.json") == names.end());

  REQUIRE(run("check", cfg, ov) == kExitSuccess);
  CHECK(read_json(run_dir / "summary.json").at("check").at("pass").get<bool>());
}

TEST_CASE("reruns are byte-identical across thread counts") {
  Scratch a("rerun_a"), b("rerun_b");
  const fs::path cfg = kConfigs / "example2_bumpy_ellipse.json";
  auto ov_a = quick(a.dir), ov_b = quick(b.dir);
  REQUIRE(run("fit-kernel", cfg, ov_a) == kExitSuccess);
  REQUIRE(run("fit-kernel", cfg, ov_b) == kExitSuccess);
  REQUIRE(run("register", cfg, ov_a) == kExitSuccess);
  REQUIRE(run("register", cfg, ov_b) == kExitSuccess);
  const fs::path ra = run_directory(load_config(cfg, ov_a)), rb = run_directory(load_config(cfg, ov_b));
  // output_dir is part of the config, so the hashes differ; the contents must not.
  for (const char* f : {"kernel_table.bin", "kernel_table.csv", "kernel_fit_report.json", "controls.json", "history.csv"})
    CHECK(slurp(ra / f) == slurp(rb / f));
  const std::string first = slurp(ra / "kernel_table.bin");
  const std::string controls = slurp(ra / "controls.json");
  fs::remove(ra / "kernel_table.bin");
  fs::remove(ra / "controls.json");
  ::setenv("MSLDDMM_THREADS", "3", 1);
  REQUIRE(run("fit-kernel", cfg, ov_a) == kExitSuccess);
  REQUIRE(run("register", cfg, ov_a) == kExitSuccess);
  ::unsetenv("MSLDDMM_THREADS");
  CHECK(slurp(ra / "kernel_table.bin") == first);
  CHECK(slurp(ra / "controls.json") == controls);
}

TEST_CASE("identity registration exports flat log-Jacobians") {
  Scratch s("identity");
  const fs::path cfg = kConfigs / "example2_bumpy_ellipse.json";
  const ExperimentConfig c = load_config(cfg, quick(s.dir));
  nlohmann::json doc = to_json(c);
  for (auto& pair : doc.at("shapes")) pair["target"] = pair["template"];
  const fs::path id_cfg = s.dir / "identity.json";
  std::ofstream(id_cfg) << doc.dump(2);

  REQUIRE(run("register", id_cfg, {}) == kExitSuccess);
  const ExperimentConfig ic = load_config(id_cfg);
  const auto [sys, controls] = read_controls_json(run_directory(ic) / "controls.json");
  for (const auto& a : controls.a) CHECK(a.cwiseAbs().maxCoeff() <= 1e-12);
  REQUIRE(run("export-fields", id_cfg, {}) == kExitSuccess);
  const nlohmann::json ex = read_json(run_directory(ic) / "summary.json").at("export");
  for (const auto& n : ex.at("nodes")) {
    CHECK(std::abs(n.at("min_log_jacobian").get<double>()) <= 1e-12);
    CHECK(std::abs(n.at("max_log_jacobian").get<double>()) <= 1e-12);
    CHECK(n.at("max_displacement").get<double>() == 0.0);
  }
}

TEST_CASE("exit codes") {
  Scratch s("codes");
  const fs::path cfg = kConfigs / "example2_bumpy_ellipse.json";
  const auto ov = quick(s.dir);

  const fs::path broken = s.dir / "broken.json";
  std::ofstream(broken) << "{ not json";
  CHECK(run("fit-kernel", broken, {}) == kExitConfig);
  CHECK(run("register", cfg, {"bogus=1"}) == kExitConfig);
  CHECK(run("export-fields", cfg, ov, s.dir / "missing_controls.json") == kExitConfig);
  CHECK(run("export-fields", cfg, ov) == kExitConfig);  // nothing registered yet

  auto tight = ov;
  tight.push_back("kernel.max_residual=1e-6");
  CHECK(run("fit-kernel", cfg, tight) == kExitThreshold);
  const nlohmann::json fit = read_json(run_directory(load_config(cfg, tight)) / "summary.json").at("fit");
  CHECK_FALSE(fit.at("pass").get<bool>());

  auto strict = ov;
  strict.push_back("thresholds.rmse_fraction=1e-6");
  CHECK(run("register", cfg, strict) == kExitThreshold);

  REQUIRE(run("register", cfg, ov) == kExitSuccess);
  const fs::path run_dir = run_directory(load_config(cfg, ov));
  auto [sys, controls] = read_controls_json(run_dir / "controls.json");
  for (auto& a : controls.a) a.setConstant(1.5e308);  // the kernel sum overflows
  const fs::path huge = s.dir / "huge_controls.json";
  write_controls_json(sys, controls, huge);
  CHECK(run("export-fields", cfg, ov, huge) == kExitNumerical);
}

TEST_CASE("closed-form backends bypass fitting") {
  Scratch s("dirac");
  const fs::path cfg = kConfigs / "example2_bumpy_ellipse.json";
  auto ov = quick(s.dir);
  ov.push_back("measure={\"type\":\"dirac\",\"s0\":1.0,\"sigma\":1.0}");
  ov.push_back("kernel.backend=dirac");
  REQUIRE(run("fit-kernel", cfg, ov) == kExitSuccess);
  const fs::path dir = run_directory(load_config(cfg, ov));
  CHECK_FALSE(fs::exists(dir / "kernel_table.bin"));
  CHECK(read_json(dir / "summary.json").at("fit").at("closed_form").get<bool>());
  CHECK(run("register", cfg, ov) == kExitSuccess);
}

TEST_CASE("command-line binary") {
  Scratch s("binary");
  const std::string exe = MSLDDMM_CLI_PATH;
  const std::string cfg = (kConfigs / "example2_bumpy_ellipse.json").string();
  const std::string quiet = " >/dev/null 2>&1";
  CHECK(shell(exe + quiet) == kExitConfig);
  CHECK(shell(exe + " frobnicate " + cfg + quiet) == kExitConfig);
  CHECK(shell(exe + " fit-kernel /no/such/file.json" + quiet) == kExitConfig);
  CHECK(shell(exe + " --help" + quiet) == 0);
  std::string cmd = exe + " fit-kernel " + cfg;
  for (const auto& o : quick(s.dir)) cmd += " --set '" + o + "'";
  CHECK(shell(cmd + quiet) == kExitSuccess);
  CHECK(shell("MSLDDMM_THREADS=1 " + cmd + quiet) == kExitSuccess);
}
