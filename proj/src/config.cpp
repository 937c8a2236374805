#include "mslddmm/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mslddmm {

using nlohmann::json;

ScaleLadder LadderSpec::build() const {
  if (!(step > 0.0) || !(s1 > 0.0) || !(s2 > s1)) throw ConfigError("ladder needs 0 < s1 < s2 and a positive step");
  const double first = s1 / step, last = s2 / step;
  const long lo = std::lround(first), hi = std::lround(last);
  if (std::abs(first - lo) > 1e-9 || std::abs(last - hi) > 1e-9)
    throw ConfigError("ladder endpoints must be multiples of the step");
  return ScaleLadder::stepped(step, static_cast<int>(lo), static_cast<int>(hi));
}

std::string to_string(KernelBackend backend) {
  switch (backend) {
    case KernelBackend::Fitted: return "fitted";
    case KernelBackend::Spectral: return "spectral";
    case KernelBackend::ClosedFormDirac: return "dirac";
    case KernelBackend::IntegratedDirac: return "integrated_dirac";
  }
  return "unknown";
}

KernelBackend kernel_backend_from_string(const std::string& name) {
  for (KernelBackend b :
       {KernelBackend::Fitted, KernelBackend::Spectral, KernelBackend::ClosedFormDirac, KernelBackend::IntegratedDirac})
    if (to_string(b) == name) return b;
  throw ConfigError("unknown kernel backend '" + name + "'");
}

namespace {

// Reads fields from one JSON object and rejects keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }
  bool has(const char* key) const { return j_.contains(key); }
  const json& at(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where_ + "." + key + " is required");
    return j_.at(key);
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown key " + where_ + "." + k);
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json shape_json(const ShapeSpec& s) {
  json j;
  j["type"] = to_string(s.kind);
  if (s.kind == ShapeKind::Points) {
    j["points"] = s.points;
    return j;
  }
  j["count"] = s.count;
  j["center"] = s.center;
  j["phase"] = s.phase;
  switch (s.kind) {
    case ShapeKind::Circle: j["radius"] = s.radius; break;
    case ShapeKind::BumpyEllipse:
      j["amplitude"] = s.amplitude;
      j["frequency"] = s.frequency;
      [[fallthrough]];
    case ShapeKind::Ellipse:
      j["radii"] = s.radii;
      j["rotation"] = s.rotation;
      break;
    case ShapeKind::Flower:
      j["petals"] = s.petals;
      j["inner"] = s.inner;
      j["outer"] = s.outer;
      j["rotation"] = s.rotation;
      break;
    case ShapeKind::SchematicHuman:
      j["head"] = s.head;
      j["left_arm"] = s.left_arm;
      j["right_arm"] = s.right_arm;
      j["size"] = s.size;
      break;
    case ShapeKind::Points: break;
  }
  return j;
}

ShapeSpec shape_from_json(const json& j, const std::string& where) {
  Reader r(j, where);
  ShapeSpec s;
  std::string type;
  r.get("type", type);
  try {
    s.kind = shape_kind_from_string(type);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
  if (s.kind == ShapeKind::Points) {
    r.get("points", s.points);
  } else {
    r.get("count", s.count);
    r.get("center", s.center);
    r.get("phase", s.phase);
    switch (s.kind) {
      case ShapeKind::Circle: r.get("radius", s.radius); break;
      case ShapeKind::BumpyEllipse:
        r.get("amplitude", s.amplitude);
        r.get("frequency", s.frequency);
        [[fallthrough]];
      case ShapeKind::Ellipse:
        r.get("radii", s.radii);
        r.get("rotation", s.rotation);
        break;
      case ShapeKind::Flower:
        r.get("petals", s.petals);
        r.get("inner", s.inner);
        r.get("outer", s.outer);
        r.get("rotation", s.rotation);
        break;
      case ShapeKind::SchematicHuman:
        r.get("head", s.head);
        r.get("left_arm", s.left_arm);
        r.get("right_arm", s.right_arm);
        r.get("size", s.size);
        break;
      case ShapeKind::Points: break;
    }
  }
  r.finish();
  return s;
}

json measure_json(const ScaleMeasure& m) {
  if (const auto* d = std::get_if<DiracMeasure>(&m)) return {{"type", "dirac"}, {"s0", d->s0}, {"sigma", d->sigma}};
  if (const auto* s = std::get_if<SumDiracMeasure>(&m))
    return {{"type", "sum_dirac"}, {"weight_s1", s->weight_s1}, {"weight_s2", s->weight_s2}};
  return {{"type", "lebesgue"}, {"sigma", std::get<LebesgueMeasure>(m).sigma}};
}

ScaleMeasure measure_from_json(const json& j) {
  Reader r(j, "measure");
  std::string type = "lebesgue";
  r.get("type", type);
  ScaleMeasure out;
  if (type == "dirac") {
    DiracMeasure d;
    r.get("s0", d.s0);
    r.get("sigma", d.sigma);
    out = d;
  } else if (type == "sum_dirac") {
    SumDiracMeasure s;
    r.get("weight_s1", s.weight_s1);
    r.get("weight_s2", s.weight_s2);
    out = s;
  } else if (type == "lebesgue") {
    LebesgueMeasure l;
    r.get("sigma", l.sigma);
    out = l;
  } else {
    throw ConfigError("unknown measure type '" + type + "'");
  }
  r.finish();
  return out;
}

std::string method_name(OptimizerMethod m) { return m == OptimizerMethod::LBFGS ? "lbfgs" : "gradient_descent"; }

}  // namespace

json to_json(const ExperimentConfig& c) {
  json j;
  j["schema_version"] = ExperimentConfig::kSchemaVersion;
  j["name"] = c.name;
  j["ladder"] = {{"s1", c.ladder.s1}, {"s2", c.ladder.s2}, {"step", c.ladder.step}};
  j["measure"] = measure_json(c.measure);
  j["kernel"] = {{"backend", to_string(c.kernel.backend)},
                 {"basis_size", c.kernel.basis_size},
                 {"frequencies", c.kernel.frequencies},
                 {"max_residual", c.kernel.max_residual},
                 {"interpolate", c.kernel.interpolate}};
  json shapes = json::array();
  for (const ShapePair& p : c.shapes)
    shapes.push_back({{"scale", p.scale}, {"template", shape_json(p.template_shape)}, {"target", shape_json(p.target_shape)}});
  j["shapes"] = shapes;
  j["time_steps"] = c.time_steps;
  j["weight"] = c.weight;
  j["optimizer"] = {{"method", method_name(c.optimizer.method)},
                    {"max_iterations", c.optimizer.max_iterations},
                    {"tolerance", c.optimizer.tolerance},
                    {"memory", c.optimizer.memory},
                    {"armijo", c.optimizer.armijo},
                    {"max_halvings", c.optimizer.max_halvings}};
  j["grid"] = {{"counts", c.grid.counts},
               {"margin", c.grid.margin},
               {"nodes", c.grid.nodes},
               {"render_svg", c.grid.render_svg}};
  j["thresholds"] = {{"rmse_fraction", c.thresholds.rmse_fraction},
                     {"composition_ratio", c.thresholds.composition_ratio}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  Reader r(j, "config");
  int version = 0;
  r.get("schema_version", version);
  if (version != ExperimentConfig::kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(version));
  ExperimentConfig c;
  r.get("name", c.name);
  if (r.has("ladder")) {
    Reader l(r.at("ladder"), "ladder");
    l.get("s1", c.ladder.s1);
    l.get("s2", c.ladder.s2);
    l.get("step", c.ladder.step);
    l.finish();
  }
  if (r.has("measure")) c.measure = measure_from_json(r.at("measure"));
  if (r.has("kernel")) {
    Reader k(r.at("kernel"), "kernel");
    std::string backend = to_string(c.kernel.backend);
    k.get("backend", backend);
    c.kernel.backend = kernel_backend_from_string(backend);
    k.get("basis_size", c.kernel.basis_size);
    k.get("frequencies", c.kernel.frequencies);
    k.get("max_residual", c.kernel.max_residual);
    k.get("interpolate", c.kernel.interpolate);
    k.finish();
  }
  const json& shapes = r.at("shapes");
  if (!shapes.is_array()) throw ConfigError("shapes must be an array");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const std::string where = "shapes[" + std::to_string(i) + "]";
    Reader s(shapes[i], where);
    ShapePair p;
    s.get("scale", p.scale);
    p.template_shape = shape_from_json(s.at("template"), where + ".template");
    p.target_shape = shape_from_json(s.at("target"), where + ".target");
    s.finish();
    c.shapes.push_back(std::move(p));
  }
  r.get("time_steps", c.time_steps);
  r.get("weight", c.weight);
  if (r.has("optimizer")) {
    Reader o(r.at("optimizer"), "optimizer");
    std::string method = method_name(c.optimizer.method);
    o.get("method", method);
    if (method == "lbfgs")
      c.optimizer.method = OptimizerMethod::LBFGS;
    else if (method == "gradient_descent")
      c.optimizer.method = OptimizerMethod::GradientDescent;
    else
      throw ConfigError("unknown optimizer method '" + method + "'");
    o.get("max_iterations", c.optimizer.max_iterations);
    o.get("tolerance", c.optimizer.tolerance);
    o.get("memory", c.optimizer.memory);
    o.get("armijo", c.optimizer.armijo);
    o.get("max_halvings", c.optimizer.max_halvings);
    o.finish();
  }
  if (r.has("grid")) {
    Reader g(r.at("grid"), "grid");
    g.get("counts", c.grid.counts);
    g.get("margin", c.grid.margin);
    g.get("nodes", c.grid.nodes);
    g.get("render_svg", c.grid.render_svg);
    g.finish();
  }
  if (r.has("thresholds")) {
    Reader t(r.at("thresholds"), "thresholds");
    t.get("rmse_fraction", c.thresholds.rmse_fraction);
    t.get("composition_ratio", c.thresholds.composition_ratio);
    t.finish();
  }
  r.get("seed", c.seed);
  r.get("output_dir", c.output_dir);
  r.finish();
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("name must be a nonempty file name");
  const ScaleLadder l = ladder.build();
  try {
    mslddmm::validate(measure, l);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("measure: ") + e.what());
  }
  const bool dirac = std::holds_alternative<DiracMeasure>(measure);
  const bool lebesgue = std::holds_alternative<LebesgueMeasure>(measure);
  switch (kernel.backend) {
    case KernelBackend::ClosedFormDirac:
      if (!dirac) throw ConfigError("the dirac backend needs a dirac measure");
      break;
    case KernelBackend::Fitted:
      if (dirac) throw ConfigError("a dirac measure has a closed form; use the dirac backend");
      break;
    case KernelBackend::Spectral:
    case KernelBackend::IntegratedDirac:
      if (!lebesgue) throw ConfigError("the " + to_string(kernel.backend) + " backend needs a lebesgue measure");
      break;
  }
  if (kernel.basis_size < 1 || kernel.frequencies < 2) throw ConfigError("kernel needs basis_size >= 1 and frequencies >= 2");
  if (!(kernel.max_residual > 0.0)) throw ConfigError("kernel.max_residual must be positive");
  if (shapes.empty()) throw ConfigError("at least one shape pair is required");
  std::set<int> seen;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const ShapePair& p = shapes[i];
    const auto node = l.node_index(p.scale, 1e-9);
    if (!node) throw ConfigError("base scale " + std::to_string(p.scale) + " is not a ladder node");
    if (!seen.insert(*node).second) throw ConfigError("base scale " + std::to_string(p.scale) + " listed twice");
    Eigen::MatrixXd a, b;
    try {
      a = generate_shape(p.template_shape);
      b = generate_shape(p.target_shape);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("shapes[" + std::to_string(i) + "]: " + e.what());
    }
    if (a.rows() != b.rows())
      throw ConfigError("shapes[" + std::to_string(i) + "]: template has " + std::to_string(a.rows()) +
                        " points, target has " + std::to_string(b.rows()));
  }
  if (time_steps < 1) throw ConfigError("time_steps must be positive");
  if (!(weight > 0.0)) throw ConfigError("weight must be positive");
  if (optimizer.max_iterations < 0 || !(optimizer.tolerance > 0.0) || optimizer.memory < 1)
    throw ConfigError("invalid optimizer settings");
  if (grid.counts.size() != 2 || grid.counts[0] < 2 || grid.counts[1] < 2)
    throw ConfigError("grid.counts must hold two counts >= 2");
  if (!(grid.margin >= 0.0)) throw ConfigError("grid.margin must be nonnegative");
  for (int k : grid.nodes)
    if (k < 0 || k >= l.node_count()) throw ConfigError("grid node " + std::to_string(k) + " is off the ladder");
  if (output_dir.empty()) throw ConfigError("output_dir must be nonempty");
}

std::vector<double> ExperimentConfig::base_scales() const {
  const ScaleLadder l = ladder.build();
  std::vector<double> out;
  for (const ShapePair& p : shapes) out.push_back(l.node(*l.node_index(p.scale, 1e-9)));
  return out;
}

LandmarkSystem ExperimentConfig::landmark_system() const {
  std::vector<Eigen::MatrixXd> templates, targets;
  for (const ShapePair& p : shapes) {
    templates.push_back(generate_shape(p.template_shape));
    targets.push_back(generate_shape(p.target_shape));
  }
  LandmarkSystem sys = LandmarkSystem::from_groups(base_scales(), templates, targets, weight);
  return sys;
}

void apply_override(json& document, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &document;
  std::stringstream parts(path);
  std::string part;
  std::vector<std::string> keys;
  while (std::getline(parts, part, '.')) {
    if (part.empty()) throw ConfigError("override path '" + path + "' has an empty component");
    keys.push_back(part);
  }
  for (std::size_t i = 0; i < keys.size(); ++i) {
    const std::string& key = keys[i];
    const bool last = i + 1 == keys.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(key);
      } catch (const std::exception&) {
        throw ConfigError("override path '" + path + "': '" + key + "' is not an array index");
      }
      if (idx >= node->size()) throw ConfigError("override path '" + path + "': index out of range");
      node = &(*node)[idx];
    } else {
      if (!node->is_object()) throw ConfigError("override path '" + path + "' descends into a scalar");
      node = &(*node)[key];
    }
    if (last) *node = value;
  }
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  for (const std::string& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

std::string canonical_dump(const ExperimentConfig& config) { return to_json(config).dump(); }

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mslddmm
