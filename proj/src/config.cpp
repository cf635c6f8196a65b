#include "varislip/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace varislip {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace((unsigned char)s[a])) ++a;
  while (b > a && std::isspace((unsigned char)s[b - 1])) --b;
  return s.substr(a, b - a);
}

bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!std::isalnum((unsigned char)c) && c != '_' && c != '.') return false;
  return true;
}

using KV = std::map<std::string, std::string>;

const KV& master_defaults() {
  static const KV kv = {
      {"scenario", "falling_disc"},
      {"seed", "0"},
      {"output.snapshot_stride", "20"},
      {"solid.nx", "32"},
      {"solid.ny", "32"},
      {"solid.extent_x", "0.30"},
      {"solid.extent_y", "0.30"},
      {"solid.det_exponent", "5"},
      {"solid.grad2_exponent", "4"},
      {"solid.rho_s", "1"},
      {"solid.model", "model"},
      {"solid.elastic_tensor", "1 1 1 0 0 0"},
      {"fluid.mx", "96"},
      {"fluid.my", "96"},
      {"fluid.x0", "0"},
      {"fluid.y0", "0"},
      {"fluid.lx", "1"},
      {"fluid.ly", "1"},
      {"fluid.nu", "0.05"},
      {"fluid.rho_f", "1"},
      {"fluid.slip", "1"},
      {"fluid.k0", "2"},
      {"step.tau", "0.001"},
      {"step.h", "0.01"},
      {"step.kappa", "0.0001"},
      {"step.a0", "1"},
      {"step.t_end", "0.2"},
      {"step.reg_order", "3"},
      {"force.x", "0"},
      {"force.y", "0"},
      {"force.mode", "constant"},
      {"force.omega", "0"},
      {"solver.grad_tol", "1e-5"},
      {"solver.max_outer", "4"},
      {"solver.max_inner", "150"},
      {"solver.penalty_init", "1e6"},
      {"solver.penalty_growth", "100"},
      {"solver.backtrack", "0.5"},
      {"solver.min_det", "1e-4"},
      {"solver.cn_tol", "1e-6"},
      {"solver.contact_fraction", "1.5"},
      {"solver.constraint_tol", "1e-8"},
      {"solver.lbfgs_memory", "12"},
      {"scenario.shape", "disc"},
      {"scenario.radius", "0.2"},
      {"scenario.gamma", "0.6"},
      {"scenario.cx", "0.5"},
      {"scenario.cy", "0.62"},
      {"scenario.r0", "0.3"},
      {"scenario.rate", "-0.1"},
      {"scenario.t0", "0"},
      {"scenario.t1", "1"},
      {"scenario.n_times", "9"},
  };
  return kv;
}

const std::map<std::string, KV>& scenario_overrides() {
  static const std::map<std::string, KV> table = {
      {"falling_disc",
       {{"force.y", "-1"}, {"solid.rho_s", "2"}}},
      {"release_disc",
       {{"solid.rho_s", "2"}, {"step.t_end", "0.04"}}},
      {"falling_disc_contact",
       {{"scenario.cy", "0.26"},
        {"force.y", "-8"},
        {"solid.rho_s", "4"},
        {"solid.nx", "24"},
        {"solid.ny", "24"},
        {"fluid.mx", "48"},
        {"fluid.my", "48"},
        {"step.t_end", "0.15"},
        {"solver.cn_tol", "1e-4"}}},
      {"sheared_block",
       {{"scenario.shape", "block"},
        {"scenario.cx", "0.5"},
        {"scenario.cy", "0.5"},
        {"solid.extent_x", "0.4"},
        {"solid.extent_y", "0.4"},
        {"solid.nx", "24"},
        {"solid.ny", "24"},
        {"fluid.mx", "48"},
        {"fluid.my", "48"},
        {"force.x", "1"},
        {"solid.rho_s", "4"},
        {"step.t_end", "0.03"}}},
      {"resting_block",
       {{"scenario.shape", "block"},
        {"scenario.cx", "0.5"},
        {"scenario.cy", "0.5"},
        {"solid.extent_x", "0.4"},
        {"solid.extent_y", "0.4"},
        {"solid.nx", "24"},
        {"solid.ny", "24"},
        {"fluid.mx", "48"},
        {"fluid.my", "48"},
        {"solid.model", "strain_only"},
        {"step.t_end", "0.05"}}},
      {"shrinking_disc_transport", {}},
      {"toy_step",
       {{"scenario.shape", "block"},
        {"scenario.cx", "0.5"},
        {"scenario.cy", "0.5"},
        {"solid.extent_x", "0.3"},
        {"solid.extent_y", "0.3"},
        {"solid.nx", "8"},
        {"solid.ny", "8"},
        {"fluid.mx", "24"},
        {"fluid.my", "24"},
        {"force.x", "0.4"},
        {"force.y", "-0.6"},
        {"solid.rho_s", "2"},
        {"step.t_end", "0.01"}}},
  };
  return table;
}

}  // namespace

std::vector<std::string> scenario_names() {
  std::vector<std::string> names;
  for (const auto& [k, v] : scenario_overrides()) names.push_back(k);
  return names;
}

SimulationConfig SimulationConfig::parse(const std::string& text) {
  SimulationConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_key(key))
      throw ParseError("line " + std::to_string(lineno) + ": invalid key '" + key + "'");
    if (value.empty())
      throw ParseError("line " + std::to_string(lineno) + ": empty value for key '" + key + "'");
    if (cfg.kv_.count(key))
      throw ParseError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    cfg.kv_[key] = value;
  }
  cfg.apply_scenario_defaults();
  cfg.validate();
  return cfg;
}

SimulationConfig SimulationConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void SimulationConfig::apply_scenario_defaults() {
  std::string name = kv_.count("scenario") ? kv_["scenario"] : "falling_disc";
  const auto& table = scenario_overrides();
  const auto it = table.find(name);
  if (it == table.end()) throw ValidationError("unknown scenario '" + name + "'");
  kv_["scenario"] = name;
  for (const auto& [k, v] : it->second)
    if (!kv_.count(k)) kv_[k] = v;
  for (const auto& [k, v] : master_defaults())
    if (!kv_.count(k)) kv_[k] = v;
}

std::string SimulationConfig::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : kv_) os << k << " = " << v << "\n";
  return os.str();
}

bool SimulationConfig::has(const std::string& key) const { return kv_.count(key) > 0; }

const std::string& SimulationConfig::get_string(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) throw ValidationError("missing config key '" + key + "'");
  return it->second;
}

double SimulationConfig::get_double(const std::string& key) const {
  const std::string& s = get_string(key);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw ValidationError("config key '" + key + "' is not a number: '" + s + "'");
  return v;
}

int SimulationConfig::get_int(const std::string& key) const {
  const double v = get_double(key);
  const int i = (int)std::llround(v);
  if (std::abs(v - i) > 1e-12)
    throw ValidationError("config key '" + key + "' is not an integer");
  return i;
}

void SimulationConfig::set(const std::string& key, const std::string& value) {
  if (!valid_key(key)) throw ValidationError("invalid config key '" + key + "'");
  kv_[key] = value;
}

void SimulationConfig::set_double(const std::string& key, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  set(key, buf);
}

uint64_t SimulationConfig::seed() const { return (uint64_t)get_double("seed"); }
int SimulationConfig::snapshot_stride() const { return get_int("output.snapshot_stride"); }

StepConfig SimulationConfig::step_config() const {
  StepConfig cfg;
  cfg.dt_tau = get_double("step.tau");
  cfg.h_delay = get_double("step.h");
  cfg.kappa = get_double("step.kappa");
  cfg.a0_exponent = get_double("step.a0");
  cfg.t_end = get_double("step.t_end");
  cfg.reg_order = get_int("step.reg_order");
  cfg.force.amp = Vec2(get_double("force.x"), get_double("force.y"));
  const std::string mode = get_string("force.mode");
  if (mode == "constant")
    cfg.force.mode = ForceDescriptor::Mode::Constant;
  else if (mode == "sine")
    cfg.force.mode = ForceDescriptor::Mode::Sine;
  else
    throw ValidationError("force.mode must be 'constant' or 'sine'");
  cfg.force.omega = get_double("force.omega");

  SolverConfig& s = cfg.solver;
  s.grad_tol = get_double("solver.grad_tol");
  s.max_outer = get_int("solver.max_outer");
  s.max_inner = get_int("solver.max_inner");
  s.penalty_init = get_double("solver.penalty_init");
  s.penalty_growth = get_double("solver.penalty_growth");
  s.backtrack = get_double("solver.backtrack");
  s.min_det = get_double("solver.min_det");
  s.cn_tol = get_double("solver.cn_tol");
  s.contact_fraction = get_double("solver.contact_fraction");
  s.constraint_tol = get_double("solver.constraint_tol");
  s.lbfgs_memory = get_int("solver.lbfgs_memory");
  return cfg;
}

ModelBundle SimulationConfig::models() const {
  ModelBundle m;
  m.mat.det_exponent = get_double("solid.det_exponent");
  m.mat.grad2_exponent = get_double("solid.grad2_exponent");
  m.mat.rho_s = get_double("solid.rho_s");
  const std::string model = get_string("solid.model");
  if (model == "model")
    m.mat.model = EnergyModel::ModelCase;
  else if (model == "strain_only")
    m.mat.model = EnergyModel::StrainOnly;
  else
    throw ValidationError("solid.model must be 'model' or 'strain_only'");
  {
    std::istringstream is(get_string("solid.elastic_tensor"));
    double c11, c22, c33, c12, c13, c23;
    if (!(is >> c11 >> c22 >> c33 >> c12 >> c13 >> c23))
      throw ValidationError("solid.elastic_tensor needs 6 numbers (upper triangle)");
    m.mat.elastic_tensor << c11, c12, c13, c12, c22, c23, c13, c23, c33;
  }
  m.fluid.nu = get_double("fluid.nu");
  m.fluid.rho_f = get_double("fluid.rho_f");
  m.fluid.slip_coefficient = get_double("fluid.slip");
  m.fluid.kappa = get_double("step.kappa");
  m.fluid.k0_order = get_int("fluid.k0");
  return m;
}

void SimulationConfig::validate() const {
  const std::string& name = get_string("scenario");
  const auto& table = scenario_overrides();
  if (!table.count(name)) throw ValidationError("unknown scenario '" + name + "'");
  if (name == "shrinking_disc_transport") {
    if (get_double("scenario.r0") <= 0) throw ValidationError("scenario.r0 must be positive");
    return;  // analytic scenario, no step/solid validation
  }
  step_config().validate();
  models().mat.validate();
  models().fluid.validate();
  if (get_int("solid.nx") < 4 || get_int("solid.ny") < 4)
    throw ValidationError("solid.nx, solid.ny must be >= 4");
  if (get_double("solid.extent_x") <= 0 || get_double("solid.extent_y") <= 0)
    throw ValidationError("solid extents must be positive");
  const double cx = get_double("fluid.lx") / get_int("fluid.mx");
  const double cy = get_double("fluid.ly") / get_int("fluid.my");
  if (std::abs(cx - cy) > 1e-12 * cx)
    throw ValidationError("fluid cells must be square (lx/mx == ly/my)");
  if (get_int("output.snapshot_stride") < 1)
    throw ValidationError("output.snapshot_stride must be >= 1");
}

}  // namespace varislip
