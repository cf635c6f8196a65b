#include "varislip/io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "varislip/scenario.hpp"

namespace varislip {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> budget_columns() {
  std::vector<std::string> cols = {"time", "step"};
  for (auto n : EnergyBudget::field_names()) cols.emplace_back(n);
  for (const char* n : {"normal_residual", "tangential_jump", "max_divergence", "cn_residual",
                        "min_separation", "flow_det_min", "flow_det_max", "coupling_defect",
                        "iterations", "row_sum"})
    cols.emplace_back(n);
  return cols;
}

namespace {

void write_array(std::ostream& os, const std::string& name, const Vec& v) {
  os << name << " =";
  for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << format_double(v[i]);
  os << '\n';
}

void write_points(std::ostream& os, const std::string& name, const std::vector<Vec2>& pts) {
  Vec x(pts.size()), y(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    x[(Eigen::Index)i] = pts[i].x();
    y[(Eigen::Index)i] = pts[i].y();
  }
  write_array(os, name + "_x", x);
  write_array(os, name + "_y", y);
}

std::vector<double> budget_row(const TrajectoryRecord& rec, double normal_residual,
                               double tangential_jump) {
  std::vector<double> row;
  row.push_back(rec.time);
  row.push_back(rec.step);
  for (double v : rec.budget.numeric_fields()) row.push_back(v);
  row.push_back(normal_residual);
  row.push_back(tangential_jump);
  row.push_back(rec.max_div_residual);
  row.push_back(rec.cn_residual);
  row.push_back(rec.min_sep);
  row.push_back(rec.flow_det_min);
  row.push_back(rec.flow_det_max);
  row.push_back(rec.coupling_defect_at_new);
  row.push_back(rec.iterations);
  double sum = 0.0;
  for (double v : row) sum += v;
  row.push_back(sum);
  return row;
}

std::string abort_name(AbortReason r) {
  switch (r) {
    case AbortReason::None: return "none";
    case AbortReason::ContactImminent: return "contact_imminent";
    case AbortReason::CiarletNecas: return "ciarlet_necas";
    case AbortReason::SelfIntersection: return "self_intersection";
    case AbortReason::StepFailure: return "step_failure";
  }
  return "unknown";
}

void write_snapshot(const fs::path& path, const TrajectoryRecord& rec) {
  std::ofstream os(path);
  os << "record = snapshot\n";
  os << "schema_version = " << kSchemaVersion << "\n";
  os << "step = " << rec.step << "\n";
  os << "time = " << format_double(rec.time) << "\n";
  write_array(os, "eta_x", rec.eta.x);
  write_array(os, "eta_y", rec.eta.y);
  write_points(os, "interface", rec.interface_new.points);
  write_array(os, "vx", rec.v_full.x);
  write_array(os, "vy", rec.v_full.y);
  write_array(os, "pressure", rec.pressure_full);
  os << "labels =";
  for (CellLabel l : rec.cls_used.labels) os << ' ' << (int)l;
  os << '\n';
}

std::map<std::string, std::string> read_kv_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(f, line)) {
    const size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

}  // namespace

void write_outputs(const Trajectory& traj, const VerificationReport& report,
                   const SimulationConfig& config, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path root(dir);

  {
    std::ofstream os(root / "metadata.txt");
    os << "meta.schema_version = " << kSchemaVersion << "\n";
    os << "meta.code_version = " << kCodeVersion << "\n";
    os << "meta.abort_reason = " << abort_name(traj.abort) << "\n";
    os << "meta.abort_message = " << (traj.abort_message.empty() ? "-" : traj.abort_message)
       << "\n";
    os << "meta.steps_completed = " << traj.steps_completed() << "\n";
    os << "meta.initial_elastic = " << format_double(traj.records[0].budget.elastic) << "\n";
    os << "meta.initial_regularizer = "
       << format_double(traj.records[0].budget.solid_regularizer) << "\n";
    os << "meta.comparison_tolerance = " << format_double(comparison_tolerance(traj)) << "\n";
    for (const auto& [k, v] : config.entries()) os << "config." << k << " = " << v << "\n";
  }

  {
    std::ofstream os(root / "budget.csv");
    const auto cols = budget_columns();
    for (size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << '\n';
    for (int k = 1; k <= traj.steps_completed(); ++k) {
      const CouplingReport cr = check_coupling(traj, k);
      const auto row = budget_row(traj.records[k], cr.normal_residual, cr.tangential_jump_rms);
      for (size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_double(row[i]);
      os << '\n';
    }
  }

  {
    std::ofstream os(root / "report.txt");
    os << report.to_text();
  }

  const int stride = config.snapshot_stride();
  for (int k = 0; k <= traj.steps_completed(); ++k) {
    if (k % stride != 0 && k != traj.steps_completed()) continue;
    char name[40];
    std::snprintf(name, sizeof(name), "snapshot_%06d.txt", k);
    write_snapshot(root / name, traj.records[k]);
  }
}

void write_transport_outputs(const TransportReport& report, const SimulationConfig& config,
                             const std::string& dir) {
  fs::create_directories(dir);
  const fs::path root(dir);
  {
    std::ofstream os(root / "metadata.txt");
    os << "meta.schema_version = " << kSchemaVersion << "\n";
    os << "meta.code_version = " << kCodeVersion << "\n";
    os << "meta.kind = transport\n";
    for (const auto& [k, v] : config.entries()) os << "config." << k << " = " << v << "\n";
  }
  std::ofstream os(root / "report.txt");
  VerificationReport rep;
  rep.checks.push_back({"transport-analytic-rate", report.max_rel_error_vs_analytic < 0.02,
                        report.max_rel_error_vs_analytic, 0.02, "boundary integral vs 2 pi r r'"});
  rep.checks.push_back({"transport-quotient", report.max_rel_error_quotient < 0.02,
                        report.max_rel_error_quotient, 0.02, "volume quotient vs 2 pi r r'"});
  rep.checks.push_back({"transport-identity", report.max_identity_error < 0.02,
                        report.max_identity_error, 0.02, "quotient vs volume+boundary"});
  os << rep.to_text();
}

namespace {

struct BudgetTable {
  std::vector<std::string> cols;
  std::vector<std::vector<double>> rows;
  int col(const std::string& name) const {
    for (size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return (int)i;
    throw ParseError("budget.csv: missing column " + name);
  }
};

BudgetTable read_budget(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path.string());
  BudgetTable t;
  std::string line;
  if (!std::getline(f, line)) throw ParseError("budget.csv is empty");
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) t.cols.push_back(c);
  }
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string c;
    std::vector<double> row;
    while (std::getline(ss, c, ',')) row.push_back(std::strtod(c.c_str(), nullptr));
    if (row.size() != t.cols.size()) throw ParseError("budget.csv: ragged row");
    t.rows.push_back(std::move(row));
  }
  return t;
}

}  // namespace

VerificationReport verify_run_directory(const std::string& dir,
                                        const std::vector<std::string>& which) {
  auto enabled = [&](const std::string& name) {
    for (const auto& w : which)
      if (w == "all" || w == name) return true;
    return false;
  };
  const fs::path root(dir);
  VerificationReport rep;
  const auto meta = read_kv_file(root / "metadata.txt");

  if (meta.count("meta.kind") && meta.at("meta.kind") == "transport") {
    if (enabled("transport")) {
      // rebuilt from the echoed config alone
      std::ostringstream os;
      for (const auto& [k, v] : meta)
        if (k.rfind("config.", 0) == 0) os << k.substr(7) << " = " << v << "\n";
      const SimulationConfig cfg = SimulationConfig::parse(os.str());
      const ScenarioSetup setup = build_scenario(cfg);
      const TransportReport tr = check_transport(setup.transport);
      rep.checks.push_back({"transport-analytic-rate", tr.max_rel_error_vs_analytic < 0.02,
                            tr.max_rel_error_vs_analytic, 0.02, ""});
      rep.checks.push_back({"transport-quotient", tr.max_rel_error_quotient < 0.02,
                            tr.max_rel_error_quotient, 0.02, ""});
    }
    return rep;
  }

  const BudgetTable t = read_budget(root / "budget.csv");
  const int n = (int)t.rows.size();
  const double tol = std::strtod(meta.at("meta.comparison_tolerance").c_str(), nullptr);

  if (enabled("energy")) {
    // checksum
    double worst = 0.0;
    const int csum = t.col("row_sum");
    for (const auto& row : t.rows) {
      double s = 0.0;
      for (int i = 0; i < csum; ++i) s += row[i];
      const double scale = std::max({std::abs(s), std::abs(row[csum]), 1.0});
      worst = std::max(worst, std::abs(s - row[csum]) / scale);
    }
    rep.checks.push_back({"budget-checksum", worst <= 1e-12, worst, 1e-12, "row_sum column"});

    // row identity
    const int cg = t.col("comparison_gap"), cj = t.col("j_value"), cw = t.col("j_warm");
    double worst_id = 0.0;
    for (const auto& row : t.rows) {
      const double scale = std::max({std::abs(row[cj]), std::abs(row[cw]), 1.0});
      worst_id = std::max(worst_id, std::abs(row[cg] - (row[cj] - row[cw])) / scale);
    }
    rep.checks.push_back(
        {"budget-row-identity", worst_id <= 1e-12, worst_id, 1e-12, "gap = J - J_warm"});

    // comparison inequality
    double worst_gap = 0.0;
    for (const auto& row : t.rows) worst_gap = std::max(worst_gap, row[cg]);
    rep.checks.push_back({"comparison-inequality", worst_gap <= tol, worst_gap, tol, ""});

    // chain from the stored columns
    const double init = std::strtod(meta.at("meta.initial_elastic").c_str(), nullptr) +
                        std::strtod(meta.at("meta.initial_regularizer").c_str(), nullptr);
    const char* lhs_cols[] = {"solid_dissipation",  "solid_reg_rate",
                              "solid_kinetic_rate", "fluid_kinetic_rate",
                              "viscous_dissipation", "fluid_reg_dissipation",
                              "slip_dissipation"};
    const char* rhs_cols[] = {"window_rate_solid", "window_rate_fluid", "force_work_solid",
                              "force_work_fluid"};
    double acc_l = 0.0, acc_r = 0.0, min_slack = 0.0;
    bool chain_ok = true;
    for (int k = 0; k < n; ++k) {
      for (const char* c : lhs_cols) acc_l += t.rows[k][t.col(c)];
      for (const char* c : rhs_cols) acc_r += t.rows[k][t.col(c)];
      const double lhs = t.rows[k][t.col("elastic")] + t.rows[k][t.col("solid_regularizer")] +
                         acc_l;
      const double rhs = init + acc_r;
      const double slack = rhs - lhs + (k + 1) * tol;
      min_slack = std::min(min_slack, slack);
      if (slack < 0) chain_ok = false;
    }
    rep.checks.push_back({"energy-chain", chain_ok, min_slack, 0.0, "cumulative slack"});

    // dissipation entries nonnegative
    bool nonneg = true;
    for (const char* c : lhs_cols)
      for (const auto& row : t.rows)
        if (row[t.col(c)] < 0) nonneg = false;
    rep.checks.push_back({"dissipation-nonnegative", nonneg, nonneg ? 0.0 : -1.0, 0.0, ""});
  }

  if (enabled("coupling")) {
    double worst = 0.0;
    const int c = t.col("normal_residual");
    for (const auto& row : t.rows) worst = std::max(worst, row[c]);
    rep.checks.push_back({"coupling-normal-residual", worst < 1e-7, worst, 1e-7, ""});
  }

  if (enabled("flowmap")) {
    double lo = 1.0, hi = 1.0;
    for (const auto& row : t.rows) {
      lo = std::min(lo, row[t.col("flow_det_min")]);
      hi = std::max(hi, row[t.col("flow_det_max")]);
    }
    const bool ok = lo >= 0.9 && hi <= 1.1;
    rep.checks.push_back(
        {"flow-map-determinant", ok, std::max(hi - 1.0, 1.0 - lo), 0.1, ""});
  }

  if (enabled("geometry")) {
    double cn = 0.0, sep = std::numeric_limits<double>::max();
    for (const auto& row : t.rows) {
      cn = std::max(cn, std::abs(row[t.col("cn_residual")]));
      sep = std::min(sep, row[t.col("min_separation")]);
    }
    rep.checks.push_back({"ciarlet-necas", cn < 1e-6, cn, 1e-6, ""});
    rep.checks.push_back({"separation", sep > 0.0, sep, 0.0, ""});

    // zero-extension on every stored snapshot
    bool zero_ext = true;
    for (const auto& entry : fs::directory_iterator(root)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("snapshot_", 0) != 0) continue;
      const auto kv = read_kv_file(entry.path());
      if (!kv.count("labels") || !kv.count("vx") || !kv.count("vy")) continue;
      auto split = [](const std::string& s) {
        std::vector<double> v;
        std::stringstream ss(s);
        double d;
        while (ss >> d) v.push_back(d);
        return v;
      };
      const auto labels = split(kv.at("labels"));
      const auto vx = split(kv.at("vx"));
      const auto vy = split(kv.at("vy"));
      for (size_t c = 0; c < labels.size() && c < vx.size(); ++c)
        if ((int)labels[c] == 1 && (vx[c] != 0.0 || vy[c] != 0.0)) zero_ext = false;
    }
    rep.checks.push_back({"zero-extension", zero_ext, zero_ext ? 0.0 : 1.0, 0.0, ""});
  }

  return rep;
}

}  // namespace varislip
