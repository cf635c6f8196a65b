#pragma once

#include <functional>
#include <string>
#include <vector>

#include "varislip/stepper.hpp"

namespace varislip {

struct CheckResult {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct VerificationReport {
  std::vector<CheckResult> checks;
  bool all_pass() const;
  std::string to_text() const;
};

// Independent re-assembly of one step's budget from recorded state, using the
// module-level forms only (never the stepper's accumulators).
EnergyBudget reassemble_budget(const Trajectory& traj, int k);

struct ChainReport {
  Vec lhs, rhs, slack;  // cumulative, per step
  double min_slack = 0.0;
  double tolerance_per_step = 0.0;
  bool pass = false;
};
// Summed discrete energy estimate: cumulative left side must not exceed the
// right side by more than k * tol at any k.
ChainReport check_energy_chain(const std::vector<EnergyBudget>& budgets, double tol_per_step);

struct CouplingReport {
  double normal_residual = 0.0;
  double tangential_jump_rms = 0.0;
  double tangential_jump_max = 0.0;
};
CouplingReport check_coupling(const Trajectory& traj, int k);

struct TransportScenario {
  GridSpec grid;
  double t0 = 0.0, t1 = 1.0;
  int n_times = 9;
  std::function<double(double, const Vec2&)> u;      // integrand
  std::function<double(double, const Vec2&)> du_dt;  // its time derivative
  std::function<std::vector<Vec2>(double)> interface_at;  // closed polygon (the solid)
  std::function<double(double, const Vec2&)> normal_speed;  // \tilde n_t on the interface
  std::function<double(double)> analytic_rate;  // d/dt of the integral, if known
};

struct TransportReport {
  double max_rel_error_vs_analytic = 0.0;  // boundary+volume side against analytic rate
  double max_rel_error_quotient = 0.0;     // time quotient of the integral against analytic
  double max_identity_error = 0.0;         // quotient vs volume+boundary sides
};
TransportReport check_transport(const TransportScenario& sc);

// Analytic deformation with two time derivatives, for strong-form residuals.
struct AnalyticDeformation {
  std::function<Vec2(double, const Vec2&)> eta;
  std::function<Vec2(double, const Vec2&)> dt_eta;
  std::function<Vec2(double, const Vec2&)> dtt_eta;
};

// Interior values of rho_s dtt eta - div dF e + div^2 dW e - div dF r - div dZ r,
// evaluated by nested central differences of the model densities on an
// n x n grid over [0,extent]^2.  Two node layers are lost at the boundary.
struct StrongFormField {
  int n = 0;
  double h = 0.0;
  std::vector<Vec2> values;  // row-major over the interior window
  int interior_lo = 0, interior_hi = 0;
  double max_norm() const;
};
StrongFormField strong_form_solid_residual(const AnalyticDeformation& def,
                                           const MaterialParams& mat, double t, int n_grid,
                                           double extent);

struct FlowMapReport {
  double min_det = 1.0, max_det = 1.0, max_lipschitz = 1.0;
};
FlowMapReport flow_map_report(const FlowMap& fm);

// The in-process referee: every enabled check evaluated on a trajectory.
VerificationReport run_verification(const Trajectory& traj,
                                    const std::vector<std::string>& which = {"all"});

double comparison_tolerance(const Trajectory& traj);  // 1e-9 * max(1, |J|)

}  // namespace varislip
