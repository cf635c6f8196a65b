#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "varislip/budget.hpp"
#include "varislip/fluid_model.hpp"
#include "varislip/solid_model.hpp"

namespace varislip {

// Spatially uniform, possibly time-modulated body force.
struct ForceDescriptor {
  Vec2 amp = Vec2::Zero();
  enum class Mode { Constant, Sine } mode = Mode::Constant;
  double omega = 0.0;

  Vec2 value(double t) const;
  Vec2 slot_average(double t0, double t1) const;
};

struct SolverConfig {
  // stationarity: converged when g' K^-1 g <= grad_tol^2 (1 + |J|), with K the
  // solid quadratic metric; scale-aware version of a projected-gradient norm
  double grad_tol = 1e-5;
  int max_outer = 4;              // penalty/multiplier rounds on the constraints
  int max_inner = 150;            // descent iterations per round
  double penalty_init = 1e6;      // augmented penalty, relative to the fluid block scale
  double penalty_growth = 100.0;
  double backtrack = 0.5;
  int max_backtracks = 48;
  double min_det = 1e-4;          // line-search feasibility guard on det(grad eta)
  double cn_tol = 1e-6;           // Ciarlet-Necas abort threshold
  double contact_fraction = 1.5;  // abort when min_separation < fraction * fluid cell
  double constraint_tol = 1e-8;
  int lbfgs_memory = 12;
  double v_regularization = 1e-9;
  bool warm_extrapolate = true;

  void validate() const;
};

struct StepConfig {
  double dt_tau = 1e-3;
  double h_delay = 1e-2;
  double kappa = 0.0;
  double a0_exponent = 1.0;
  double t_end = 0.0;
  int reg_order = 3;
  ForceDescriptor force;
  SolverConfig solver;

  void validate() const;  // h/tau and t_end/h must be integer multiples
  int slots_per_window() const;
  int total_steps() const;
  RegularizerConfig regularizer() const { return {kappa, a0_exponent, reg_order}; }
};

struct ModelBundle {
  MaterialParams mat;
  FluidParams fluid;
};

// Tracked material samples of the fluid flow map.  Jacobians are local
// least-squares fits of current positions against the window-start reference.
struct FlowMap {
  std::vector<Vec2> ref;   // reference positions (identity at window start)
  std::vector<Vec2> pos;   // current positions
  Vec weight;              // per-sample quadrature weight (fixed at run start)
  std::vector<std::vector<int>> neighbors;
  Vec det;        // fitted Jacobian determinant per sample
  Vec sigma_max;  // largest singular value per sample

  size_t size() const { return pos.size(); }
  double min_det() const { return det.size() ? det.minCoeff() : 1.0; }
  double max_det() const { return det.size() ? det.maxCoeff() : 1.0; }
  double max_lipschitz() const { return sigma_max.size() ? sigma_max.maxCoeff() : 1.0; }

  void reset_reference(double neighbor_radius);
  void refresh_jacobians();

  static FlowMap init(const FluidDiscretization& fd);
};

FlowMap update_flow_map(const FlowMap& fm, const VelocityField& v, double dt);

// Frozen history data for one h-window: slot j carries the rates of local
// step j of the previous window (w_f in the material sample frame).
struct DelayWindow {
  int slots = 0;
  double start_time = 0.0;
  std::vector<Field2> w_s;  // per slot, per solid node
  std::vector<Field2> w_f;  // per slot, per flow sample
};

DelayWindow initial_delay_window(const StepConfig& cfg, const Field2& eta_star,
                                 const VelocityField& v0, const FlowMap& fm);
DelayWindow advance_delay_window(const std::vector<Field2>& solved_rates,
                                 const std::vector<Field2>& solved_sample_velocities,
                                 double start_time, const StepConfig& cfg);

struct StepInputs {
  const DeformationField* eta_prev = nullptr;
  const InterfaceGeometry* interface = nullptr;  // of eta_prev
  const CellClassification* cls = nullptr;       // of eta_prev
  std::shared_ptr<const FluidGrid> fgrid;
  const Field2* w_s = nullptr;                 // slot field, per node
  const Field2* w_f = nullptr;                 // slot field, per sample
  const std::vector<Vec2>* sample_pos = nullptr;  // Phi_{k-1}(X), per sample
  const Vec* sample_weight = nullptr;
  Vec2 f_slot = Vec2::Zero();
  int step_index = 0;
  double time = 0.0;
};

// The per-step minimization of J_k: objective pieces, the linear constraint
// set (coupling / wall impermeability / divergence) and the fluid-block
// quadratic data the solver factorizes.
class StepProblem {
 public:
  StepProblem(const StepInputs& in, const StepConfig& cfg, const ModelBundle& models);

  // full incremental functional at the given pair (no solver regularization)
  double objective(const Field2& eta_pos, const Vec& v_active) const;
  Field2 objective_eta_gradient(const Field2& eta_pos, const Vec& v_active) const;
  Vec objective_v_gradient(const Field2& eta_pos, const Vec& v_active) const;

  // constraint residuals c(eta, v) = B v - g(eta), unscaled
  Vec constraint_residual(const Field2& eta_pos, const Vec& v_active) const;
  Vec coupling_rhs(const Field2& eta_pos) const;  // g entries of the coupling rows

  Field2 boundary_rate(const Field2& eta_pos) const;  // (eta - eta_prev)/tau at interface nodes
  Vec v_linear(const Field2& eta_pos) const;  // r(eta): objective = 1/2 v'Hv - r'v + s(eta)
  Vec sampled_interface_velocity_x(const Vec& v_active) const;
  Vec sampled_interface_velocity_y(const Vec& v_active) const;

  int n_velocity_dofs() const { return 2 * fd_->n_active(); }
  int n_coupling() const { return (int)interface_->size(); }
  int n_wall() const { return n_wall_; }
  int n_divergence() const { return fd_->n_scalar(); }
  int n_constraints() const { return n_coupling() + n_wall() + n_divergence(); }

  const FluidDiscretization& fluid() const { return *fd_; }
  const StepInputs& inputs() const { return in_; }
  const StepConfig& config() const { return cfg_; }
  const ModelBundle& models() const { return models_; }
  const SpMat& v_hessian() const { return h_; }         // without Tikhonov
  const SpMat& constraints() const { return b_; }       // unscaled rows
  const Vec& row_scale() const { return row_scale_; }
  const SpMat& sample_matrix() const { return sample_p_; }
  const SpMat& interface_matrix() const { return ifc_q_; }

  EnergyBudget budget(const Field2& eta_pos, const Vec& v_active) const;

 private:
  StepInputs in_;
  StepConfig cfg_;
  ModelBundle models_;
  std::shared_ptr<FluidDiscretization> fd_;
  const InterfaceGeometry* interface_;

  SpMat h_;         // quadratic v-block (eps, k0, sample inertia, slip)
  SpMat b_;         // constraint rows over v dofs
  Vec row_scale_;
  SpMat sample_p_;  // samples x active cells interpolation (scalar)
  SpMat ifc_q_;     // interface points x active cells interpolation (scalar)
  std::vector<int> wall_dofs_;
  int n_wall_ = 0;

  double solid_part(const Field2& eta_pos) const;
};

enum class StepStatus { Converged, MaxIterations, LineSearchFailed };

struct StepResult {
  Field2 eta_pos;
  Vec v_active;
  Vec pressure;         // per divergence row, weighted zero mean
  Vec lambda_coupling;  // unscaled coupling multipliers
  Vec sample_vx, sample_vy;  // v at the prestep sample positions
  StepStatus status = StepStatus::Converged;
  int inner_iterations = 0;
  int outer_iterations = 0;
  double j_value = 0.0, j_warm = 0.0, comparison_gap = 0.0;
  double grad_norm = 0.0;
  double max_div_residual = 0.0, max_coupling_residual = 0.0, max_wall_residual = 0.0;
};

StepResult solve_step(const StepProblem& problem, const SolverConfig& solver,
                      const Field2* eta_hint = nullptr);

struct InitialData {
  DeformationField eta0;
  Field2 eta_star;
  VelocityField v0;
};

enum class AbortReason { None, ContactImminent, CiarletNecas, SelfIntersection, StepFailure };

struct TrajectoryRecord {
  int step = 0;
  double time = 0.0;
  Field2 eta;
  Field2 v_full;      // zero-extended velocity on the step's active set
  Vec pressure_full;  // zero-extended
  CellClassification cls_used;
  InterfaceGeometry interface_used;
  InterfaceGeometry interface_new;
  std::vector<Vec2> sample_pos;  // prestep positions Phi_{k-1}(X)
  int window_index = 0, slot = 0;
  Vec2 f_slot = Vec2::Zero();
  EnergyBudget budget;
  double min_sep = 0.0, cn_residual = 0.0;
  double flow_det_min = 1.0, flow_det_max = 1.0, flow_lipschitz = 1.0;
  double max_div_residual = 0.0, max_coupling_residual = 0.0;
  double coupling_defect_at_new = 0.0;  // linearization defect re-evaluated at eta_k
  double tangential_jump_rms = 0.0;
  StepStatus status = StepStatus::Converged;
  int iterations = 0;
};

struct Trajectory {
  std::shared_ptr<const SolidGrid> sgrid;
  std::shared_ptr<const DiffOps> ops;
  std::shared_ptr<const FluidGrid> fgrid;
  StepConfig cfg;
  ModelBundle models;
  std::vector<TrajectoryRecord> records;  // record 0 = initial state
  std::vector<DelayWindow> windows;
  Vec sample_weight;
  AbortReason abort = AbortReason::None;
  std::string abort_message;

  int steps_completed() const { return (int)records.size() - 1; }

  // tau-interpolations of eta
  Field2 eta_const_right(double t) const;
  Field2 eta_const_left(double t) const;
  Field2 eta_affine(double t) const;
};

Trajectory run_simulation(const StepConfig& cfg, const ModelBundle& models,
                          const InitialData& init,
                          const std::function<void(const TrajectoryRecord&)>& on_step = {});

}  // namespace varislip
