#pragma once

#include <array>
#include <string_view>

namespace varislip {

// One row of the discrete energy ledger.  The seven *_dissipation / *_rate
// entries are the bracketed left-hand-side terms of the summed energy
// estimate, exactly as assembled in the step objective; window_* and force_*
// are its right-hand-side sources.  comparison_gap = J(eta_k, v_k) -
// J(eta_{k-1}, 0) and must stay at solver tolerance for accepted steps.
struct EnergyBudget {
  int step = 0;
  double time = 0.0;

  double elastic = 0.0;               // E(eta_k), model part
  double solid_regularizer = 0.0;     // kappa^a0 ||D^m eta_k||^2
  double solid_dissipation = 0.0;     // tau R(eta_{k-1}, b_k)
  double solid_reg_rate = 0.0;        // kappa tau ||D^m b_k||^2
  double solid_kinetic_rate = 0.0;    // rho_s tau/(8h) ||b_k||^2
  double fluid_kinetic_rate = 0.0;    // rho_f tau/(8h) ||v_k o Phi_{k-1}||^2
  double viscous_dissipation = 0.0;   // tau nu/2 ||eps v_k||^2
  double fluid_reg_dissipation = 0.0; // kappa tau/2 ||D^k0 v_k||^2
  double slip_dissipation = 0.0;      // a tau/2 ||b_k - v_k||^2 on the interface
  double window_rate_solid = 0.0;     // rho_s tau/h ||w_s||^2
  double window_rate_fluid = 0.0;     // rho_f tau/h ||w_f||^2
  double force_work_solid = 0.0;      // 2 rho_s tau h ||f_k o eta_{k-1}||^2
  double force_work_fluid = 0.0;      // 2 rho_f tau h ||f_k||^2 (sample quadrature)
  double comparison_gap = 0.0;
  double j_value = 0.0;
  double j_warm = 0.0;

  double lhs_bracket() const {
    return solid_dissipation + solid_reg_rate + solid_kinetic_rate + fluid_kinetic_rate +
           viscous_dissipation + fluid_reg_dissipation + slip_dissipation;
  }
  double rhs_sources() const {
    return window_rate_solid + window_rate_fluid + force_work_solid + force_work_fluid;
  }

  static constexpr int kFieldCount = 16;
  std::array<double, kFieldCount> numeric_fields() const {
    return {elastic,         solid_regularizer, solid_dissipation,    solid_reg_rate,
            solid_kinetic_rate, fluid_kinetic_rate, viscous_dissipation, fluid_reg_dissipation,
            slip_dissipation, window_rate_solid, window_rate_fluid,    force_work_solid,
            force_work_fluid, comparison_gap,    j_value,              j_warm};
  }
  static constexpr std::array<std::string_view, kFieldCount> field_names() {
    return {"elastic",          "solid_regularizer", "solid_dissipation",
            "solid_reg_rate",   "solid_kinetic_rate", "fluid_kinetic_rate",
            "viscous_dissipation", "fluid_reg_dissipation", "slip_dissipation",
            "window_rate_solid", "window_rate_fluid", "force_work_solid",
            "force_work_fluid", "comparison_gap",    "j_value",
            "j_warm"};
  }
};

}  // namespace varislip
