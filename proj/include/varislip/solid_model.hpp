#pragma once

#include "varislip/solid_grid.hpp"

namespace varislip {

// Which elastic density to use.  StrainOnly is the stress-free surrogate for
// equilibrium tests: the strain term alone, no determinant barrier and no
// second-gradient term.
enum class EnergyModel { ModelCase, StrainOnly };

struct MaterialParams {
  // Acts on symmetric 2x2 strains in orthonormal (Mandel) components
  // (A11, A22, sqrt(2) A12); the identity tensor gives the Frobenius norm.
  Eigen::Matrix3d elastic_tensor = Eigen::Matrix3d::Identity();
  double det_exponent = 5.0;    // a  (barrier (det F)^-a)
  double grad2_exponent = 4.0;  // q  (term (1/q)|D^2 eta|^q)
  double rho_s = 1.0;
  EnergyModel model = EnergyModel::ModelCase;

  void validate() const;
};

struct RegularizerConfig {
  double kappa = 0.0;
  double a0 = 1.0;  // energy regularizer weight is kappa^a0
  int order = 3;    // derivative order of the seminorm
};

struct EnergyBreakdown {
  double strain_term = 0.0;
  double det_term = 0.0;
  double grad2_term = 0.0;
  double regularizer_term = 0.0;
  double total = 0.0;
};

// Nodal (trapezoidal) quadrature of the model densities; gradients are exact
// derivatives of these discrete sums (discretize-then-differentiate).
EnergyBreakdown eval_energy(const DeformationField& eta, const MaterialParams& mat,
                            const RegularizerConfig& reg);

Field2 energy_gradient(const DeformationField& eta, const MaterialParams& mat,
                       const RegularizerConfig& reg);

// R(eta, b) = sum w |(Db)^T F + F^T Db|^2 + kappa * seminorm(b)^2, F = grad eta_anchor.
double eval_dissipation(const DeformationField& eta_anchor, const Field2& rate,
                        const MaterialParams& mat, const RegularizerConfig& reg);

struct DissipationParts {
  double r_term = 0.0;
  double regularizer_term = 0.0;
  double total() const { return r_term + regularizer_term; }
};
DissipationParts eval_dissipation_parts(const DeformationField& eta_anchor, const Field2& rate,
                                        const MaterialParams& mat, const RegularizerConfig& reg);

Field2 dissipation_gradient(const DeformationField& eta_anchor, const Field2& rate,
                            const MaterialParams& mat, const RegularizerConfig& reg);

// DE(eta1)<eta1-eta0> - E(eta1) + E(eta0) + c1 * ||grad(eta1-eta0)||_L2^2.
// Nonnegative for c1 at or above the corpus-calibrated constant.
double check_nonconvexity_estimate(const DeformationField& eta1, const DeformationField& eta0,
                                   const MaterialParams& mat, double c1);

// Assembled quadratic forms (2n x 2n on flattened [x;y] dofs).
SpMat dissipation_form_matrix(const DeformationField& eta_anchor);       // b'Mb = sum w|S(b)|^2
SpMat highorder_form_matrix(const SolidGrid& g, const DiffOps& ops, int order);
SpMat mass_form_matrix(const SolidGrid& g);                              // b'Mb = sum w|b|^2
SpMat w12_form_matrix(const SolidGrid& g, const DiffOps& ops);           // mass + grad form

// sum w |grad(eta1-eta0)|^2, the norm appearing in the non-convexity estimate
double grad_l2_sq(const DeformationField& eta1, const DeformationField& eta0);

}  // namespace varislip
