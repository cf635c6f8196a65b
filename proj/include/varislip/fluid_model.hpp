#pragma once

#include <memory>
#include <vector>

#include "varislip/geometry.hpp"

namespace varislip {

// Fixed background grid of the container; velocity and pressure multipliers
// both live at cell centers.
struct FluidGrid {
  GridSpec spec;

  double cell() const { return spec.cell_dx(); }
  static FluidGrid make(const GridSpec& spec);
};

struct FluidParams {
  double nu = 1.0;
  double rho_f = 1.0;
  double slip_coefficient = 0.0;  // a in the slip law
  double kappa = 0.0;
  int k0_order = 2;

  void validate() const;
};

// Cell-centered velocity, stored on the full grid and identically zero on
// Solid cells (zero-extension convention).
struct VelocityField {
  std::shared_ptr<const FluidGrid> grid;
  Field2 values;                // per cell
  std::vector<uint8_t> active;  // per cell, Fluid or Cut
  double time = 0.0;

  static VelocityField zero(std::shared_ptr<const FluidGrid> grid,
                            const CellClassification& cls);
  void enforce_zero_extension();
};

// Bilinear interpolation from cell centers, restricted to active cells with
// renormalized weights.
struct InterpStencil {
  int cell[4] = {-1, -1, -1, -1};
  double w[4] = {0, 0, 0, 0};
  int n = 0;

  Vec2 apply(const Field2& v) const {
    Vec2 r = Vec2::Zero();
    for (int k = 0; k < n; ++k) r += w[k] * v.at(cell[k]);
    return r;
  }
};
InterpStencil build_interp(const GridSpec& spec, const std::vector<uint8_t>& active,
                           const Vec2& p);

// Discrete operators assembled for one classification of the container.
// Derivatives are centered where both neighbors are active and one-sided
// at the cut/solid boundary; the divergence is the trace of that gradient,
// and the pressure gradient used downstream is its transpose, so the pair
// is adjoint by construction.
class FluidDiscretization {
 public:
  FluidDiscretization(std::shared_ptr<const FluidGrid> grid, const CellClassification& cls);

  const FluidGrid& grid() const { return *grid_; }
  const CellClassification& cls() const { return cls_; }
  int n_active() const { return (int)active_cells_.size(); }
  int n_scalar() const { return (int)scalar_cells_.size(); }
  const std::vector<int>& active_cells() const { return active_cells_; }
  const std::vector<int>& scalar_cells() const { return scalar_cells_; }
  const std::vector<int>& active_index() const { return active_index_; }  // -1 if inactive
  const std::vector<uint8_t>& active_mask() const { return active_mask_; }
  const Vec& cell_weight() const { return weight_; }  // fluid area per active cell

  const SpMat& gx() const { return gx_; }  // active scalar -> active scalar
  const SpMat& gy() const { return gy_; }
  const SpMat& div() const { return div_; }            // n_scalar x 2 n_active
  const SpMat& eps_form() const { return eps_form_; }  // v' M v = sum w |eps v|^2
  const SpMat& highorder_form(int k0) const;           // v' M v = sum w |D^k0 v|^2
  const Vec& scalar_weight() const { return scalar_weight_; }

  Vec restrict_active(const Field2& full) const;   // [vx; vy] on active cells
  Field2 extend_full(const Vec& active_v) const;   // zero on inactive

 private:
  std::shared_ptr<const FluidGrid> grid_;
  CellClassification cls_;
  std::vector<int> active_cells_, scalar_cells_, active_index_;
  std::vector<uint8_t> active_mask_;
  Vec weight_, scalar_weight_;
  SpMat gx_, gy_, div_, eps_form_;
  mutable SpMat highorder_form_;
  mutable int highorder_k0_ = -1;
};

// Cells with fluid fraction below this are merged into a neighbor for the
// divergence rows (sliver-cell guard).
constexpr double kMinScalarFraction = 0.05;

struct SymTensorField {
  Vec e11, e22, e12;  // full grid, zero on inactive
};

SymTensorField symmetric_gradient(const VelocityField& v, const CellClassification& cls);
Vec divergence(const VelocityField& v, const CellClassification& cls);  // full grid

// nu sum w|eps v|^2 + kappa sum w|D^k0 v|^2
double fluid_dissipation_form(const VelocityField& v, const CellClassification& cls,
                              const FluidParams& params);

// (a/2) sum weights |solid_rate - v|^2 at interface points
double slip_boundary_form(const VelocityField& v, const InterfaceGeometry& interface,
                          const std::vector<Vec2>& solid_rate_on_boundary,
                          const FluidParams& params);

// v minus the discrete gradient part: divergence below 1e-8 afterwards.
VelocityField project_divergence_free(const VelocityField& v, const CellClassification& cls);

}  // namespace varislip
