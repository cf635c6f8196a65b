#include "varislip/fluid_model.hpp"

#include <Eigen/SparseCholesky>
#include <cmath>

namespace varislip {

FluidGrid FluidGrid::make(const GridSpec& spec) {
  if (spec.mx < 2 || spec.my < 2) throw ValidationError("FluidGrid: needs at least 2x2 cells");
  if (std::abs(spec.cell_dx() - spec.cell_dy()) > 1e-12 * spec.cell_dx())
    throw ValidationError("FluidGrid: cell size must be uniform");
  return FluidGrid{spec};
}

void FluidParams::validate() const {
  if (nu <= 0) throw ValidationError("FluidParams: nu must be positive");
  if (rho_f <= 0) throw ValidationError("FluidParams: rho_f must be positive");
  if (slip_coefficient < 0 || kappa < 0)
    throw ValidationError("FluidParams: slip_coefficient, kappa must be nonnegative");
  if (k0_order < 1) throw ValidationError("FluidParams: k0_order must be >= 1");
}

VelocityField VelocityField::zero(std::shared_ptr<const FluidGrid> grid,
                                  const CellClassification& cls) {
  VelocityField v;
  v.grid = std::move(grid);
  v.values = Field2(v.grid->spec.cell_count());
  v.active.resize(cls.labels.size());
  for (size_t c = 0; c < cls.labels.size(); ++c) v.active[c] = cls.is_active((int)c) ? 1 : 0;
  return v;
}

void VelocityField::enforce_zero_extension() {
  for (size_t c = 0; c < active.size(); ++c)
    if (!active[c]) values.set((Eigen::Index)c, Vec2::Zero());
}

InterpStencil build_interp(const GridSpec& spec, const std::vector<uint8_t>& active,
                           const Vec2& p) {
  const double dx = spec.cell_dx(), dy = spec.cell_dy();
  // cell-center coordinates: the 4 surrounding centers of p
  double fx = (p.x() - spec.x0) / dx - 0.5;
  double fy = (p.y() - spec.y0) / dy - 0.5;
  int i0 = (int)std::floor(fx);
  int j0 = (int)std::floor(fy);
  double ax = fx - i0, ay = fy - j0;
  i0 = std::clamp(i0, 0, spec.mx - 2);
  j0 = std::clamp(j0, 0, spec.my - 2);
  ax = std::clamp(fx - i0, 0.0, 1.0);
  ay = std::clamp(fy - j0, 0.0, 1.0);

  const int cells[4] = {spec.cell_index(i0, j0), spec.cell_index(i0 + 1, j0),
                        spec.cell_index(i0, j0 + 1), spec.cell_index(i0 + 1, j0 + 1)};
  const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};

  InterpStencil st;
  double wsum = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (!active[cells[k]] || wts[k] == 0.0) continue;
    st.cell[st.n] = cells[k];
    st.w[st.n] = wts[k];
    wsum += wts[k];
    ++st.n;
  }
  if (st.n == 0 || wsum <= 0.0)
    throw InterpolationOutOfDomain("interpolation point has no active neighbor cells");
  for (int k = 0; k < st.n; ++k) st.w[k] /= wsum;
  return st;
}

namespace {

// 1D derivative row on the active line through cell c in direction (di,dj):
// centered if both neighbors are active, one-sided otherwise, empty if alone.
struct DRow {
  int idx[2];
  double c[2];
  int n = 0;
};

DRow d_row(const GridSpec& spec, const std::vector<uint8_t>& active, int i, int j, int di,
           int dj, double h) {
  DRow r;
  const bool has_m = (i - di >= 0 && j - dj >= 0 && i - di < spec.mx && j - dj < spec.my) &&
                     active[spec.cell_index(i - di, j - dj)];
  const bool has_p = (i + di < spec.mx && j + dj < spec.my && i + di >= 0 && j + dj >= 0) &&
                     active[spec.cell_index(i + di, j + dj)];
  const int self = spec.cell_index(i, j);
  if (has_m && has_p) {
    r.idx[0] = spec.cell_index(i - di, j - dj);
    r.c[0] = -0.5 / h;
    r.idx[1] = spec.cell_index(i + di, j + dj);
    r.c[1] = 0.5 / h;
    r.n = 2;
  } else if (has_p) {
    r.idx[0] = self;
    r.c[0] = -1.0 / h;
    r.idx[1] = spec.cell_index(i + di, j + dj);
    r.c[1] = 1.0 / h;
    r.n = 2;
  } else if (has_m) {
    r.idx[0] = spec.cell_index(i - di, j - dj);
    r.c[0] = -1.0 / h;
    r.idx[1] = self;
    r.c[1] = 1.0 / h;
    r.n = 2;
  }
  return r;
}

// Divergence stencil: face-average fluxes.  A face on the container wall
// carries zero flux (impermeability), which keeps the transposed operator (the
// pressure gradient) consistent up to the wall; faces lost to the solid keep
// the one-sided derivative, since the moving interface does carry flux.
DRow div_row(const GridSpec& spec, const std::vector<uint8_t>& active, int i, int j, int di,
             int dj, double h) {
  const bool wall_m = (i - di < 0 || j - dj < 0);
  const bool wall_p = (i + di >= spec.mx || j + dj >= spec.my);
  const bool has_m = !wall_m && active[spec.cell_index(i - di, j - dj)];
  const bool has_p = !wall_p && active[spec.cell_index(i + di, j + dj)];
  const int self = spec.cell_index(i, j);

  DRow r;
  if (has_m && has_p) {
    r.idx[0] = spec.cell_index(i - di, j - dj);
    r.c[0] = -0.5 / h;
    r.idx[1] = spec.cell_index(i + di, j + dj);
    r.c[1] = 0.5 / h;
    r.n = 2;
  } else if (wall_m && has_p) {
    r.idx[0] = self;
    r.c[0] = 0.5 / h;
    r.idx[1] = spec.cell_index(i + di, j + dj);
    r.c[1] = 0.5 / h;
    r.n = 2;
  } else if (wall_p && has_m) {
    r.idx[0] = spec.cell_index(i - di, j - dj);
    r.c[0] = -0.5 / h;
    r.idx[1] = self;
    r.c[1] = -0.5 / h;
    r.n = 2;
  } else {
    return d_row(spec, active, i, j, di, dj, h);  // interface-truncated line
  }
  return r;
}

}  // namespace

FluidDiscretization::FluidDiscretization(std::shared_ptr<const FluidGrid> grid,
                                         const CellClassification& cls)
    : grid_(std::move(grid)), cls_(cls) {
  const GridSpec& spec = grid_->spec;
  const int nc = spec.cell_count();
  active_index_.assign(nc, -1);
  active_mask_.assign(nc, 0);
  for (int c = 0; c < nc; ++c)
    if (cls_.is_active(c)) {
      active_index_[c] = (int)active_cells_.size();
      active_cells_.push_back(c);
      active_mask_[c] = 1;
    }
  const int na = n_active();
  if (na == 0) throw SingularSystem("FluidDiscretization: active region is empty");

  weight_ = Vec::Zero(na);
  const double cell_area = spec.cell_dx() * spec.cell_dy();
  for (int a = 0; a < na; ++a) weight_[a] = cell_area * cls_.fluid_fraction[active_cells_[a]];

  // scalar (divergence-row) cells: active cells above the sliver threshold;
  // slivers fold into the largest active neighbor's row
  std::vector<int> scalar_of_active(na, -1);
  for (int a = 0; a < na; ++a) {
    const int c = active_cells_[a];
    if (cls_.fluid_fraction[c] >= kMinScalarFraction) {
      scalar_of_active[a] = (int)scalar_cells_.size();
      scalar_cells_.push_back(c);
    }
  }
  std::vector<int> row_of_active(na, -1);
  for (int a = 0; a < na; ++a) {
    if (scalar_of_active[a] >= 0) {
      row_of_active[a] = scalar_of_active[a];
      continue;
    }
    const int c = active_cells_[a];
    const int i = c / spec.my, j = c % spec.my;
    int best = -1;
    double best_frac = -1.0;
    const int off[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (auto& o : off) {
      const int ii = i + o[0], jj = j + o[1];
      if (ii < 0 || jj < 0 || ii >= spec.mx || jj >= spec.my) continue;
      const int cc = spec.cell_index(ii, jj);
      const int aa = active_index_[cc];
      if (aa >= 0 && scalar_of_active[aa] >= 0 && cls_.fluid_fraction[cc] > best_frac) {
        best_frac = cls_.fluid_fraction[cc];
        best = scalar_of_active[aa];
      }
    }
    row_of_active[a] = best;  // -1: isolated sliver, no divergence row
  }
  scalar_weight_ = Vec::Zero(n_scalar());
  for (int a = 0; a < na; ++a)
    if (row_of_active[a] >= 0) scalar_weight_[row_of_active[a]] += weight_[a];

  // gradient operators and the divergence matrix
  std::vector<Triplet> tx, ty, td;
  for (int a = 0; a < na; ++a) {
    const int c = active_cells_[a];
    const int i = c / spec.my, j = c % spec.my;
    const int row = row_of_active[a];
    const DRow rx = d_row(spec, active_mask_, i, j, 1, 0, spec.cell_dx());
    for (int k = 0; k < rx.n; ++k) tx.emplace_back(a, active_index_[rx.idx[k]], rx.c[k]);
    const DRow ry = d_row(spec, active_mask_, i, j, 0, 1, spec.cell_dy());
    for (int k = 0; k < ry.n; ++k) ty.emplace_back(a, active_index_[ry.idx[k]], ry.c[k]);
    if (row >= 0) {
      const DRow dx2 = div_row(spec, active_mask_, i, j, 1, 0, spec.cell_dx());
      for (int k = 0; k < dx2.n; ++k)
        td.emplace_back(row, active_index_[dx2.idx[k]], dx2.c[k]);
      const DRow dy2 = div_row(spec, active_mask_, i, j, 0, 1, spec.cell_dy());
      for (int k = 0; k < dy2.n; ++k)
        td.emplace_back(row, na + active_index_[dy2.idx[k]], dy2.c[k]);
    }
  }
  gx_.resize(na, na);
  gx_.setFromTriplets(tx.begin(), tx.end());
  gy_.resize(na, na);
  gy_.setFromTriplets(ty.begin(), ty.end());
  div_.resize(n_scalar(), 2 * na);
  div_.setFromTriplets(td.begin(), td.end());
  div_.makeCompressed();

  // eps form: v'Mv = sum w (e11^2 + e22^2 + 2 e12^2) over active cells
  {
    SpMat dw = SpMat(weight_.asDiagonal());
    SpMat e12x = 0.5 * gy_;  // e12 = (dy vx + dx vy)/2
    SpMat e12y = 0.5 * gx_;
    SpMat m11 = gx_.transpose() * dw * gx_;          // vx-vx from e11
    SpMat m22 = gy_.transpose() * dw * gy_;          // vy-vy from e22
    SpMat mxx = 2.0 * e12x.transpose() * dw * e12x;  // vx-vx from e12
    SpMat myy = 2.0 * e12y.transpose() * dw * e12y;
    SpMat mxy = 2.0 * e12x.transpose() * dw * e12y;
    std::vector<Triplet> tm;
    auto add = [&](int r0, int c0, const SpMat& m) {
      for (int k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it)
          tm.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
    };
    add(0, 0, m11);
    add(0, 0, mxx);
    add(na, na, m22);
    add(na, na, myy);
    add(0, na, mxy);
    add(na, 0, SpMat(mxy.transpose()));
    eps_form_.resize(2 * na, 2 * na);
    eps_form_.setFromTriplets(tm.begin(), tm.end());
    eps_form_.makeCompressed();
  }
}

const SpMat& FluidDiscretization::highorder_form(int k0) const {
  if (highorder_k0_ == k0) return highorder_form_;
  const int na = n_active();
  SpMat dw = SpMat(weight_.asDiagonal());
  const GridSpec& spec = grid_->spec;

  // compact second differences where the line allows them; zero contribution
  // on truncated lines (the seminorm degrades gracefully at the cut boundary)
  auto second_diff = [&](int di, int dj) {
    std::vector<Triplet> trip;
    const double h2 = (di ? spec.cell_dx() : spec.cell_dy());
    const double ih2 = 1.0 / (h2 * h2);
    for (int a = 0; a < na; ++a) {
      const int c = active_cells_[a];
      const int i = c / spec.my, j = c % spec.my;
      auto idx = [&](int ii, int jj) -> int {
        if (ii < 0 || jj < 0 || ii >= spec.mx || jj >= spec.my) return -1;
        const int cc = spec.cell_index(ii, jj);
        return active_mask_[cc] ? active_index_[cc] : -1;
      };
      const int m = idx(i - di, j - dj), p = idx(i + di, j + dj);
      if (m >= 0 && p >= 0) {
        trip.emplace_back(a, m, ih2);
        trip.emplace_back(a, a, -2.0 * ih2);
        trip.emplace_back(a, p, ih2);
      } else if (p >= 0 && idx(i + 2 * di, j + 2 * dj) >= 0) {
        trip.emplace_back(a, a, ih2);
        trip.emplace_back(a, p, -2.0 * ih2);
        trip.emplace_back(a, idx(i + 2 * di, j + 2 * dj), ih2);
      } else if (m >= 0 && idx(i - 2 * di, j - 2 * dj) >= 0) {
        trip.emplace_back(a, a, ih2);
        trip.emplace_back(a, m, -2.0 * ih2);
        trip.emplace_back(a, idx(i - 2 * di, j - 2 * dj), ih2);
      }
    }
    SpMat op(na, na);
    op.setFromTriplets(trip.begin(), trip.end());
    return op;
  };

  std::vector<SpMat> fam;
  std::vector<double> mult;
  auto binom = [](int m, int p) {
    double r = 1;
    for (int i = 0; i < p; ++i) r = r * (m - i) / (i + 1);
    return r;
  };
  if (k0 == 2) {
    fam.push_back(second_diff(1, 0));
    mult.push_back(1.0);
    fam.push_back((gx_ * gy_).pruned());
    mult.push_back(2.0);
    fam.push_back(second_diff(0, 1));
    mult.push_back(1.0);
  } else {
    for (int p = 0; p <= k0; ++p) {
      SpMat op(na, na);
      op.setIdentity();
      for (int k = 0; k < p; ++k) op = (gx_ * op).pruned();
      for (int k = 0; k < k0 - p; ++k) op = (gy_ * op).pruned();
      fam.push_back(op);
      mult.push_back(binom(k0, p));
    }
  }
  SpMat acc(na, na);
  for (size_t p = 0; p < fam.size(); ++p)
    acc = (acc + SpMat(mult[p] * fam[p].transpose() * dw * fam[p])).pruned();

  std::vector<Triplet> tm;
  for (int k = 0; k < acc.outerSize(); ++k)
    for (SpMat::InnerIterator it(acc, k); it; ++it) {
      tm.emplace_back(it.row(), it.col(), it.value());
      tm.emplace_back(na + it.row(), na + it.col(), it.value());
    }
  highorder_form_.resize(2 * na, 2 * na);
  highorder_form_.setFromTriplets(tm.begin(), tm.end());
  highorder_form_.makeCompressed();
  highorder_k0_ = k0;
  return highorder_form_;
}

Vec FluidDiscretization::restrict_active(const Field2& full) const {
  const int na = n_active();
  Vec v(2 * na);
  for (int a = 0; a < na; ++a) {
    v[a] = full.x[active_cells_[a]];
    v[na + a] = full.y[active_cells_[a]];
  }
  return v;
}

Field2 FluidDiscretization::extend_full(const Vec& active_v) const {
  const int na = n_active();
  Field2 full(grid_->spec.cell_count());
  for (int a = 0; a < na; ++a) {
    full.x[active_cells_[a]] = active_v[a];
    full.y[active_cells_[a]] = active_v[na + a];
  }
  return full;
}

SymTensorField symmetric_gradient(const VelocityField& v, const CellClassification& cls) {
  FluidDiscretization fd(v.grid, cls);
  const Vec va = fd.restrict_active(v.values);
  const int na = fd.n_active();
  const Vec vx = va.head(na), vy = va.tail(na);
  const Vec e11 = fd.gx() * vx;
  const Vec e22 = fd.gy() * vy;
  const Vec e12 = 0.5 * ((fd.gy() * vx).eval() + (fd.gx() * vy).eval());

  SymTensorField out;
  const int nc = v.grid->spec.cell_count();
  out.e11 = Vec::Zero(nc);
  out.e22 = Vec::Zero(nc);
  out.e12 = Vec::Zero(nc);
  for (int a = 0; a < na; ++a) {
    const int c = fd.active_cells()[a];
    out.e11[c] = e11[a];
    out.e22[c] = e22[a];
    out.e12[c] = e12[a];
  }
  return out;
}

Vec divergence(const VelocityField& v, const CellClassification& cls) {
  FluidDiscretization fd(v.grid, cls);
  const Vec va = fd.restrict_active(v.values);
  const Vec d = fd.div() * va;
  Vec full = Vec::Zero(v.grid->spec.cell_count());
  for (int r = 0; r < fd.n_scalar(); ++r) full[fd.scalar_cells()[r]] = d[r];
  return full;
}

double fluid_dissipation_form(const VelocityField& v, const CellClassification& cls,
                              const FluidParams& params) {
  FluidDiscretization fd(v.grid, cls);
  const Vec va = fd.restrict_active(v.values);
  double out = params.nu * va.dot(fd.eps_form() * va);
  if (params.kappa > 0) out += params.kappa * va.dot(fd.highorder_form(params.k0_order) * va);
  return out;
}

double slip_boundary_form(const VelocityField& v, const InterfaceGeometry& interface,
                          const std::vector<Vec2>& solid_rate_on_boundary,
                          const FluidParams& params) {
  if (solid_rate_on_boundary.size() != interface.size())
    throw ValidationError("slip_boundary_form: rate count does not match interface");
  if (params.slip_coefficient == 0.0) return 0.0;
  double out = 0.0;
  for (size_t k = 0; k < interface.size(); ++k) {
    const InterpStencil st = build_interp(v.grid->spec, v.active, interface.points[k]);
    const Vec2 jump = solid_rate_on_boundary[k] - st.apply(v.values);
    out += interface.weights[k] * jump.squaredNorm();
  }
  return 0.5 * params.slip_coefficient * out;
}

VelocityField project_divergence_free(const VelocityField& v, const CellClassification& cls) {
  FluidDiscretization fd(v.grid, cls);
  const int na = fd.n_active();
  const Vec va = fd.restrict_active(v.values);

  // Weighted least-squares multiplier: (D W^-1 D') lam = D v, v' = v - W^-1 D' lam.
  // The system is consistent (rhs is in the range), solved by a regularized
  // Cholesky with iterative refinement, which keeps lam in the range space.
  const SpMat& d = fd.div();
  Vec winv = Vec::Ones(2 * na);
  for (int a = 0; a < na; ++a) {
    winv[a] = 1.0 / fd.cell_weight()[a];
    winv[na + a] = winv[a];
  }
  SpMat dwinv = d * SpMat(winv.asDiagonal());
  SpMat lap = (dwinv * SpMat(d.transpose())).pruned();

  double diag_scale = 0.0;
  for (int i = 0; i < lap.rows(); ++i) diag_scale += lap.coeff(i, i);
  diag_scale = (lap.rows() > 0) ? diag_scale / lap.rows() : 1.0;
  const double eps = 1e-12 * diag_scale;
  SpMat reg = lap;
  for (int i = 0; i < reg.rows(); ++i) reg.coeffRef(i, i) += eps;

  Eigen::SimplicialLDLT<SpMat> solver(reg);
  if (solver.info() != Eigen::Success)
    throw SingularSystem("project_divergence_free: factorization failed");

  const Vec rhs = d * va;
  Vec lam = solver.solve(rhs);
  for (int it = 0; it < 3; ++it) {
    const Vec resid = rhs - lap * lam;
    lam += solver.solve(resid);
  }

  const Vec corrected = va - winv.cwiseProduct(d.transpose() * lam);
  VelocityField out = v;
  out.values = fd.extend_full(corrected);
  out.enforce_zero_extension();
  return out;
}

}  // namespace varislip
