#include "varislip/stepper.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <chrono>
#include <cstdlib>
#include <deque>
#include <limits>
#include <map>

namespace varislip {

Vec2 ForceDescriptor::value(double t) const {
  switch (mode) {
    case Mode::Sine:
      return amp * std::sin(omega * t);
    case Mode::Constant:
    default:
      return amp;
  }
}

Vec2 ForceDescriptor::slot_average(double t0, double t1) const {
  if (t1 <= t0) return value(t0);
  switch (mode) {
    case Mode::Sine: {
      if (omega == 0.0) return Vec2::Zero();
      const double s = (std::cos(omega * t0) - std::cos(omega * t1)) / (omega * (t1 - t0));
      return amp * s;
    }
    case Mode::Constant:
    default:
      return amp;
  }
}

void SolverConfig::validate() const {
  if (grad_tol <= 0 || constraint_tol <= 0) throw ValidationError("solver tolerances must be positive");
  if (penalty_init <= 0 || penalty_growth <= 1.0)
    throw ValidationError("solver penalty: initial value positive, growth factor > 1");
  if (backtrack <= 0 || backtrack >= 1) throw ValidationError("solver backtrack factor in (0,1)");
  if (min_det <= 0) throw ValidationError("solver min_det guard must be positive");
  if (max_outer < 1 || max_inner < 1) throw ValidationError("solver iteration limits must be >= 1");
}

void StepConfig::validate() const {
  if (dt_tau <= 0) throw ValidationError("dt_tau must be positive");
  if (h_delay <= 0) throw ValidationError("h_delay must be positive");
  const double ratio = h_delay / dt_tau;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
    throw ValidationError("h_delay must be an integer multiple of dt_tau");
  if (t_end > 0) {
    const double wr = t_end / h_delay;
    if (std::abs(wr - std::round(wr)) > 1e-9 * std::max(1.0, wr))
      throw ValidationError("t_end must be an integer multiple of h_delay");
  }
  if (kappa < 0 || a0_exponent <= 0) throw ValidationError("kappa >= 0 and a0_exponent > 0 required");
  if (reg_order < 2) throw ValidationError("reg_order must be >= 2");
  solver.validate();
}

int StepConfig::slots_per_window() const { return (int)std::llround(h_delay / dt_tau); }
int StepConfig::total_steps() const { return (int)std::llround(t_end / dt_tau); }

// ---------------------------------------------------------------------------
// flow map

namespace {

Vec2 interp_velocity(const GridSpec& spec, const std::vector<uint8_t>& active, const Field2& v,
                     const Vec2& p) {
  try {
    return build_interp(spec, active, p).apply(v);
  } catch (const InterpolationOutOfDomain&) {
    // fall back to the nearest active cell unless the point is truly gone
    double best = std::numeric_limits<double>::max();
    int best_c = -1;
    for (int i = 0; i < spec.mx; ++i)
      for (int j = 0; j < spec.my; ++j) {
        const int c = spec.cell_index(i, j);
        if (!active[c]) continue;
        const double d = (spec.cell_center(i, j) - p).norm();
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
    if (best_c < 0 || best > 1.5 * spec.cell_dx())
      throw SampleEscaped("flow-map sample left the fluid region by more than one cell");
    return v.at(best_c);
  }
}

std::vector<std::vector<int>> build_neighbors(const std::vector<Vec2>& pts, double radius) {
  // uniform bucket hash
  const double cell = radius;
  Vec2 lo(std::numeric_limits<double>::max(), std::numeric_limits<double>::max());
  for (const Vec2& p : pts) lo = lo.cwiseMin(p);
  auto key = [&](const Vec2& p) {
    return std::pair<long, long>((long)std::floor((p.x() - lo.x()) / cell),
                                 (long)std::floor((p.y() - lo.y()) / cell));
  };
  std::map<std::pair<long, long>, std::vector<int>> buckets;
  for (size_t s = 0; s < pts.size(); ++s) buckets[key(pts[s])].push_back((int)s);

  std::vector<std::vector<int>> nb(pts.size());
  const double r2 = radius * radius;
  for (size_t s = 0; s < pts.size(); ++s) {
    const auto [ki, kj] = key(pts[s]);
    for (long di = -1; di <= 1; ++di)
      for (long dj = -1; dj <= 1; ++dj) {
        auto it = buckets.find({ki + di, kj + dj});
        if (it == buckets.end()) continue;
        for (int o : it->second)
          if (o != (int)s && (pts[o] - pts[s]).squaredNorm() <= r2) nb[s].push_back(o);
      }
    std::sort(nb[s].begin(), nb[s].end());
  }
  return nb;
}

}  // namespace

FlowMap FlowMap::init(const FluidDiscretization& fd) {
  FlowMap fm;
  const GridSpec& spec = fd.grid().spec;
  fm.pos.reserve(fd.n_active());
  for (int c : fd.active_cells()) fm.pos.push_back(spec.cell_center(c / spec.my, c % spec.my));
  fm.ref = fm.pos;
  fm.weight = fd.cell_weight();
  fm.neighbors = build_neighbors(fm.ref, 1.6 * spec.cell_dx());
  fm.det = Vec::Ones((Eigen::Index)fm.pos.size());
  fm.sigma_max = Vec::Ones((Eigen::Index)fm.pos.size());
  return fm;
}

void FlowMap::reset_reference(double neighbor_radius) {
  ref = pos;
  neighbors = build_neighbors(ref, neighbor_radius);
  det.setOnes();
  sigma_max.setOnes();
}

void FlowMap::refresh_jacobians() {
  for (size_t s = 0; s < pos.size(); ++s) {
    Mat2 xx = Mat2::Zero(), px = Mat2::Zero();
    for (int o : neighbors[s]) {
      const Vec2 dx = ref[o] - ref[s];
      const Vec2 dp = pos[o] - pos[s];
      xx += dx * dx.transpose();
      px += dp * dx.transpose();
    }
    Mat2 a = Mat2::Identity();
    if (neighbors[s].size() >= 2 && std::abs(xx.determinant()) > 1e-300)
      a = px * xx.inverse();
    det[s] = a.determinant();
    Eigen::SelfAdjointEigenSolver<Mat2> es(a.transpose() * a);
    sigma_max[s] = std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  }
}

FlowMap update_flow_map(const FlowMap& fm, const VelocityField& v, double dt) {
  FlowMap out = fm;
  const GridSpec& spec = v.grid->spec;
  const double cell = spec.cell_dx();
  for (size_t s = 0; s < out.pos.size(); ++s) {
    out.pos[s] += dt * interp_velocity(spec, v.active, v.values, fm.pos[s]);
    const Vec2& p = out.pos[s];
    if (p.x() < spec.x0 - cell || p.x() > spec.x0 + spec.lx + cell || p.y() < spec.y0 - cell ||
        p.y() > spec.y0 + spec.ly + cell)
      throw SampleEscaped("flow-map sample left the container by more than one cell");
  }
  out.refresh_jacobians();
  return out;
}

// ---------------------------------------------------------------------------
// delay windows

DelayWindow initial_delay_window(const StepConfig& cfg, const Field2& eta_star,
                                 const VelocityField& v0, const FlowMap& fm) {
  DelayWindow w;
  w.slots = cfg.slots_per_window();
  w.start_time = 0.0;
  Field2 wf((Eigen::Index)fm.pos.size());
  for (size_t s = 0; s < fm.pos.size(); ++s)
    wf.set((Eigen::Index)s, interp_velocity(v0.grid->spec, v0.active, v0.values, fm.pos[s]));
  w.w_s.assign(w.slots, eta_star);
  w.w_f.assign(w.slots, wf);
  return w;
}

DelayWindow advance_delay_window(const std::vector<Field2>& solved_rates,
                                 const std::vector<Field2>& solved_sample_velocities,
                                 double start_time, const StepConfig& cfg) {
  if ((int)solved_rates.size() != cfg.slots_per_window() ||
      (int)solved_sample_velocities.size() != cfg.slots_per_window())
    throw ValidationError("advance_delay_window: previous window is incomplete");
  DelayWindow w;
  w.slots = cfg.slots_per_window();
  w.start_time = start_time;
  w.w_s = solved_rates;
  w.w_f = solved_sample_velocities;
  return w;
}

// ---------------------------------------------------------------------------
// step problem

namespace {

SpMat block_diag2(const SpMat& m) {
  const int n = m.rows();
  std::vector<Triplet> trip;
  trip.reserve(2 * m.nonZeros());
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) {
      trip.emplace_back(it.row(), it.col(), it.value());
      trip.emplace_back(n + it.row(), n + it.col(), it.value());
    }
  SpMat out(2 * n, 2 * n);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

SpMat interp_matrix(const GridSpec& spec, const std::vector<uint8_t>& active,
                    const std::vector<int>& active_index, int n_active,
                    const std::vector<Vec2>& pts) {
  std::vector<Triplet> trip;
  for (size_t k = 0; k < pts.size(); ++k) {
    const InterpStencil st = build_interp(spec, active, pts[k]);
    for (int q = 0; q < st.n; ++q) trip.emplace_back((int)k, active_index[st.cell[q]], st.w[q]);
  }
  SpMat m((int)pts.size(), n_active);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

}  // namespace

StepProblem::StepProblem(const StepInputs& in, const StepConfig& cfg, const ModelBundle& models)
    : in_(in), cfg_(cfg), models_(models), interface_(in.interface) {
  fd_ = std::make_shared<FluidDiscretization>(in.fgrid, *in.cls);
  const int na = fd_->n_active();
  const GridSpec& spec = in.fgrid->spec;
  const double tau = cfg_.dt_tau, h = cfg_.h_delay;
  const double nu = models_.fluid.nu, a_slip = models_.fluid.slip_coefficient;
  const double rho_f = models_.fluid.rho_f;

  // interpolation operators (nearest-cell fallback is only for flow samples;
  // interface points must interpolate properly or the step cannot be posed)
  std::vector<Vec2> sample_pts = *in.sample_pos;
  {
    std::vector<Triplet> trip;
    for (size_t s = 0; s < sample_pts.size(); ++s) {
      InterpStencil st;
      try {
        st = build_interp(spec, fd_->active_mask(), sample_pts[s]);
        for (int q = 0; q < st.n; ++q)
          trip.emplace_back((int)s, fd_->active_index()[st.cell[q]], st.w[q]);
      } catch (const InterpolationOutOfDomain&) {
        // nearest active cell (sample marginally outside the active region)
        double best = std::numeric_limits<double>::max();
        int best_a = -1;
        for (int a2 = 0; a2 < na; ++a2) {
          const int c = fd_->active_cells()[a2];
          const double d = (spec.cell_center(c / spec.my, c % spec.my) - sample_pts[s]).norm();
          if (d < best) {
            best = d;
            best_a = a2;
          }
        }
        if (best_a < 0 || best > 1.5 * spec.cell_dx())
          throw SampleEscaped("assemble_step: flow-map sample outside the fluid region");
        trip.emplace_back((int)s, best_a, 1.0);
      }
    }
    sample_p_.resize((int)sample_pts.size(), na);
    sample_p_.setFromTriplets(trip.begin(), trip.end());
    sample_p_.makeCompressed();
  }
  ifc_q_ = interp_matrix(spec, fd_->active_mask(), fd_->active_index(), na, interface_->points);

  // quadratic v-block
  const Vec& omega = *in.sample_weight;
  Vec wifc = Eigen::Map<const Vec>(interface_->weights.data(), interface_->weights.size());
  SpMat msamp = sample_p_.transpose() * SpMat(omega.asDiagonal()) * sample_p_;
  SpMat mslip = ifc_q_.transpose() * SpMat(wifc.asDiagonal()) * ifc_q_;
  h_ = tau * nu * fd_->eps_form();
  if (cfg_.kappa > 0)
    h_ = (h_ + SpMat(cfg_.kappa * tau * fd_->highorder_form(models_.fluid.k0_order))).pruned();
  h_ = (h_ + SpMat((rho_f * tau / h) * block_diag2(msamp))).pruned();
  if (a_slip > 0) h_ = (h_ + SpMat(a_slip * tau * block_diag2(mslip))).pruned();
  h_.makeCompressed();

  // constraints: coupling rows, wall rows, divergence rows
  std::vector<Triplet> tb;
  int row = 0;
  // gather rows of the (column-major) interpolation matrix
  std::vector<std::vector<std::pair<int, double>>> qrows(interface_->size());
  for (int col = 0; col < ifc_q_.outerSize(); ++col)
    for (SpMat::InnerIterator it(ifc_q_, col); it; ++it)
      qrows[it.row()].emplace_back(col, it.value());
  for (size_t k = 0; k < interface_->size(); ++k, ++row) {
    const Vec2 n = interface_->normals[k];
    for (auto& [col, w] : qrows[k]) {
      tb.emplace_back(row, col, w * n.x());
      tb.emplace_back(row, na + col, w * n.y());
    }
  }
  wall_dofs_.clear();
  for (int a2 = 0; a2 < na; ++a2) {
    const int c = fd_->active_cells()[a2];
    const int i = c / spec.my, j = c % spec.my;
    if (i == 0 || i == spec.mx - 1) wall_dofs_.push_back(a2);            // vx
    if (j == 0 || j == spec.my - 1) wall_dofs_.push_back(na + a2);       // vy
  }
  n_wall_ = (int)wall_dofs_.size();
  for (int w = 0; w < n_wall_; ++w) tb.emplace_back(row++, wall_dofs_[w], 1.0);
  {
    const SpMat& d = fd_->div();
    for (int col = 0; col < d.outerSize(); ++col)
      for (SpMat::InnerIterator it(d, col); it; ++it)
        tb.emplace_back(row + it.row(), it.col(), it.value());
    row += d.rows();
  }
  b_.resize(row, 2 * na);
  b_.setFromTriplets(tb.begin(), tb.end());
  b_.makeCompressed();

  row_scale_ = Vec::Ones(row);
  for (int col = 0; col < b_.outerSize(); ++col)
    for (SpMat::InnerIterator it(b_, col); it; ++it)
      row_scale_[it.row()] = std::max(row_scale_[it.row()], std::abs(it.value()));
  for (int r = 0; r < row; ++r) row_scale_[r] = 1.0 / row_scale_[r];
}

Field2 StepProblem::boundary_rate(const Field2& eta_pos) const {
  const double tau = cfg_.dt_tau;
  Field2 b((Eigen::Index)interface_->size());
  const Field2& prev = in_.eta_prev->positions();
  for (size_t k = 0; k < interface_->size(); ++k) {
    const int node = interface_->node_index[k];
    b.set((Eigen::Index)k, (Vec2(eta_pos.x[node], eta_pos.y[node]) - prev.at(node)) / tau);
  }
  return b;
}

Vec StepProblem::coupling_rhs(const Field2& eta_pos) const {
  const Field2 b = boundary_rate(eta_pos);
  Vec g((Eigen::Index)interface_->size());
  for (size_t k = 0; k < interface_->size(); ++k)
    g[(Eigen::Index)k] = b.at((Eigen::Index)k).dot(interface_->normals[k]);
  return g;
}

Vec StepProblem::v_linear(const Field2& eta_pos) const {
  const int na = fd_->n_active();
  const double tau = cfg_.dt_tau, h = cfg_.h_delay;
  const double rho_f = models_.fluid.rho_f, a_slip = models_.fluid.slip_coefficient;
  const Vec& omega = *in_.sample_weight;

  Vec r = Vec::Zero(2 * na);
  // body force along the flow samples
  const Vec2 f = in_.f_slot;
  r.head(na) += tau * rho_f * (sample_p_.transpose() * (omega * f.x()).eval());
  r.tail(na) += tau * rho_f * (sample_p_.transpose() * (omega * f.y()).eval());
  // window history
  const Field2& wf = *in_.w_f;
  r.head(na) += (rho_f * tau / h) * (sample_p_.transpose() * omega.cwiseProduct(wf.x).eval());
  r.tail(na) += (rho_f * tau / h) * (sample_p_.transpose() * omega.cwiseProduct(wf.y).eval());
  // slip cross term
  if (a_slip > 0) {
    const Field2 b = boundary_rate(eta_pos);
    Vec wifc = Eigen::Map<const Vec>(interface_->weights.data(), interface_->weights.size());
    r.head(na) += a_slip * tau * (ifc_q_.transpose() * wifc.cwiseProduct(b.x).eval());
    r.tail(na) += a_slip * tau * (ifc_q_.transpose() * wifc.cwiseProduct(b.y).eval());
  }
  return r;
}

double StepProblem::solid_part(const Field2& eta_pos) const {
  const SolidGrid& g = in_.eta_prev->grid();
  const double tau = cfg_.dt_tau, h = cfg_.h_delay;
  const double rho_s = models_.mat.rho_s, a_slip = models_.fluid.slip_coefficient;
  const RegularizerConfig reg = cfg_.regularizer();

  DeformationField eta(in_.eta_prev->grid_ptr(), in_.eta_prev->ops_ptr());
  eta.set_positions(eta_pos);
  double val = eval_energy(eta, models_.mat, reg).total;

  const Field2& prev = in_.eta_prev->positions();
  Field2 rate{(eta_pos.x - prev.x) / tau, (eta_pos.y - prev.y) / tau};
  val += tau * eval_dissipation(*in_.eta_prev, rate, models_.mat, reg);

  // solid inertia and force
  const Field2& ws = *in_.w_s;
  const Vec2 f = in_.f_slot;
  const Vec& w = g.node_weight;
  const Vec dxs = rate.x - ws.x, dys = rate.y - ws.y;
  val += rho_s * tau / (2 * h) * (dxs.cwiseAbs2().dot(w) + dys.cwiseAbs2().dot(w));
  val -= tau * rho_s * (f.x() * rate.x.dot(w) + f.y() * rate.y.dot(w));

  // slip: v-free part (a tau/2) sum w |b|^2
  if (a_slip > 0) {
    const Field2 b = boundary_rate(eta_pos);
    double s = 0.0;
    for (size_t k = 0; k < interface_->size(); ++k)
      s += interface_->weights[k] * b.at((Eigen::Index)k).squaredNorm();
    val += 0.5 * a_slip * tau * s;
  }

  // fluid window constant part
  const Field2& wf = *in_.w_f;
  const Vec& omega = *in_.sample_weight;
  const double rho_f = models_.fluid.rho_f;
  val += rho_f * tau / (2 * h) * (wf.x.cwiseAbs2().dot(omega) + wf.y.cwiseAbs2().dot(omega));
  return val;
}

double StepProblem::objective(const Field2& eta_pos, const Vec& v_active) const {
  double val = solid_part(eta_pos);
  val += 0.5 * v_active.dot(h_ * v_active) - v_linear(eta_pos).dot(v_active);
  return val;
}

Vec StepProblem::objective_v_gradient(const Field2& eta_pos, const Vec& v_active) const {
  return h_ * v_active - v_linear(eta_pos);
}

Field2 StepProblem::objective_eta_gradient(const Field2& eta_pos, const Vec& v_active) const {
  const SolidGrid& g = in_.eta_prev->grid();
  const double tau = cfg_.dt_tau, h = cfg_.h_delay;
  const double rho_s = models_.mat.rho_s, a_slip = models_.fluid.slip_coefficient;
  const RegularizerConfig reg = cfg_.regularizer();

  DeformationField eta(in_.eta_prev->grid_ptr(), in_.eta_prev->ops_ptr());
  eta.set_positions(eta_pos);
  Field2 grad = energy_gradient(eta, models_.mat, reg);

  const Field2& prev = in_.eta_prev->positions();
  Field2 rate{(eta_pos.x - prev.x) / tau, (eta_pos.y - prev.y) / tau};
  const Field2 dg = dissipation_gradient(*in_.eta_prev, rate, models_.mat, reg);
  grad.x += dg.x;
  grad.y += dg.y;

  const Field2& ws = *in_.w_s;
  const Vec& w = g.node_weight;
  const Vec2 f = in_.f_slot;
  grad.x += (rho_s / h) * w.cwiseProduct(rate.x - ws.x) - rho_s * f.x() * w;
  grad.y += (rho_s / h) * w.cwiseProduct(rate.y - ws.y) - rho_s * f.y() * w;

  if (a_slip > 0) {
    const Field2 b = boundary_rate(eta_pos);
    const Vec vx = sampled_interface_velocity_x(v_active), vy = sampled_interface_velocity_y(v_active);
    for (size_t k = 0; k < interface_->size(); ++k) {
      const int node = interface_->node_index[k];
      const double wk = interface_->weights[k];
      grad.x[node] += a_slip * wk * (b.x[(Eigen::Index)k] - vx[(Eigen::Index)k]);
      grad.y[node] += a_slip * wk * (b.y[(Eigen::Index)k] - vy[(Eigen::Index)k]);
    }
  }
  return grad;
}

Vec StepProblem::sampled_interface_velocity_x(const Vec& v_active) const {
  const int na = fd_->n_active();
  return ifc_q_ * v_active.head(na);
}
Vec StepProblem::sampled_interface_velocity_y(const Vec& v_active) const {
  const int na = fd_->n_active();
  return ifc_q_ * v_active.tail(na);
}

Vec StepProblem::constraint_residual(const Field2& eta_pos, const Vec& v_active) const {
  Vec g = Vec::Zero(b_.rows());
  g.head(interface_->size()) = coupling_rhs(eta_pos);
  return b_ * v_active - g;
}

EnergyBudget StepProblem::budget(const Field2& eta_pos, const Vec& v_active) const {
  const SolidGrid& g = in_.eta_prev->grid();
  const double tau = cfg_.dt_tau, h = cfg_.h_delay;
  const double rho_s = models_.mat.rho_s, rho_f = models_.fluid.rho_f;
  const double nu = models_.fluid.nu, a_slip = models_.fluid.slip_coefficient;
  const RegularizerConfig reg = cfg_.regularizer();
  const int na = fd_->n_active();

  EnergyBudget bud;
  bud.step = in_.step_index;
  bud.time = in_.time;

  DeformationField eta(in_.eta_prev->grid_ptr(), in_.eta_prev->ops_ptr());
  eta.set_positions(eta_pos);
  const EnergyBreakdown eb = eval_energy(eta, models_.mat, reg);
  bud.elastic = eb.strain_term + eb.det_term + eb.grad2_term;
  bud.solid_regularizer = eb.regularizer_term;

  const Field2& prev = in_.eta_prev->positions();
  Field2 rate{(eta_pos.x - prev.x) / tau, (eta_pos.y - prev.y) / tau};
  const DissipationParts dp = eval_dissipation_parts(*in_.eta_prev, rate, models_.mat, reg);
  bud.solid_dissipation = tau * dp.r_term;
  bud.solid_reg_rate = tau * dp.regularizer_term;

  const Vec& w = g.node_weight;
  bud.solid_kinetic_rate =
      rho_s * tau / (8 * h) * (rate.x.cwiseAbs2().dot(w) + rate.y.cwiseAbs2().dot(w));

  const Vec& omega = *in_.sample_weight;
  const Vec sx = sample_p_ * v_active.head(na);
  const Vec sy = sample_p_ * v_active.tail(na);
  bud.fluid_kinetic_rate =
      rho_f * tau / (8 * h) * (sx.cwiseAbs2().dot(omega) + sy.cwiseAbs2().dot(omega));

  bud.viscous_dissipation = 0.5 * tau * nu * v_active.dot(fd_->eps_form() * v_active);
  if (cfg_.kappa > 0)
    bud.fluid_reg_dissipation =
        0.5 * cfg_.kappa * tau *
        v_active.dot(fd_->highorder_form(models_.fluid.k0_order) * v_active);

  if (a_slip > 0) {
    const Field2 b = boundary_rate(eta_pos);
    const Vec ix = sampled_interface_velocity_x(v_active);
    const Vec iy = sampled_interface_velocity_y(v_active);
    double s = 0.0;
    for (size_t k = 0; k < interface_->size(); ++k) {
      const Vec2 jump(b.x[(Eigen::Index)k] - ix[(Eigen::Index)k],
                      b.y[(Eigen::Index)k] - iy[(Eigen::Index)k]);
      s += interface_->weights[k] * jump.squaredNorm();
    }
    bud.slip_dissipation = 0.5 * a_slip * tau * s;
  }

  const Field2& ws = *in_.w_s;
  const Field2& wf = *in_.w_f;
  bud.window_rate_solid =
      rho_s * tau / h * (ws.x.cwiseAbs2().dot(w) + ws.y.cwiseAbs2().dot(w));
  bud.window_rate_fluid =
      rho_f * tau / h * (wf.x.cwiseAbs2().dot(omega) + wf.y.cwiseAbs2().dot(omega));

  const double f2 = in_.f_slot.squaredNorm();
  bud.force_work_solid = 2.0 * rho_s * tau * h * f2 * w.sum();
  bud.force_work_fluid = 2.0 * rho_f * tau * h * f2 * omega.sum();

  bud.j_value = objective(eta_pos, v_active);
  bud.j_warm = objective(prev, Vec::Zero(2 * na));
  bud.comparison_gap = bud.j_value - bud.j_warm;
  return bud;
}

// ---------------------------------------------------------------------------
// the per-step solver: exact fluid subproblem + preconditioned descent in eta

namespace {

// Augmented-Lagrangian solver for the fluid subproblem: the SPD matrix
// Hs + mu B'B is factorized once per penalty level; multiplier updates
// lambda += mu (Bv - g) then contract the constraint residual geometrically,
// so each evaluation returns the exactly-constrained minimizer to round-off.
struct AugmentedSolver {
  Eigen::SimplicialLDLT<SpMat> ldlt;
  const SpMat* b = nullptr;
  double mu = 0.0;
  int max_rounds = 16;

  void factorize(const SpMat& hs, const SpMat& b_scaled, double mu_in) {
    b = &b_scaled;
    mu = mu_in;
    SpMat btb = SpMat(b_scaled.transpose()) * b_scaled;
    SpMat a = (hs + SpMat(mu * btb)).pruned();
    a.makeCompressed();
    ldlt.compute(a);
    if (ldlt.info() != Eigen::Success)
      throw SingularSystem("solve_step: augmented factorization failed");
  }

  struct Out {
    Vec v, lambda_hat;  // lambda_hat = lambda + mu c, the effective multiplier
    double cmax = 0.0;
    int rounds = 0;
  };

  Out solve(const Vec& r, const Vec& g_scaled, const Vec* lambda_init = nullptr,
            double rel_tol = 1e-13) const {
    Out out;
    Vec lambda = (lambda_init && lambda_init->size() == b->rows())
                     ? *lambda_init
                     : Vec::Zero(b->rows());
    const double tol = rel_tol * (1.0 + g_scaled.lpNorm<Eigen::Infinity>());
    Vec c;
    for (out.rounds = 0; out.rounds < max_rounds; ++out.rounds) {
      const Vec rhs = r + b->transpose() * (mu * g_scaled - lambda).eval();
      out.v = ldlt.solve(rhs);
      c = *b * out.v - g_scaled;
      out.cmax = c.lpNorm<Eigen::Infinity>();
      lambda += mu * c;
      if (out.cmax <= tol) break;
    }
    out.lambda_hat = lambda;  // already includes the last mu c increment
    return out;
  }
};

}  // namespace

StepResult solve_step(const StepProblem& problem, const SolverConfig& solver,
                      const Field2* eta_hint) {
  solver.validate();
  const bool trace = std::getenv("VARISLIP_TRACE_SOLVER") != nullptr;
  const bool time_phases = std::getenv("VARISLIP_TRACE_TIME") != nullptr;
  const auto tick = std::chrono::steady_clock::now();
  auto lap = [&](const char* what, auto since) {
    if (time_phases)
      std::fprintf(stderr, "    %-12s %.3fs\n", what,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - since)
                       .count());
    return std::chrono::steady_clock::now();
  };
  int eval_count = 0;
  const StepInputs& in = problem.inputs();
  const StepConfig& cfg = problem.config();
  const ModelBundle& models = problem.models();
  const FluidDiscretization& fd = problem.fluid();
  const int na = fd.n_active();
  const int nv = 2 * na;
  const int n_nodes = in.eta_prev->grid().node_count();
  const GridSpec& spec = problem.inputs().fgrid->spec;

  // regularized fluid Hessian (Tikhonov mass keeps the block positive definite)
  SpMat hs = problem.v_hessian();
  {
    const double cell_area = spec.cell_dx() * spec.cell_dy();
    SpMat tikh(nv, nv);
    tikh.setIdentity();
    hs = (hs + SpMat(solver.v_regularization * cell_area * tikh)).pruned();
  }
  SpMat b_scaled = SpMat(problem.row_scale().asDiagonal()) * problem.constraints();

  // eta-metric for the descent: the quadratic solid terms of the objective
  Eigen::SimplicialLDLT<SpMat> kfac;
  {
    const double tau = cfg.dt_tau, h = cfg.h_delay;
    SpMat k = (models.mat.rho_s / (h * tau)) * mass_form_matrix(in.eta_prev->grid());
    k = (k + SpMat((2.0 / tau) * dissipation_form_matrix(*in.eta_prev))).pruned();
    if (cfg.kappa > 0) {
      const double c = 2.0 * (cfg.kappa / tau + std::pow(cfg.kappa, cfg.a0_exponent));
      k = (k + SpMat(c * highorder_form_matrix(in.eta_prev->grid(), in.eta_prev->ops(),
                                               cfg.reg_order))).pruned();
    }
    if (models.fluid.slip_coefficient > 0) {
      Vec d = Vec::Zero(2 * n_nodes);
      for (size_t q = 0; q < in.interface->size(); ++q) {
        const int node = in.interface->node_index[q];
        const double c = models.fluid.slip_coefficient / tau * in.interface->weights[q];
        d[node] += c;
        d[n_nodes + node] += c;
      }
      k = (k + SpMat(d.asDiagonal())).pruned();
    }
    k.makeCompressed();
    kfac.compute(k);
    if (kfac.info() != Eigen::Success)
      throw SingularSystem("solve_step: preconditioner factorization failed");
  }

  const GridSpec container = spec;
  auto guard_ok = [&](const Field2& pos) {
    DeformationField eta(in.eta_prev->grid_ptr(), in.eta_prev->ops_ptr());
    eta.set_positions(pos);
    if (eta.min_det() < solver.min_det) return false;
    if (!eta.inside(container)) return false;
    return true;
  };

  auto t_phase = lap("enter", tick);
  // penalty relative to the fluid block scale: mu sigma ~ penalty_init
  double h_diag_mean = 0.0;
  for (int k = 0; k < hs.outerSize(); ++k) h_diag_mean += hs.coeff(k, k);
  h_diag_mean /= std::max(1, (int)hs.rows());
  AugmentedSolver kkt;
  double mu = solver.penalty_init * h_diag_mean;
  t_phase = lap("setup", t_phase);
  kkt.factorize(hs, b_scaled, mu);
  t_phase = lap("factorize", t_phase);

  struct Eval {
    double f = 0.0;
    Vec grad;       // 2 n_nodes
    Vec v;          // nv
    Vec lambda;     // scaled effective multipliers
    double cmax = 0.0;
  };
  Vec lambda_ws;  // multipliers change slowly along the descent path
  auto evaluate = [&](const Field2& pos, double al_tol = 1e-10) {
    ++eval_count;
    Eval e;
    const Vec r = problem.v_linear(pos);
    Vec g = Vec::Zero(b_scaled.rows());
    g.head(problem.n_coupling()) = problem.coupling_rhs(pos);
    const Vec g_scaled = problem.row_scale().cwiseProduct(g);
    auto out = kkt.solve(r, g_scaled, &lambda_ws, al_tol);
    lambda_ws = out.lambda_hat;
    e.v = std::move(out.v);
    e.lambda = std::move(out.lambda_hat);
    e.cmax = out.cmax;
    e.f = problem.objective(pos, e.v);
    // Tikhonov term (kept so the descent minimizes exactly what it evaluates)
    const double cell_area = spec.cell_dx() * spec.cell_dy();
    e.f += 0.5 * solver.v_regularization * cell_area * e.v.squaredNorm();
    Field2 ge = problem.objective_eta_gradient(pos, e.v);
    // coupling-multiplier times d g / d eta (envelope of the value function)
    const double tau = cfg.dt_tau;
    for (int q = 0; q < problem.n_coupling(); ++q) {
      const int node = in.interface->node_index[q];
      const double lr = e.lambda[q] * problem.row_scale()[q];
      ge.x[node] -= lr * in.interface->normals[q].x() / tau;
      ge.y[node] -= lr * in.interface->normals[q].y() / tau;
    }
    e.grad = ge.flatten();
    return e;
  };

  // start from the warm point (eta_{k-1}, v*) or an extrapolated hint if better
  Field2 x = in.eta_prev->positions();
  Eval cur = evaluate(x);
  if (eta_hint && solver.warm_extrapolate && guard_ok(*eta_hint)) {
    Eval hint = evaluate(*eta_hint);
    if (hint.f < cur.f) {
      x = *eta_hint;
      cur = hint;
    }
  }

  StepResult res;
  res.status = StepStatus::Converged;
  int total_inner = 0;
  int outer = 0;

  for (outer = 0; outer < solver.max_outer; ++outer) {
    // L-BFGS with the solid quadratic as metric
    std::deque<Vec> mem_s, mem_y;
    std::deque<double> mem_rho;
    bool line_search_failed = false;

    bool stationary = false;
    double gamma = 1.0;      // seed-metric scaling from the latest curvature pair
    double alpha_init = 1.0;  // step-length memory
    for (int it = 0; it < solver.max_inner; ++it) {
      const double dec2 = cur.grad.dot(kfac.solve(cur.grad));
      res.grad_norm = std::sqrt(std::max(dec2, 0.0));
      const double tol2 = solver.grad_tol * solver.grad_tol * (1.0 + std::abs(cur.f));
      if (dec2 <= tol2) {
        stationary = true;
        break;
      }

      // two-loop recursion, H0 = K^{-1}
      Vec q = cur.grad;
      std::vector<double> alpha(mem_s.size());
      for (int i = (int)mem_s.size() - 1; i >= 0; --i) {
        alpha[i] = mem_rho[i] * mem_s[i].dot(q);
        q -= alpha[i] * mem_y[i];
      }
      Vec r = gamma * kfac.solve(q);
      for (size_t i = 0; i < mem_s.size(); ++i) {
        const double beta = mem_rho[i] * mem_y[i].dot(r);
        r += mem_s[i] * (alpha[i] - beta);
      }
      Vec dir = -r;
      double slope = cur.grad.dot(dir);
      if (!(slope < 0)) {
        mem_s.clear();
        mem_y.clear();
        mem_rho.clear();
        dir = -kfac.solve(cur.grad);
        slope = cur.grad.dot(dir);
        if (!(slope < 0)) break;  // gradient numerically zero
      }

      double step = std::min(1.0, 2.0 * alpha_init);
      bool accepted = false;
      int backtracks = 0;
      Field2 xt;
      Eval trial;
      for (int bt = 0; bt < solver.max_backtracks; ++bt, ++backtracks) {
        Vec cand = x.flatten() + step * dir;
        xt = Field2::from_flat(cand);
        if (guard_ok(xt)) {
          trial = evaluate(xt);
          if (trial.f <= cur.f + 1e-4 * step * slope) {
            accepted = true;
            break;
          }
        }
        step *= solver.backtrack;
      }
      ++total_inner;
      if (trace)
        std::fprintf(stderr, "  it %d f=%.12g dec=%.3e slope=%.3e bt=%d step=%.3e\n", it,
                     cur.f, res.grad_norm, slope, backtracks, step);
      if (!accepted) {
        // a refused step with a noise-level decrement is a converged point
        const double tol2 = solver.grad_tol * solver.grad_tol * (1.0 + std::abs(cur.f));
        if (cur.grad.dot(kfac.solve(cur.grad)) <= 1e4 * tol2)
          stationary = true;
        else
          line_search_failed = true;
        break;
      }
      alpha_init = step;
      Vec s = step * dir;
      Vec ygrad = trial.grad - cur.grad;
      const double sy = s.dot(ygrad);
      if (sy > 1e-14 * s.norm() * ygrad.norm()) {
        gamma = sy / ygrad.dot(kfac.solve(ygrad));
        mem_s.push_back(std::move(s));
        mem_y.push_back(std::move(ygrad));
        mem_rho.push_back(1.0 / sy);
        if ((int)mem_s.size() > solver.lbfgs_memory) {
          mem_s.pop_front();
          mem_y.pop_front();
          mem_rho.pop_front();
        }
      }
      x = xt;
      cur = trial;
    }

    {
      const double dec2 = cur.grad.dot(kfac.solve(cur.grad));
      res.grad_norm = std::sqrt(std::max(dec2, 0.0));
      if (!stationary && total_inner >= solver.max_inner)
        res.status = StepStatus::MaxIterations;
      if (line_search_failed) res.status = StepStatus::LineSearchFailed;
    }

    // tight final subproblem solve at the converged eta, then the true
    // (unscaled) constraint residual decides the penalty round
    cur = evaluate(x, 1e-13);
    const Vec resid = problem.constraint_residual(x, cur.v);
    const double cmax = resid.size() ? resid.lpNorm<Eigen::Infinity>() : 0.0;
    if (cmax <= solver.constraint_tol) break;
    if (outer + 1 < solver.max_outer) {
      mu *= solver.penalty_growth;
      kkt.factorize(hs, b_scaled, mu);
      cur = evaluate(x);
    }
  }

  t_phase = lap("descent", t_phase);
  if (time_phases) std::fprintf(stderr, "    evals        %d\n", eval_count);
  res.outer_iterations = outer + 1;
  res.inner_iterations = total_inner;
  res.eta_pos = x;
  res.v_active = cur.v;
  res.j_value = problem.objective(x, cur.v);
  res.j_warm = problem.objective(in.eta_prev->positions(), Vec::Zero(nv));
  res.comparison_gap = res.j_value - res.j_warm;

  // residuals
  const Vec resid = problem.constraint_residual(x, cur.v);
  const int nc = problem.n_coupling(), nw = problem.n_wall();
  res.max_coupling_residual = nc ? resid.head(nc).lpNorm<Eigen::Infinity>() : 0.0;
  res.max_wall_residual = nw ? resid.segment(nc, nw).lpNorm<Eigen::Infinity>() : 0.0;
  res.max_div_residual =
      resid.size() > nc + nw ? resid.tail(resid.size() - nc - nw).lpNorm<Eigen::Infinity>() : 0.0;

  // pressure: divergence-row multipliers, unscaled, weighted zero mean
  {
    const int nd = problem.n_divergence();
    res.pressure = Vec::Zero(nd);
    const double tau = cfg.dt_tau;
    const Vec& sw = fd.scalar_weight();
    for (int r = 0; r < nd; ++r) {
      const int row = nc + nw + r;
      const double lam_true = cur.lambda[row] * problem.row_scale()[row];
      res.pressure[r] = -lam_true / (tau * std::max(sw[r], 1e-300));
    }
    const double wsum = sw.sum();
    if (wsum > 0) res.pressure.array() -= res.pressure.dot(sw) / wsum;
  }
  res.lambda_coupling = Vec(nc);
  for (int q = 0; q < nc; ++q) res.lambda_coupling[q] = cur.lambda[q] * problem.row_scale()[q];

  res.sample_vx = problem.sample_matrix() * cur.v.head(na);
  res.sample_vy = problem.sample_matrix() * cur.v.tail(na);
  return res;
}

// ---------------------------------------------------------------------------
// run driver

namespace {

InterfaceGeometry interface_of(const DeformationField& eta) { return build_interface(eta); }

}  // namespace

Trajectory run_simulation(const StepConfig& cfg, const ModelBundle& models,
                          const InitialData& init,
                          const std::function<void(const TrajectoryRecord&)>& on_step) {
  cfg.validate();
  models.mat.validate();
  models.fluid.validate();

  Trajectory traj;
  traj.sgrid = init.eta0.grid_ptr();
  traj.ops = init.eta0.ops_ptr();
  traj.fgrid = init.v0.grid;
  traj.cfg = cfg;
  traj.models = models;

  const GridSpec container = traj.fgrid->spec;
  if (init.eta0.min_det() <= 0)
    throw ValidationError("run_simulation: initial deformation is degenerate");
  if (!init.eta0.inside(container))
    throw ValidationError("run_simulation: initial deformation leaves the container");

  DeformationField eta = init.eta0;
  InterfaceGeometry interface = interface_of(eta);
  const double cn0 = ciarlet_necas_residual(eta);
  if (std::abs(cn0) > cfg.solver.cn_tol)
    throw ValidationError("run_simulation: initial data violates the Ciarlet-Necas tolerance");
  CellClassification cls = classify_cells(interface, container);

  FluidDiscretization fd0(traj.fgrid, cls);
  FlowMap fm = FlowMap::init(fd0);
  traj.sample_weight = fm.weight;

  DelayWindow window = initial_delay_window(cfg, init.eta_star, init.v0, fm);
  traj.windows.push_back(window);

  // initial record
  {
    TrajectoryRecord rec;
    rec.step = 0;
    rec.time = 0.0;
    rec.eta = eta.positions();
    rec.v_full = init.v0.values;
    rec.pressure_full = Vec::Zero(container.cell_count());
    rec.cls_used = cls;
    rec.interface_used = interface;
    rec.interface_new = interface;
    rec.sample_pos = fm.pos;
    rec.window_index = 0;
    rec.slot = 0;
    rec.cn_residual = cn0;
    rec.min_sep = min_separation(interface, container);
    auto bd = eval_energy(eta, models.mat, cfg.regularizer());
    rec.budget.step = 0;
    rec.budget.elastic = bd.strain_term + bd.det_term + bd.grad2_term;
    rec.budget.solid_regularizer = bd.regularizer_term;
    traj.records.push_back(std::move(rec));
  }

  const int slots = cfg.slots_per_window();
  const int n_steps = cfg.total_steps();
  std::vector<Field2> collected_rates, collected_samples;
  Field2 eta_prev_prev;  // for warm extrapolation
  bool have_prev_prev = false;

  for (int k = 1; k <= n_steps; ++k) {
    const int slot = (k - 1) % slots;
    if (slot == 0 && k > 1) {
      window = advance_delay_window(collected_rates, collected_samples, (k - 1) * cfg.dt_tau, cfg);
      traj.windows.push_back(window);
      collected_rates.clear();
      collected_samples.clear();
      fm.reset_reference(1.6 * container.cell_dx());
    }

    StepInputs in;
    in.eta_prev = &eta;
    in.interface = &interface;
    in.cls = &cls;
    in.fgrid = traj.fgrid;
    in.w_s = &window.w_s[slot];
    in.w_f = &window.w_f[slot];
    in.sample_pos = &fm.pos;
    in.sample_weight = &traj.sample_weight;
    in.f_slot = cfg.force.slot_average((k - 1) * cfg.dt_tau, k * cfg.dt_tau);
    in.step_index = k;
    in.time = k * cfg.dt_tau;

    std::optional<Field2> hint;
    if (have_prev_prev) {
      Field2 h2{2.0 * eta.positions().x - eta_prev_prev.x,
                2.0 * eta.positions().y - eta_prev_prev.y};
      hint = std::move(h2);
    }

    TrajectoryRecord rec;
    try {
      StepProblem problem(in, cfg, models);
      StepResult sres = solve_step(problem, cfg.solver, hint ? &*hint : nullptr);

      rec.step = k;
      rec.time = in.time;
      rec.eta = sres.eta_pos;
      rec.v_full = problem.fluid().extend_full(sres.v_active);
      rec.pressure_full = Vec::Zero(container.cell_count());
      for (int r = 0; r < problem.n_divergence(); ++r)
        rec.pressure_full[problem.fluid().scalar_cells()[r]] = sres.pressure[r];
      rec.cls_used = cls;
      rec.interface_used = interface;
      rec.sample_pos = fm.pos;
      rec.window_index = (int)traj.windows.size() - 1;
      rec.slot = slot;
      rec.f_slot = in.f_slot;
      rec.budget = problem.budget(sres.eta_pos, sres.v_active);
      rec.budget.step = k;
      rec.budget.time = in.time;
      rec.status = sres.status;
      rec.iterations = sres.inner_iterations;
      rec.max_div_residual = sres.max_div_residual;
      rec.max_coupling_residual = sres.max_coupling_residual;

      // new state and monitors
      DeformationField eta_new(traj.sgrid, traj.ops);
      eta_new.set_positions(sres.eta_pos);
      rec.interface_new = interface_of(eta_new);
      rec.cn_residual = ciarlet_necas_residual(eta_new);
      rec.min_sep = min_separation(rec.interface_new, container);

      // tangential jump and the coupling-linearization defect at eta_k
      {
        const Field2& prev = eta.positions();
        const std::vector<uint8_t>& amask = problem.fluid().active_mask();
        double wsum = 0.0, jt2 = 0.0, defect = 0.0;
        for (size_t q = 0; q < interface.size(); ++q) {
          const int node = interface.node_index[q];
          const Vec2 b = (Vec2(sres.eta_pos.x[node], sres.eta_pos.y[node]) - prev.at(node)) /
                         cfg.dt_tau;
          const Vec2 vold =
              build_interp(container, amask, interface.points[q]).apply(rec.v_full);
          const double jt = (b - vold).dot(interface.tangents[q]);
          jt2 += interface.weights[q] * jt * jt;
          wsum += interface.weights[q];

          const Vec2 vnew = interp_velocity(container, amask, rec.v_full,
                                            rec.interface_new.points[q]);
          defect = std::max(defect,
                            std::abs((b - vnew).dot(rec.interface_new.normals[q])));
        }
        rec.tangential_jump_rms = wsum > 0 ? std::sqrt(jt2 / wsum) : 0.0;
        rec.coupling_defect_at_new = defect;
      }

      // advance flow map with the accepted velocity
      VelocityField vfield = VelocityField::zero(traj.fgrid, cls);
      vfield.values = rec.v_full;
      vfield.time = in.time;
      fm = update_flow_map(fm, vfield, cfg.dt_tau);
      rec.flow_det_min = fm.min_det();
      rec.flow_det_max = fm.max_det();
      rec.flow_lipschitz = fm.max_lipschitz();

      collected_rates.push_back(Field2{(sres.eta_pos.x - eta.positions().x) / cfg.dt_tau,
                                       (sres.eta_pos.y - eta.positions().y) / cfg.dt_tau});
      collected_samples.push_back(Field2{sres.sample_vx, sres.sample_vy});

      eta_prev_prev = eta.positions();
      have_prev_prev = true;
      eta = std::move(eta_new);
      interface = rec.interface_new;
      cls = classify_cells(interface, container);

      traj.records.push_back(rec);
      if (on_step) on_step(traj.records.back());
    } catch (const SelfIntersecting& e) {
      traj.abort = AbortReason::SelfIntersection;
      traj.abort_message = e.what();
      break;
    } catch (const SampleEscaped& e) {
      traj.abort = AbortReason::StepFailure;
      traj.abort_message = e.what();
      break;
    } catch (const InterpolationOutOfDomain& e) {
      traj.abort = AbortReason::StepFailure;
      traj.abort_message = e.what();
      break;
    } catch (const DegenerateJacobian& e) {
      traj.abort = AbortReason::StepFailure;
      traj.abort_message = e.what();
      break;
    } catch (const SingularSystem& e) {
      traj.abort = AbortReason::StepFailure;
      traj.abort_message = e.what();
      break;
    }

    const TrajectoryRecord& last = traj.records.back();
    if (last.min_sep < cfg.solver.contact_fraction * container.cell_dx()) {
      traj.abort = AbortReason::ContactImminent;
      traj.abort_message = "minimum separation fell below the contact threshold";
      break;
    }
    if (std::abs(last.cn_residual) > cfg.solver.cn_tol) {
      traj.abort = AbortReason::CiarletNecas;
      traj.abort_message = "Ciarlet-Necas residual exceeded tolerance";
      break;
    }
    if (last.status == StepStatus::LineSearchFailed) {
      traj.abort = AbortReason::StepFailure;
      traj.abort_message = "line search failed against the feasibility barrier";
      break;
    }
  }

  return traj;
}

// ---------------------------------------------------------------------------
// interpolants

namespace {
int clamp_index(int k, int lo, int hi) { return std::max(lo, std::min(k, hi)); }
}  // namespace

Field2 Trajectory::eta_const_right(double t) const {
  const double tau = cfg.dt_tau;
  const int n = steps_completed();
  const int k = clamp_index((int)std::floor(t / tau) + 1, 1, std::max(1, n));
  return records[clamp_index(k, 0, n)].eta;
}

Field2 Trajectory::eta_const_left(double t) const {
  const double tau = cfg.dt_tau;
  const int n = steps_completed();
  const int k = clamp_index((int)std::floor(t / tau), 0, n);
  return records[k].eta;
}

Field2 Trajectory::eta_affine(double t) const {
  const double tau = cfg.dt_tau;
  const int n = steps_completed();
  if (n == 0) return records[0].eta;
  const double s = std::clamp(t / tau, 0.0, (double)n);
  const int k = clamp_index((int)std::floor(s), 0, n - 1);
  const double a = s - k;
  const Field2& e0 = records[k].eta;
  const Field2& e1 = records[k + 1].eta;
  return Field2{(1.0 - a) * e0.x + a * e1.x, (1.0 - a) * e0.y + a * e1.y};
}

}  // namespace varislip
