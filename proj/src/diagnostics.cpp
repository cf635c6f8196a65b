#include "varislip/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace varislip {

bool VerificationReport::all_pass() const {
  for (const auto& c : checks)
    if (!c.pass) return false;
  return true;
}

std::string VerificationReport::to_text() const {
  std::ostringstream os;
  for (const auto& c : checks) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s check=%s value=%.12g threshold=%.12g %s\n",
                  c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value, c.threshold,
                  c.detail.c_str());
    os << buf;
  }
  os << (all_pass() ? "RESULT PASS\n" : "RESULT FAIL\n");
  return os.str();
}

namespace {

// interpolation convention shared with the stepper: renormalized bilinear
// over active cells, nearest active cell within 1.5 cells as fallback
Vec2 sample_velocity(const GridSpec& spec, const std::vector<uint8_t>& active, const Field2& v,
                     const Vec2& p) {
  try {
    return build_interp(spec, active, p).apply(v);
  } catch (const InterpolationOutOfDomain&) {
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
      throw SampleEscaped("diagnostics: sample outside the fluid region");
    return v.at(best_c);
  }
}

std::vector<uint8_t> active_mask_of(const CellClassification& cls) {
  std::vector<uint8_t> m(cls.labels.size());
  for (size_t c = 0; c < m.size(); ++c) m[c] = cls.is_active((int)c) ? 1 : 0;
  return m;
}

}  // namespace

EnergyBudget reassemble_budget(const Trajectory& traj, int k) {
  if (k < 1 || k >= (int)traj.records.size())
    throw ValidationError("reassemble_budget: step index out of range");
  const TrajectoryRecord& rec = traj.records[k];
  const TrajectoryRecord& prev_rec = traj.records[k - 1];
  const StepConfig& cfg = traj.cfg;
  const ModelBundle& models = traj.models;
  const double tau = cfg.dt_tau, h = cfg.h_delay;
  const double rho_s = models.mat.rho_s, rho_f = models.fluid.rho_f;
  const RegularizerConfig reg = cfg.regularizer();
  const GridSpec& spec = traj.fgrid->spec;
  const DelayWindow& window = traj.windows[rec.window_index];
  const Field2& ws = window.w_s[rec.slot];
  const Field2& wf = window.w_f[rec.slot];
  const Vec& omega = traj.sample_weight;

  DeformationField eta_k(traj.sgrid, traj.ops);
  eta_k.set_positions(rec.eta);
  DeformationField eta_prev(traj.sgrid, traj.ops);
  eta_prev.set_positions(prev_rec.eta);

  EnergyBudget bud;
  bud.step = rec.step;
  bud.time = rec.time;

  const EnergyBreakdown eb = eval_energy(eta_k, models.mat, reg);
  bud.elastic = eb.strain_term + eb.det_term + eb.grad2_term;
  bud.solid_regularizer = eb.regularizer_term;

  const Field2 rate{(rec.eta.x - prev_rec.eta.x) / tau, (rec.eta.y - prev_rec.eta.y) / tau};
  const DissipationParts dp = eval_dissipation_parts(eta_prev, rate, models.mat, reg);
  bud.solid_dissipation = tau * dp.r_term;
  bud.solid_reg_rate = tau * dp.regularizer_term;

  const Vec& w = traj.sgrid->node_weight;
  bud.solid_kinetic_rate =
      rho_s * tau / (8 * h) * (rate.x.cwiseAbs2().dot(w) + rate.y.cwiseAbs2().dot(w));

  const std::vector<uint8_t> amask = active_mask_of(rec.cls_used);
  double fk2 = 0.0;
  {
    double acc = 0.0;
    for (size_t s = 0; s < rec.sample_pos.size(); ++s) {
      const Vec2 vs = sample_velocity(spec, amask, rec.v_full, rec.sample_pos[s]);
      acc += omega[(Eigen::Index)s] * vs.squaredNorm();
    }
    fk2 = acc;
  }
  bud.fluid_kinetic_rate = rho_f * tau / (8 * h) * fk2;

  FluidDiscretization fd(traj.fgrid, rec.cls_used);
  const Vec va = fd.restrict_active(rec.v_full);
  bud.viscous_dissipation = 0.5 * tau * models.fluid.nu * va.dot(fd.eps_form() * va);
  if (cfg.kappa > 0)
    bud.fluid_reg_dissipation =
        0.5 * cfg.kappa * tau * va.dot(fd.highorder_form(models.fluid.k0_order) * va);

  if (models.fluid.slip_coefficient > 0) {
    const InterfaceGeometry& ifc = rec.interface_used;
    double s = 0.0;
    for (size_t q = 0; q < ifc.size(); ++q) {
      const int node = ifc.node_index[q];
      const Vec2 b = rate.at(node);
      const Vec2 vi = build_interp(spec, amask, ifc.points[q]).apply(rec.v_full);
      s += ifc.weights[q] * (b - vi).squaredNorm();
    }
    bud.slip_dissipation = 0.5 * models.fluid.slip_coefficient * tau * s;
  }

  bud.window_rate_solid = rho_s * tau / h * (ws.x.cwiseAbs2().dot(w) + ws.y.cwiseAbs2().dot(w));
  bud.window_rate_fluid =
      rho_f * tau / h * (wf.x.cwiseAbs2().dot(omega) + wf.y.cwiseAbs2().dot(omega));

  const double f2 = rec.f_slot.squaredNorm();
  bud.force_work_solid = 2.0 * rho_s * tau * h * f2 * w.sum();
  bud.force_work_fluid = 2.0 * rho_f * tau * h * f2 * omega.sum();

  // full functional from the same module-level pieces
  auto j_of = [&](const Field2& pos, bool zero_velocity) {
    DeformationField eta(traj.sgrid, traj.ops);
    eta.set_positions(pos);
    double val = eval_energy(eta, models.mat, reg).total;
    const Field2 rt{(pos.x - prev_rec.eta.x) / tau, (pos.y - prev_rec.eta.y) / tau};
    val += tau * eval_dissipation(eta_prev, rt, models.mat, reg);
    // slip
    if (models.fluid.slip_coefficient > 0) {
      const InterfaceGeometry& ifc = rec.interface_used;
      double s = 0.0;
      for (size_t q = 0; q < ifc.size(); ++q) {
        const Vec2 b = rt.at(ifc.node_index[q]);
        const Vec2 vi = zero_velocity
                            ? Vec2::Zero()
                            : build_interp(spec, amask, ifc.points[q]).apply(rec.v_full);
        s += ifc.weights[q] * (b - vi).squaredNorm();
      }
      val += 0.5 * models.fluid.slip_coefficient * tau * s;
    }
    // solid inertia + force
    const Vec dxs = rt.x - ws.x, dys = rt.y - ws.y;
    val += rho_s * tau / (2 * h) * (dxs.cwiseAbs2().dot(w) + dys.cwiseAbs2().dot(w));
    val -= tau * rho_s * (rec.f_slot.x() * rt.x.dot(w) + rec.f_slot.y() * rt.y.dot(w));
    // fluid terms
    if (!zero_velocity) {
      val += 0.5 * tau * models.fluid.nu * va.dot(fd.eps_form() * va);
      if (cfg.kappa > 0)
        val += 0.5 * cfg.kappa * tau * va.dot(fd.highorder_form(models.fluid.k0_order) * va);
      double inertia = 0.0, force = 0.0;
      for (size_t s = 0; s < rec.sample_pos.size(); ++s) {
        const Vec2 vs = sample_velocity(spec, amask, rec.v_full, rec.sample_pos[s]);
        inertia += omega[(Eigen::Index)s] * (vs - wf.at((Eigen::Index)s)).squaredNorm();
        force += omega[(Eigen::Index)s] * rec.f_slot.dot(vs);
      }
      val += rho_f * tau / (2 * h) * inertia;
      val -= tau * rho_f * force;
    } else {
      val += rho_f * tau / (2 * h) * (wf.x.cwiseAbs2().dot(omega) + wf.y.cwiseAbs2().dot(omega));
    }
    return val;
  };
  bud.j_value = j_of(rec.eta, false);
  bud.j_warm = j_of(prev_rec.eta, true);
  bud.comparison_gap = bud.j_value - bud.j_warm;
  return bud;
}

ChainReport check_energy_chain(const std::vector<EnergyBudget>& budgets, double tol_per_step) {
  ChainReport rep;
  rep.tolerance_per_step = tol_per_step;
  if (budgets.empty()) {
    rep.pass = true;
    return rep;
  }
  const int n = (int)budgets.size() - 1;  // budgets[0] holds the initial terms
  rep.lhs = Vec::Zero(std::max(0, n));
  rep.rhs = Vec::Zero(std::max(0, n));
  rep.slack = Vec::Zero(std::max(0, n));
  const double init = budgets[0].elastic + budgets[0].solid_regularizer;
  double acc_lhs = 0.0, acc_rhs = 0.0;
  rep.pass = true;
  rep.min_slack = std::numeric_limits<double>::max();
  for (int k = 1; k <= n; ++k) {
    const EnergyBudget& b = budgets[k];
    acc_lhs += b.lhs_bracket();
    acc_rhs += b.rhs_sources();
    const double lhs = b.elastic + b.solid_regularizer + acc_lhs;
    const double rhs = init + acc_rhs;
    rep.lhs[k - 1] = lhs;
    rep.rhs[k - 1] = rhs;
    rep.slack[k - 1] = rhs - lhs;
    rep.min_slack = std::min(rep.min_slack, rep.slack[k - 1] + k * tol_per_step);
    if (rep.slack[k - 1] < -k * tol_per_step) rep.pass = false;
  }
  if (n == 0) rep.min_slack = 0.0;
  return rep;
}

CouplingReport check_coupling(const Trajectory& traj, int k) {
  if (k < 1 || k >= (int)traj.records.size())
    throw ValidationError("check_coupling: step index out of range");
  const TrajectoryRecord& rec = traj.records[k];
  const TrajectoryRecord& prev = traj.records[k - 1];
  const InterfaceGeometry& ifc = rec.interface_used;
  const std::vector<uint8_t> amask = active_mask_of(rec.cls_used);
  const GridSpec& spec = traj.fgrid->spec;
  const double tau = traj.cfg.dt_tau;

  CouplingReport rep;
  double wsum = 0.0, jt2 = 0.0;
  for (size_t q = 0; q < ifc.size(); ++q) {
    const int node = ifc.node_index[q];
    const Vec2 b = (Vec2(rec.eta.x[node], rec.eta.y[node]) -
                    Vec2(prev.eta.x[node], prev.eta.y[node])) /
                   tau;
    const Vec2 vi = build_interp(spec, amask, ifc.points[q]).apply(rec.v_full);
    const Vec2 jump = b - vi;
    rep.normal_residual = std::max(rep.normal_residual, std::abs(jump.dot(ifc.normals[q])));
    const double jt = jump.dot(ifc.tangents[q]);
    rep.tangential_jump_max = std::max(rep.tangential_jump_max, std::abs(jt));
    jt2 += ifc.weights[q] * jt * jt;
    wsum += ifc.weights[q];
  }
  rep.tangential_jump_rms = wsum > 0 ? std::sqrt(jt2 / wsum) : 0.0;
  return rep;
}

TransportReport check_transport(const TransportScenario& sc) {
  TransportReport rep;
  const int m = std::max(3, sc.n_times);
  const double dt = (sc.t1 - sc.t0) / (m - 1);
  std::vector<double> volume(m), boundary(m), dvol(m);

  for (int i = 0; i < m; ++i) {
    const double t = sc.t0 + i * dt;
    const std::vector<Vec2> poly = sc.interface_at(t);
    const CellClassification cls = classify_polygon(poly, sc.grid);

    double vol = 0.0, dv = 0.0;
    for (int ci = 0; ci < sc.grid.mx; ++ci)
      for (int cj = 0; cj < sc.grid.my; ++cj) {
        const int c = sc.grid.cell_index(ci, cj);
        const double w = sc.grid.cell_dx() * sc.grid.cell_dy() * cls.fluid_fraction[c];
        if (w == 0.0) continue;
        const Vec2 p = sc.grid.cell_center(ci, cj);
        vol += w * sc.u(t, p);
        dv += w * sc.du_dt(t, p);
      }
    volume[i] = vol;
    dvol[i] = dv;

    double bd = 0.0;
    const size_t np = poly.size();
    for (size_t s = 0; s < np; ++s) {
      const Vec2& a = poly[s];
      const Vec2& b = poly[(s + 1) % np];
      const Vec2 mid = 0.5 * (a + b);
      bd += (b - a).norm() * sc.u(t, mid) * sc.normal_speed(t, mid);
    }
    boundary[i] = bd;
  }

  double vol_scale = 0.0;
  for (double v : volume) vol_scale = std::max(vol_scale, std::abs(v));
  const double floor = 1e-8 * (1.0 + vol_scale) / std::max(sc.t1 - sc.t0, 1e-12);
  for (int i = 1; i + 1 < m; ++i) {
    const double t = sc.t0 + i * dt;
    const double quot = (volume[i + 1] - volume[i - 1]) / (2 * dt);
    const double rhs = dvol[i] + boundary[i];
    double scale = std::max({std::abs(quot), std::abs(rhs), floor});
    rep.max_identity_error = std::max(rep.max_identity_error, std::abs(quot - rhs) / scale);
    if (sc.analytic_rate) {
      const double exact = sc.analytic_rate(t);
      const double den = std::max(std::abs(exact), 1e-14);
      rep.max_rel_error_vs_analytic =
          std::max(rep.max_rel_error_vs_analytic, std::abs(rhs - exact) / den);
      rep.max_rel_error_quotient =
          std::max(rep.max_rel_error_quotient, std::abs(quot - exact) / den);
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// strong-form residual on analytic fields

namespace {

struct DensityDerivs {
  Mat2 dF_e;           // elastic first-gradient stress
  double wxx[2], wxy[2], wyy[2];  // dW e per component (xy carries its 2)
  Mat2 dF_r, dZ_r;     // dissipation stresses
};

DensityDerivs density_derivs(const MaterialParams& mat, const Mat2& F, const Vec2 wsec[3],
                             const Mat2& Z) {
  DensityDerivs d;
  const double kSqrt2 = std::sqrt(2.0);
  // strain part
  const Mat2 C = F.transpose() * F;
  Eigen::Vector3d mv(C(0, 0) - 1.0, C(1, 1) - 1.0, kSqrt2 * C(0, 1));
  Eigen::Vector3d cm = mat.elastic_tensor * mv;
  Mat2 S;
  S(0, 0) = 0.25 * cm(0);
  S(1, 1) = 0.25 * cm(1);
  S(0, 1) = S(1, 0) = 0.25 * cm(2) / kSqrt2;
  d.dF_e = 2.0 * F * S;
  if (mat.model == EnergyModel::ModelCase) {
    const double det = F.determinant();
    d.dF_e += -mat.det_exponent * std::pow(det, -mat.det_exponent - 1.0) * cofactor(F);
  }
  // second-gradient part: wsec[0] = (eta_x,xx, eta_y,xx), wsec[1] = xy, wsec[2] = yy
  double g2 = 0.0;
  for (int c = 0; c < 2; ++c)
    g2 += wsec[0][c] * wsec[0][c] + 2.0 * wsec[1][c] * wsec[1][c] + wsec[2][c] * wsec[2][c];
  const double q = mat.grad2_exponent;
  const double cpow =
      (mat.model == EnergyModel::ModelCase && g2 > 0) ? std::pow(g2, 0.5 * q - 1.0) : 0.0;
  for (int c = 0; c < 2; ++c) {
    d.wxx[c] = cpow * wsec[0][c];
    d.wxy[c] = 2.0 * cpow * wsec[1][c];
    d.wyy[c] = cpow * wsec[2][c];
  }
  // dissipation r = |Z'F + F'Z|^2
  const Mat2 Sr = Z.transpose() * F + F.transpose() * Z;
  d.dZ_r = 4.0 * F * Sr;
  d.dF_r = 4.0 * Z * Sr;
  return d;
}

}  // namespace

double StrongFormField::max_norm() const {
  double m = 0.0;
  for (const Vec2& v : values) m = std::max(m, v.norm());
  return m;
}

StrongFormField strong_form_solid_residual(const AnalyticDeformation& def,
                                           const MaterialParams& mat, double t, int n_grid,
                                           double extent) {
  const int n = n_grid;
  const double h = extent / (n - 1);
  auto pos = [&](int i, int j) { return Vec2(i * h, j * h); };

  // nodal eta and dt eta
  std::vector<Vec2> eta(n * n), deta(n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      eta[i * n + j] = def.eta(t, pos(i, j));
      deta[i * n + j] = def.dt_eta(t, pos(i, j));
    }
  auto at = [&](const std::vector<Vec2>& f, int i, int j) -> const Vec2& { return f[i * n + j]; };

  // density-derivative fields on [1, n-2]^2 via central differences of eta
  const int m = n - 2;
  std::vector<DensityDerivs> dd(m * m);
  for (int i = 1; i <= n - 2; ++i)
    for (int j = 1; j <= n - 2; ++j) {
      Mat2 F, Z;
      F.col(0) = (at(eta, i + 1, j) - at(eta, i - 1, j)) / (2 * h);
      F.col(1) = (at(eta, i, j + 1) - at(eta, i, j - 1)) / (2 * h);
      Z.col(0) = (at(deta, i + 1, j) - at(deta, i - 1, j)) / (2 * h);
      Z.col(1) = (at(deta, i, j + 1) - at(deta, i, j - 1)) / (2 * h);
      Vec2 wsec[3];
      wsec[0] = (at(eta, i + 1, j) - 2 * at(eta, i, j) + at(eta, i - 1, j)) / (h * h);
      wsec[2] = (at(eta, i, j + 1) - 2 * at(eta, i, j) + at(eta, i, j - 1)) / (h * h);
      wsec[1] = (at(eta, i + 1, j + 1) - at(eta, i + 1, j - 1) - at(eta, i - 1, j + 1) +
                 at(eta, i - 1, j - 1)) /
                (4 * h * h);
      dd[(i - 1) * m + (j - 1)] = density_derivs(mat, F, wsec, Z);
    }
  auto dat = [&](int i, int j) -> const DensityDerivs& { return dd[(i - 1) * m + (j - 1)]; };

  // outer divergences on [2, n-3]^2
  StrongFormField out;
  out.n = n;
  out.h = h;
  out.interior_lo = 2;
  out.interior_hi = n - 3;
  for (int i = 2; i <= n - 3; ++i)
    for (int j = 2; j <= n - 3; ++j) {
      Vec2 r = mat.rho_s * def.dtt_eta(t, pos(i, j));
      for (int c = 0; c < 2; ++c) {
        // div of the first-gradient stresses (rows of dF_e + dF_r + dZ_r)
        const double div1 =
            (dat(i + 1, j).dF_e(c, 0) + dat(i + 1, j).dF_r(c, 0) + dat(i + 1, j).dZ_r(c, 0) -
             dat(i - 1, j).dF_e(c, 0) - dat(i - 1, j).dF_r(c, 0) - dat(i - 1, j).dZ_r(c, 0)) /
                (2 * h) +
            (dat(i, j + 1).dF_e(c, 1) + dat(i, j + 1).dF_r(c, 1) + dat(i, j + 1).dZ_r(c, 1) -
             dat(i, j - 1).dF_e(c, 1) - dat(i, j - 1).dF_r(c, 1) - dat(i, j - 1).dZ_r(c, 1)) /
                (2 * h);
        // div^2 of the hyperstress
        const double dxx =
            (dat(i + 1, j).wxx[c] - 2 * dat(i, j).wxx[c] + dat(i - 1, j).wxx[c]) / (h * h);
        const double dyy =
            (dat(i, j + 1).wyy[c] - 2 * dat(i, j).wyy[c] + dat(i, j - 1).wyy[c]) / (h * h);
        const double dxy = (dat(i + 1, j + 1).wxy[c] - dat(i + 1, j - 1).wxy[c] -
                            dat(i - 1, j + 1).wxy[c] + dat(i - 1, j - 1).wxy[c]) /
                           (4 * h * h);
        r[c] += -div1 + dxx + dxy + dyy;
      }
      out.values.push_back(r);
    }
  return out;
}

FlowMapReport flow_map_report(const FlowMap& fm) {
  return {fm.min_det(), fm.max_det(), fm.max_lipschitz()};
}

double comparison_tolerance(const Trajectory& traj) {
  double scale = 1.0;
  for (size_t k = 1; k < traj.records.size(); ++k)
    scale = std::max(scale, std::abs(traj.records[k].budget.j_warm));
  return 1e-9 * scale;
}

VerificationReport run_verification(const Trajectory& traj, const std::vector<std::string>& which) {
  auto enabled = [&](const std::string& name) {
    for (const auto& w : which)
      if (w == "all" || w == name) return true;
    return false;
  };
  VerificationReport rep;
  const int n = traj.steps_completed();
  const double tol = comparison_tolerance(traj);

  if (enabled("energy")) {
    double worst_gap = 0.0;
    for (int k = 1; k <= n; ++k)
      worst_gap = std::max(worst_gap, traj.records[k].budget.comparison_gap);
    rep.checks.push_back(
        {"comparison-inequality", worst_gap <= tol, worst_gap, tol, "max J gap"});

    std::vector<EnergyBudget> buds;
    for (const auto& r : traj.records) buds.push_back(r.budget);
    const ChainReport chain = check_energy_chain(buds, tol);
    rep.checks.push_back({"energy-chain", chain.pass, chain.min_slack, 0.0,
                          "min slack including per-step allowance"});

    double worst_rel = 0.0;
    for (int k = 1; k <= n; ++k) {
      const EnergyBudget re = reassemble_budget(traj, k);
      const auto a = traj.records[k].budget.numeric_fields();
      const auto b = re.numeric_fields();
      for (size_t f = 0; f < a.size(); ++f) {
        const double scale = std::max({std::abs(a[f]), std::abs(b[f]), 1e-12});
        worst_rel = std::max(worst_rel, std::abs(a[f] - b[f]) / scale);
      }
    }
    rep.checks.push_back({"budget-reassembly", worst_rel <= 1e-10, worst_rel, 1e-10,
                          "stepper vs module-level re-assembly"});
  }

  if (enabled("coupling")) {
    double worst = 0.0;
    for (int k = 1; k <= n; ++k)
      worst = std::max(worst, check_coupling(traj, k).normal_residual);
    rep.checks.push_back({"coupling-normal-residual", worst < 1e-7, worst, 1e-7, ""});
  }

  if (enabled("flowmap")) {
    double lo = 1.0, hi = 1.0;
    for (int k = 1; k <= n; ++k) {
      lo = std::min(lo, traj.records[k].flow_det_min);
      hi = std::max(hi, traj.records[k].flow_det_max);
    }
    const bool ok = lo >= 0.9 && hi <= 1.1;
    rep.checks.push_back({"flow-map-determinant", ok, std::max(hi - 1.0, 1.0 - lo), 0.1,
                          "max |det - 1| over the run"});
  }

  if (enabled("geometry")) {
    double cn = 0.0, sep = std::numeric_limits<double>::max();
    for (int k = 0; k <= n; ++k) {
      cn = std::max(cn, std::abs(traj.records[k].cn_residual));
      sep = std::min(sep, traj.records[k].min_sep);
    }
    rep.checks.push_back({"ciarlet-necas", cn < 1e-6, cn, 1e-6, ""});
    rep.checks.push_back({"separation", sep > 0.0, sep, 0.0, "minimum over the run"});
    bool zero_ext = true;
    for (int k = 0; k <= n; ++k) {
      const auto& r = traj.records[k];
      for (size_t c = 0; c < r.cls_used.labels.size(); ++c)
        if (!r.cls_used.is_active((int)c) &&
            (r.v_full.x[(Eigen::Index)c] != 0.0 || r.v_full.y[(Eigen::Index)c] != 0.0))
          zero_ext = false;
    }
    rep.checks.push_back({"zero-extension", zero_ext, zero_ext ? 0.0 : 1.0, 0.0, ""});
  }

  return rep;
}

}  // namespace varislip
