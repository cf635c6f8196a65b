// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion.  Exit code is the number of
// failed criteria.

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "test_util.hpp"
#include "varislip/io.hpp"
#include "varislip/scenario.hpp"

using namespace varislip;
using namespace varislip::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double elapsed(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------------------
// criterion 1: gradient consistency

void criterion_1() {
  const auto t0 = Clock::now();
  auto gb = make_grid(16);
  std::mt19937_64 rng(101);
  MaterialParams mat;
  mat.det_exponent = 5;
  mat.grad2_exponent = 4;
  RegularizerConfig reg{1e-4, 1.0, 3};

  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    auto eta = random_admissible(gb, rng);
    const Field2 ge = energy_gradient(eta, mat, reg);
    Field2 rate = random_field(gb.grid->node_count(), rng);
    const Field2 gd = dissipation_gradient(eta, rate, mat, reg);
    for (int d = 0; d < 10; ++d) {
      Field2 dir = random_field(gb.grid->node_count(), rng);
      const double nrm = std::sqrt(dir.x.squaredNorm() + dir.y.squaredNorm());
      dir.x /= nrm;
      dir.y /= nrm;
      const double eps = 1e-6;
      {
        DeformationField ep(gb.grid, gb.ops), em(gb.grid, gb.ops);
        ep.set_positions(Field2{eta.positions().x + eps * dir.x, eta.positions().y + eps * dir.y});
        em.set_positions(Field2{eta.positions().x - eps * dir.x, eta.positions().y - eps * dir.y});
        const double fd =
            (eval_energy(ep, mat, reg).total - eval_energy(em, mat, reg).total) / (2 * eps);
        worst = std::max(worst, rel_err(fd, ge.x.dot(dir.x) + ge.y.dot(dir.y)));
      }
      {
        const double fd = (eval_dissipation(eta, Field2{rate.x + eps * dir.x, rate.y + eps * dir.y},
                                            mat, reg) -
                           eval_dissipation(eta, Field2{rate.x - eps * dir.x, rate.y - eps * dir.y},
                                            mat, reg)) /
                          (2 * eps);
        worst = std::max(worst, rel_err(fd, gd.x.dot(dir.x) + gd.y.dot(dir.y)));
      }
    }
  }
  const double dt = elapsed(t0);
  report(1, "gradient consistency", worst < 1e-5 && dt < 10.0,
         fmt("max rel err %.2e, %.1f s", worst, dt));
}

// ---------------------------------------------------------------------------
// criteria 2, 3, 4a, 5a, 9a, 11 share the falling-disc run

struct MainRun {
  Trajectory traj;
  SimulationConfig config;
  double wall = 0.0;
};

MainRun run_falling_disc() {
  MainRun out;
  out.config = SimulationConfig::parse("scenario = falling_disc\n");
  auto setup = build_scenario(out.config);
  const auto t0 = Clock::now();
  out.traj = run_simulation(setup.cfg, setup.models, setup.init);
  out.wall = elapsed(t0);
  return out;
}

void criterion_2(const MainRun& run, double tol) {
  bool pass = run.traj.abort == AbortReason::None &&
              run.traj.steps_completed() == run.traj.cfg.total_steps();
  double worst = -1e300;
  for (int k = 1; k <= run.traj.steps_completed(); ++k)
    worst = std::max(worst, run.traj.records[k].budget.comparison_gap);
  pass = pass && worst <= tol && run.wall < 600.0;
  report(2, "per-step comparison inequality",
         pass, fmt("%d steps, max gap %.2e vs tol %.2e, %.0f s", run.traj.steps_completed(),
                   worst, tol, run.wall));
}

void criterion_3(const MainRun& run, double tol) {
  // independent re-assembly of every budget, then the summed estimate
  std::vector<EnergyBudget> buds;
  buds.push_back(run.traj.records[0].budget);
  double reassembly_err = 0.0;
  for (int k = 1; k <= run.traj.steps_completed(); ++k) {
    const EnergyBudget re = reassemble_budget(run.traj, k);
    const auto a = run.traj.records[k].budget.numeric_fields();
    const auto b = re.numeric_fields();
    for (size_t f = 0; f < a.size(); ++f)
      reassembly_err = std::max(
          reassembly_err, std::abs(a[f] - b[f]) / std::max({std::abs(a[f]), std::abs(b[f]), 1e-12}));
    buds.push_back(re);
  }
  const ChainReport chain = check_energy_chain(buds, tol);
  report(3, "summed discrete energy estimate", chain.pass && reassembly_err <= 1e-10,
         fmt("min slack %.2e, reassembly err %.1e", chain.min_slack, reassembly_err));
}

void criterion_4(const MainRun& run) {
  double worst = 0.0;
  for (int k = 1; k <= run.traj.steps_completed(); ++k)
    worst = std::max(worst, check_coupling(run.traj, k).normal_residual);
  const bool residual_ok = worst < 1e-7;

  // linearization defect re-evaluated at eta_k: 3-point tau sweep on a short leg
  double defect[3] = {0, 0, 0};
  double taus[3] = {1e-3, 5e-4, 2.5e-4};
  for (int s = 0; s < 3; ++s) {
    auto cfg = SimulationConfig::parse(
        fmt("scenario = falling_disc\nstep.tau = %g\nstep.t_end = 0.01\n", taus[s]));
    auto setup = build_scenario(cfg);
    const Trajectory traj = run_simulation(setup.cfg, setup.models, setup.init);
    // max over the second half of the leg, away from the initial transient
    for (int k = traj.steps_completed() / 2 + 1; k <= traj.steps_completed(); ++k)
      defect[s] = std::max(defect[s], traj.records[k].coupling_defect_at_new);
  }
  const double r1 = defect[0] / std::max(defect[1], 1e-300);
  const double r2 = defect[1] / std::max(defect[2], 1e-300);
  report(4, "coupling constraint and O(tau) defect",
         residual_ok && r1 >= 1.8 && r2 >= 1.8,
         fmt("max residual %.2e; defects %.2e/%.2e/%.2e ratios %.2f, %.2f", worst, defect[0],
             defect[1], defect[2], r1, r2));
}

void criterion_5(const MainRun& run) {
  double lo = 1.0, hi = 1.0;
  for (int k = 1; k <= run.traj.steps_completed(); ++k) {
    lo = std::min(lo, run.traj.records[k].flow_det_min);
    hi = std::max(hi, run.traj.records[k].flow_det_max);
  }
  const bool run_ok = lo >= 0.9 && hi <= 1.1;

  // analytic rigid rotation: interior samples of a full box
  GridSpec spec{0, 0, 1, 1, 24, 24};
  auto grid = std::make_shared<FluidGrid>(FluidGrid::make(spec));
  CellClassification cls;
  cls.grid = spec;
  cls.labels.assign(spec.cell_count(), CellLabel::Fluid);
  cls.fluid_fraction.assign(spec.cell_count(), 1.0);
  cls.fluid_area = 1.0;
  FluidDiscretization fd(grid, cls);
  FlowMap fm0 = FlowMap::init(fd);
  FlowMap fm;
  std::vector<double> wts;
  for (size_t s = 0; s < fm0.pos.size(); ++s)
    if ((fm0.pos[s] - Vec2(0.5, 0.5)).lpNorm<Eigen::Infinity>() < 0.3) {
      fm.pos.push_back(fm0.pos[s]);
      wts.push_back(1.0);
    }
  fm.ref = fm.pos;
  fm.weight = Eigen::Map<Vec>(wts.data(), (Eigen::Index)wts.size());
  fm.det = Vec::Ones((Eigen::Index)wts.size());
  fm.sigma_max = Vec::Ones((Eigen::Index)wts.size());
  fm.reset_reference(1.6 * spec.cell_dx());
  VelocityField v = VelocityField::zero(grid, cls);
  const double omega = 0.5;  // Euler composition drift (1 + tau^2 w^2)^k stays in band
  for (int i = 0; i < spec.mx; ++i)
    for (int j = 0; j < spec.my; ++j) {
      const Vec2 p = spec.cell_center(i, j) - Vec2(0.5, 0.5);
      v.values.set(spec.cell_index(i, j), omega * Vec2(-p.y(), p.x()));
    }
  for (int k = 0; k < 100; ++k) fm = update_flow_map(fm, v, 1e-3);
  const auto rot = flow_map_report(fm);
  const bool rot_ok = rot.min_det >= 0.9999 && rot.max_det <= 1.0001;

  report(5, "flow-map determinant bounds", run_ok && rot_ok,
         fmt("run det [%.4f, %.4f]; rotation det [%.6f, %.6f]", lo, hi, rot.min_det,
             rot.max_det));
}

void criterion_6() {
  const auto t0 = Clock::now();
  auto build = [](int n) {
    auto cfg = SimulationConfig::parse(
        fmt("scenario = shrinking_disc_transport\nfluid.mx = %d\nfluid.my = %d\n", n, n));
    return build_scenario(cfg).transport;
  };
  const TransportReport rep96 = check_transport(build(96));
  const TransportReport rep192 = check_transport(build(192));
  const double ratio =
      rep96.max_rel_error_vs_analytic / std::max(rep192.max_rel_error_vs_analytic, 1e-300);
  const double dt = elapsed(t0);
  report(6, "transport theorem check",
         rep96.max_rel_error_vs_analytic < 0.02 && rep96.max_rel_error_quotient < 0.02 &&
             ratio >= 1.7 && dt < 30.0,
         fmt("rel err %.2e, refinement ratio %.2f, %.1f s", rep96.max_rel_error_vs_analytic,
             ratio, dt));
}

void criterion_7() {
  double prev = std::numeric_limits<double>::max();
  bool monotone = true;
  std::string series;
  for (double a : {0.1, 1.0, 10.0, 100.0}) {
    auto cfg = SimulationConfig::parse(fmt("scenario = sheared_block\nfluid.slip = %g\n", a));
    auto setup = build_scenario(cfg);
    const Trajectory traj = run_simulation(setup.cfg, setup.models, setup.init);
    double avg = 0.0;
    for (int k = 1; k <= traj.steps_completed(); ++k)
      avg += check_coupling(traj, k).tangential_jump_rms;
    avg /= std::max(1, traj.steps_completed());
    series += fmt("%.3e ", avg);
    if (avg >= prev) monotone = false;
    prev = avg;
  }
  report(7, "slip monotonicity", monotone, "time-averaged tangential jump: " + series);
}

void criterion_8() {
  // (a) stress-free surrogate at rest
  auto cfg_a = SimulationConfig::parse("scenario = resting_block\n");
  auto setup_a = build_scenario(cfg_a);
  const Trajectory ta = run_simulation(setup_a.cfg, setup_a.models, setup_a.init);
  double max_disp = 0.0, max_v = 0.0;
  const Field2& start = ta.records[0].eta;
  for (int k = 1; k <= ta.steps_completed(); ++k) {
    max_disp = std::max(max_disp, (ta.records[k].eta.x - start.x).cwiseAbs().maxCoeff());
    max_disp = std::max(max_disp, (ta.records[k].eta.y - start.y).cwiseAbs().maxCoeff());
    max_v = std::max(max_v, ta.records[k].v_full.x.cwiseAbs().maxCoeff());
    max_v = std::max(max_v, ta.records[k].v_full.y.cwiseAbs().maxCoeff());
  }
  const bool a_ok = ta.steps_completed() == 50 && max_disp < 1e-8 && max_v < 1e-8;

  // (b) model energy nonincreasing on a force-free run
  auto cfg_b = SimulationConfig::parse("scenario = release_disc\n");
  auto setup_b = build_scenario(cfg_b);
  const Trajectory tb = run_simulation(setup_b.cfg, setup_b.models, setup_b.init);
  bool b_ok = tb.abort == AbortReason::None;
  double prev = std::numeric_limits<double>::max();
  for (int k = 0; k <= tb.steps_completed(); ++k) {
    const double e = tb.records[k].budget.elastic + tb.records[k].budget.solid_regularizer;
    if (e > prev * (1.0 + 1e-12)) b_ok = false;
    prev = e;
  }
  report(8, "trivial equilibria and energy decay", a_ok && b_ok,
         fmt("rest: disp %.1e, |v| %.1e over %d steps; release run E monotone %s", max_disp,
             max_v, ta.steps_completed(), b_ok ? "yes" : "no"));
}

void criterion_9(const MainRun& run) {
  double cn = 0.0, sep = std::numeric_limits<double>::max();
  for (int k = 0; k <= run.traj.steps_completed(); ++k) {
    cn = std::max(cn, std::abs(run.traj.records[k].cn_residual));
    sep = std::min(sep, run.traj.records[k].min_sep);
  }
  const bool main_ok = cn < 1e-6 && sep > 0.0;

  auto cfg = SimulationConfig::parse("scenario = falling_disc_contact\n");
  auto setup = build_scenario(cfg);
  const Trajectory tc = run_simulation(setup.cfg, setup.models, setup.init);
  double cn_c = 0.0;
  for (int k = 0; k <= tc.steps_completed(); ++k)
    cn_c = std::max(cn_c, std::abs(tc.records[k].cn_residual));
  const bool contact_ok = tc.abort == AbortReason::ContactImminent && cn_c <= 1e-4;

  report(9, "Ciarlet-Necas and no-contact",
         main_ok && contact_ok,
         fmt("run cn %.1e sep %.4f; contact abort %s after %d steps, cn %.1e", cn, sep,
             tc.abort == AbortReason::ContactImminent ? "yes" : "NO", tc.steps_completed(),
             cn_c));
}

// ---------------------------------------------------------------------------
// criterion 10: independent optimizer oracle on the 8x8 / 24x24 single step

struct IndependentResult {
  Field2 eta;
  Vec v;
  double objective = 0.0;
};

// diagonally preconditioned Barzilai-Borwein descent on the quadratic-penalty
// formulation; shares only the objective/constraint evaluations with the
// production path, not the solver
IndependentResult independent_minimize(const StepProblem& problem, const Field2& eta0) {
  const int n_eta = (int)eta0.size() * 2;
  const int n_v = problem.n_velocity_dofs();
  const double tau = problem.config().dt_tau;

  Vec z(n_eta + n_v);
  z.head(n_eta) = eta0.flatten();
  z.tail(n_v).setZero();

  // diagonal preconditioner from the quadratic blocks
  Vec diag(n_eta + n_v);
  {
    const SolidGrid& g = problem.inputs().eta_prev->grid();
    const double h = problem.config().h_delay;
    const double rho_s = problem.models().mat.rho_s;
    Vec dm(2 * g.node_count());
    for (int i = 0; i < g.node_count(); ++i)
      dm[i] = dm[g.node_count() + i] = rho_s / (h * tau) * g.node_weight[i];
    diag.head(n_eta) = dm;
    Vec dv = Vec::Zero(n_v);
    const SpMat& hmat = problem.v_hessian();
    for (int k = 0; k < hmat.outerSize(); ++k)
      for (SpMat::InnerIterator it(hmat, k); it; ++it)
        if (it.row() == it.col()) dv[it.row()] = it.value();
    diag.tail(n_v) = dv.cwiseMax(1e-12 * dv.maxCoeff());
  }

  auto unpack_eta = [&](const Vec& zz) { return Field2::from_flat(zz.head(n_eta)); };

  double mu = 1.0;
  double fz = 0.0;
  for (int level = 0; level < 7; ++level, mu *= 100.0) {
    auto eval_f = [&](const Vec& zz) {
      const Field2 e = unpack_eta(zz);
      DeformationField def(problem.inputs().eta_prev->grid_ptr(),
                           problem.inputs().eta_prev->ops_ptr());
      def.set_positions(e);
      if (def.min_det() <= 1e-4) return std::numeric_limits<double>::infinity();
      const Vec c = problem.constraint_residual(e, zz.tail(n_v));
      return problem.objective(e, zz.tail(n_v)) + 0.5 * mu * c.squaredNorm();
    };
    auto eval_g = [&](const Vec& zz) {
      const Field2 e = unpack_eta(zz);
      const Vec v = zz.tail(n_v);
      const Vec c = problem.constraint_residual(e, v);
      Field2 ge = problem.objective_eta_gradient(e, v);
      const InterfaceGeometry& ifc = *problem.inputs().interface;
      for (int q = 0; q < problem.n_coupling(); ++q) {
        const int node = ifc.node_index[q];
        ge.x[node] -= mu * c[q] * ifc.normals[q].x() / tau;
        ge.y[node] -= mu * c[q] * ifc.normals[q].y() / tau;
      }
      Vec gg(n_eta + n_v);
      gg.head(n_eta) = ge.flatten();
      gg.tail(n_v) =
          problem.objective_v_gradient(e, v) + problem.constraints().transpose() * (mu * c);
      return gg;
    };

    Vec g = eval_g(z);
    fz = eval_f(z);
    double step = 1e-3;
    Vec z_prev = z, g_prev = g;
    for (int it = 0; it < 4000; ++it) {
      Vec dir = -g.cwiseQuotient(diag);
      // safeguarded step
      double alpha = step;
      Vec zt;
      double ft = 0.0;
      bool ok = false;
      for (int bt = 0; bt < 60; ++bt) {
        zt = z + alpha * dir;
        ft = eval_f(zt);
        if (ft < fz) {
          ok = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!ok) break;
      const Vec gt = eval_g(zt);
      // BB step length for the next iteration (preconditioned)
      const Vec s = zt - z, y = gt - g;
      const double sy = s.dot(y);
      if (sy > 1e-300) step = s.dot(diag.cwiseProduct(s)) / sy;
      step = std::clamp(step, 1e-8, 1e3);
      z_prev = z;
      g_prev = g;
      z = zt;
      g = gt;
      fz = ft;
      if (g.cwiseQuotient(diag).dot(g) < 1e-20 * (1.0 + std::abs(fz))) break;
    }
  }

  IndependentResult out;
  out.eta = unpack_eta(z);
  out.v = z.tail(n_v);
  out.objective = problem.objective(out.eta, out.v);
  return out;
}

void criterion_10() {
  auto cfg = SimulationConfig::parse("scenario = toy_step\n");
  auto setup = build_scenario(cfg);
  InterfaceGeometry interface = build_interface(setup.init.eta0);
  CellClassification cls = classify_cells(interface, setup.fgrid->spec);
  FluidDiscretization fd(setup.fgrid, cls);
  FlowMap fm = FlowMap::init(fd);
  DelayWindow window = initial_delay_window(setup.cfg, setup.init.eta_star, setup.init.v0, fm);
  StepInputs in;
  in.eta_prev = &setup.init.eta0;
  in.interface = &interface;
  in.cls = &cls;
  in.fgrid = setup.fgrid;
  in.w_s = &window.w_s[0];
  in.w_f = &window.w_f[0];
  in.sample_pos = &fm.pos;
  in.sample_weight = &fm.weight;
  in.f_slot = setup.cfg.force.slot_average(0, setup.cfg.dt_tau);
  in.step_index = 1;
  in.time = setup.cfg.dt_tau;
  StepProblem problem(in, setup.cfg, setup.models);

  const StepResult res = solve_step(problem, setup.cfg.solver);
  const IndependentResult ind = independent_minimize(problem, setup.init.eta0.positions());

  const double obj_rel = rel_err(res.j_value, ind.objective);

  // discrete energy norm of the solution difference
  const SolidGrid& g = *setup.sgrid;
  const double tau = setup.cfg.dt_tau, h = setup.cfg.h_delay;
  SpMat k = (setup.models.mat.rho_s / (h * tau)) * mass_form_matrix(g);
  k = (k + SpMat((2.0 / tau) * dissipation_form_matrix(setup.init.eta0))).pruned();
  if (setup.cfg.kappa > 0) {
    const double c =
        2.0 * (setup.cfg.kappa / tau + std::pow(setup.cfg.kappa, setup.cfg.a0_exponent));
    k = (k + SpMat(c * highorder_form_matrix(g, *setup.ops, setup.cfg.reg_order))).pruned();
  }
  const Vec de = res.eta_pos.flatten() - ind.eta.flatten();
  const Vec dv = res.v_active - ind.v;
  const double norm2 = de.dot(k * de) + dv.dot(problem.v_hessian() * dv);
  const double sol_dist = std::sqrt(std::max(norm2, 0.0));

  report(10, "independent optimizer oracle", obj_rel < 1e-6 && sol_dist < 1e-4,
         fmt("objective rel diff %.2e, energy-norm distance %.2e", obj_rel, sol_dist));
}

void criterion_11(const MainRun& run) {
  const fs::path root = fs::temp_directory_path() / "varislip_acceptance_det";
  fs::remove_all(root);
  fs::create_directories(root);

  const VerificationReport rep1 = run_verification(run.traj);
  write_outputs(run.traj, rep1, run.config, (root / "a").string());

  auto setup = build_scenario(run.config);
  const Trajectory traj2 = run_simulation(setup.cfg, setup.models, setup.init);
  const VerificationReport rep2 = run_verification(traj2);
  write_outputs(traj2, rep2, run.config, (root / "b").string());

  bool identical = true;
  std::string first_diff;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    std::ifstream fa(entry.path(), std::ios::binary);
    std::ifstream fb(root / "b" / entry.path().filename(), std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    if (sa.str() != sb.str()) {
      identical = false;
      first_diff = entry.path().filename().string();
      break;
    }
  }
  report(11, "determinism (byte-identical reruns)", identical,
         identical ? "all output files identical" : "differs: " + first_diff);
  fs::remove_all(root);
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");
  criterion_1();

  MainRun run = run_falling_disc();
  double tol = 0.0;
  for (int k = 1; k <= run.traj.steps_completed(); ++k)
    tol = std::max(tol, 1e-9 * std::max(1.0, std::abs(run.traj.records[k].budget.j_warm)));

  criterion_2(run, tol);
  criterion_3(run, tol);
  criterion_4(run);
  criterion_5(run);
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9(run);
  criterion_10();
  criterion_11(run);

  std::printf("%s: %d of 11 criteria failed\n", g_failures == 0 ? "SUCCESS" : "FAILURE",
              g_failures);
  return g_failures;
}
