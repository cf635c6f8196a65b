#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <random>

#include "test_util.hpp"
#include "varislip/scenario.hpp"

using namespace varislip;
using namespace varislip::testing;

namespace {

ScenarioSetup toy(const std::string& extra = "") {
  return build_scenario(SimulationConfig::parse("scenario = toy_step\n" + extra));
}

struct ToyStep {
  ScenarioSetup setup;
  CellClassification cls;
  InterfaceGeometry interface;
  FlowMap fm;
  DelayWindow window;
  StepInputs in;

  explicit ToyStep(const std::string& extra = "") : setup(toy(extra)) {
    interface = build_interface(setup.init.eta0);
    cls = classify_cells(interface, setup.fgrid->spec);
    FluidDiscretization fd(setup.fgrid, cls);
    fm = FlowMap::init(fd);
    window = initial_delay_window(setup.cfg, setup.init.eta_star, setup.init.v0, fm);
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
  }
};

}  // namespace

TEST_CASE("warm start: rate terms vanish, objective is energy plus regularizer") {
  ToyStep t("force.x = 0\nforce.y = 0\n");
  StepProblem problem(t.in, t.setup.cfg, t.setup.models);
  const Vec v0 = Vec::Zero(problem.n_velocity_dofs());
  const double jw = problem.objective(t.setup.init.eta0.positions(), v0);
  const double e = eval_energy(t.setup.init.eta0, t.setup.models.mat,
                               t.setup.cfg.regularizer()).total;
  CHECK(rel_err(jw, e) < 1e-13);
  const Vec c = problem.constraint_residual(t.setup.init.eta0.positions(), v0);
  CHECK(c.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("constraint bookkeeping identity") {
  ToyStep t;
  StepProblem problem(t.in, t.setup.cfg, t.setup.models);
  const GridSpec& spec = t.setup.fgrid->spec;

  // wall rows: one per (active wall-layer cell, touched wall); corner cells
  // touch two walls and contribute two rows
  int wall_rows = 0;
  for (int i = 0; i < spec.mx; ++i)
    for (int j = 0; j < spec.my; ++j) {
      if (!t.cls.is_active(spec.cell_index(i, j))) continue;
      if (i == 0 || i == spec.mx - 1) ++wall_rows;
      if (j == 0 || j == spec.my - 1) ++wall_rows;
    }
  int scalar_cells = 0;
  for (int c = 0; c < spec.cell_count(); ++c)
    if (t.cls.is_active(c) && t.cls.fluid_fraction[c] >= kMinScalarFraction) ++scalar_cells;

  CHECK(problem.n_coupling() == (int)t.interface.size());
  CHECK(problem.n_wall() == wall_rows);
  CHECK(problem.n_divergence() == scalar_cells);
  CHECK(problem.n_constraints() ==
        problem.n_coupling() + problem.n_wall() + problem.n_divergence());
}

TEST_CASE("objective matches a from-scratch recomputation from module forms") {
  ToyStep t;
  StepProblem problem(t.in, t.setup.cfg, t.setup.models);
  std::mt19937_64 rng(17);

  const Field2& prev = t.setup.init.eta0.positions();
  Field2 eta = prev;
  std::uniform_real_distribution<double> unif(-1e-3, 1e-3);
  for (Eigen::Index n = 0; n < eta.size(); ++n) {
    eta.x[n] += unif(rng);
    eta.y[n] += unif(rng);
  }
  Vec v(problem.n_velocity_dofs());
  for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = unif(rng);

  const StepConfig& cfg = t.setup.cfg;
  const ModelBundle& models = t.setup.models;
  const double tau = cfg.dt_tau, h = cfg.h_delay;

  DeformationField eta_f(t.setup.sgrid, t.setup.ops);
  eta_f.set_positions(eta);
  double expected = eval_energy(eta_f, models.mat, cfg.regularizer()).total;

  Field2 rate{(eta.x - prev.x) / tau, (eta.y - prev.y) / tau};
  expected += tau * eval_dissipation(t.setup.init.eta0, rate, models.mat, cfg.regularizer());

  FluidDiscretization fd(t.setup.fgrid, t.cls);
  VelocityField vf = VelocityField::zero(t.setup.fgrid, t.cls);
  vf.values = fd.extend_full(v);
  std::vector<Vec2> rate_bd(t.interface.size());
  for (size_t q = 0; q < t.interface.size(); ++q)
    rate_bd[q] = rate.at(t.interface.node_index[q]);
  expected += tau * slip_boundary_form(vf, t.interface, rate_bd, models.fluid);

  const Vec& w = t.setup.sgrid->node_weight;
  expected += models.mat.rho_s * tau / (2 * h) *
              ((rate.x - t.window.w_s[0].x).cwiseAbs2().dot(w) +
               (rate.y - t.window.w_s[0].y).cwiseAbs2().dot(w));
  expected -= tau * models.mat.rho_s *
              (t.in.f_slot.x() * rate.x.dot(w) + t.in.f_slot.y() * rate.y.dot(w));

  expected += 0.5 * tau * models.fluid.nu * v.dot(fd.eps_form() * v);
  expected += 0.5 * cfg.kappa * tau * v.dot(fd.highorder_form(models.fluid.k0_order) * v);
  double inertia = 0.0, force = 0.0;
  for (size_t s = 0; s < t.fm.pos.size(); ++s) {
    const Vec2 vs = build_interp(t.setup.fgrid->spec, vf.active, t.fm.pos[s]).apply(vf.values);
    inertia += t.fm.weight[(Eigen::Index)s] *
               (vs - t.window.w_f[0].at((Eigen::Index)s)).squaredNorm();
    force += t.fm.weight[(Eigen::Index)s] * t.in.f_slot.dot(vs);
  }
  expected += models.fluid.rho_f * tau / (2 * h) * inertia;
  expected -= tau * models.fluid.rho_f * force;

  CHECK(rel_err(problem.objective(eta, v), expected) < 1e-12);
}

TEST_CASE("objective gradients match central differences") {
  ToyStep t;
  StepProblem problem(t.in, t.setup.cfg, t.setup.models);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unif(-1e-3, 1e-3);

  Field2 eta = t.setup.init.eta0.positions();
  for (Eigen::Index n = 0; n < eta.size(); ++n) {
    eta.x[n] += unif(rng);
    eta.y[n] += unif(rng);
  }
  Vec v(problem.n_velocity_dofs());
  for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = unif(rng) * 100;

  const Field2 ge = problem.objective_eta_gradient(eta, v);
  const Vec gv = problem.objective_v_gradient(eta, v);

  for (int d = 0; d < 6; ++d) {
    Field2 dir = random_field(eta.size(), rng);
    double nrm = std::sqrt(dir.x.squaredNorm() + dir.y.squaredNorm());
    dir.x /= nrm;
    dir.y /= nrm;
    const double eps = 1e-7;
    const double fp = problem.objective(Field2{eta.x + eps * dir.x, eta.y + eps * dir.y}, v);
    const double fm2 = problem.objective(Field2{eta.x - eps * dir.x, eta.y - eps * dir.y}, v);
    CHECK(rel_err((fp - fm2) / (2 * eps), ge.x.dot(dir.x) + ge.y.dot(dir.y)) < 1e-5);

    // the objective is exactly quadratic in v, so a large step avoids the
    // cancellation of differencing a tiny slope out of an O(1) value
    Vec dv = Vec::Random(v.size()).normalized();
    const double epsv = 1e-2;
    const double gp = problem.objective(eta, (v + epsv * dv).eval());
    const double gm = problem.objective(eta, (v - epsv * dv).eval());
    CHECK(std::abs((gp - gm) / (2 * epsv) - gv.dot(dv)) < 1e-9 + 1e-6 * gv.norm());
  }
}

TEST_CASE("solve_step: trivial equilibrium returns the warm start") {
  ToyStep t(
      "solid.model = strain_only\n"
      "force.x = 0\nforce.y = 0\n");
  StepProblem problem(t.in, t.setup.cfg, t.setup.models);
  const StepResult res = solve_step(problem, t.setup.cfg.solver);
  CHECK(res.status == StepStatus::Converged);
  CHECK(res.inner_iterations <= 1);
  const Field2& start = t.setup.init.eta0.positions();
  CHECK((res.eta_pos.x - start.x).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((res.eta_pos.y - start.y).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(res.v_active.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("solve_step on the forced toy problem") {
  ToyStep t;
  StepProblem problem(t.in, t.setup.cfg, t.setup.models);
  const StepResult res = solve_step(problem, t.setup.cfg.solver);

  CHECK(res.status == StepStatus::Converged);
  CHECK(res.comparison_gap <= 1e-9 * std::max(1.0, std::abs(res.j_warm)));
  CHECK(res.max_coupling_residual < 1e-9);
  CHECK(res.max_div_residual < 1e-9);
  CHECK(res.max_wall_residual < 1e-9);
  CHECK(res.v_active.cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("hydrostatic pressure sign under gravity") {
  ToyStep t("force.x = 0\nforce.y = -1\nsolid.rho_s = 1\n");
  StepProblem problem(t.in, t.setup.cfg, t.setup.models);
  const StepResult res = solve_step(problem, t.setup.cfg.solver);
  const auto& fd = problem.fluid();
  const GridSpec& spec = t.setup.fgrid->spec;
  double sxy = 0, sy2 = 0, ybar = 0, pbar = 0, wsum = 0;
  for (int r = 0; r < problem.n_divergence(); ++r) {
    const int c = fd.scalar_cells()[r];
    const double y = spec.cell_center(c / spec.my, c % spec.my).y();
    const double w = fd.scalar_weight()[r];
    ybar += w * y;
    pbar += w * res.pressure[r];
    wsum += w;
  }
  ybar /= wsum;
  pbar /= wsum;
  for (int r = 0; r < problem.n_divergence(); ++r) {
    const int c = fd.scalar_cells()[r];
    const double y = spec.cell_center(c / spec.my, c % spec.my).y();
    const double w = fd.scalar_weight()[r];
    sxy += w * (y - ybar) * (res.pressure[r] - pbar);
    sy2 += w * (y - ybar) * (y - ybar);
  }
  const double slope = sxy / sy2;  // expected: dp/dy = rho_f f_y = -1
  CHECK(slope == doctest::Approx(-1.0).epsilon(0.15));
}

TEST_CASE("flow map updates") {
  GridSpec spec{0, 0, 1, 1, 24, 24};
  auto grid = std::make_shared<FluidGrid>(FluidGrid::make(spec));
  CellClassification cls;
  cls.grid = spec;
  cls.labels.assign(spec.cell_count(), CellLabel::Fluid);
  cls.fluid_fraction.assign(spec.cell_count(), 1.0);
  cls.fluid_area = 1.0;
  FluidDiscretization fd(grid, cls);

  SUBCASE("constant velocity translates samples, keeps determinants") {
    FlowMap fm = FlowMap::init(fd);
    VelocityField v = VelocityField::zero(grid, cls);
    for (int c = 0; c < spec.cell_count(); ++c) v.values.set(c, Vec2(0.3, -0.1));
    const FlowMap fm2 = update_flow_map(fm, v, 0.01);
    for (size_t s = 0; s < fm.size(); ++s)
      CHECK((fm2.pos[s] - fm.pos[s] - Vec2(0.003, -0.001)).norm() < 1e-15);
    CHECK(fm2.min_det() == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(fm2.max_det() == doctest::Approx(1.0).epsilon(1e-13));
  }

  SUBCASE("zero velocity is a bitwise fixed point") {
    FlowMap fm = FlowMap::init(fd);
    VelocityField v = VelocityField::zero(grid, cls);
    const FlowMap fm2 = update_flow_map(fm, v, 0.01);
    for (size_t s = 0; s < fm.size(); ++s) {
      CHECK(fm2.pos[s].x() == fm.pos[s].x());
      CHECK(fm2.pos[s].y() == fm.pos[s].y());
    }
  }

  SUBCASE("rigid rotation: determinant drift stays within 1e-4 over 100 steps") {
    // samples in the interior, where bilinear interpolation of the linear
    // field is exact; the Euler composition drift is (1 + tau^2 w^2)^k
    FlowMap fm = FlowMap::init(fd);
    FlowMap inner;
    inner.weight = Vec();
    std::vector<double> wts;
    for (size_t s = 0; s < fm.pos.size(); ++s)
      if ((fm.pos[s] - Vec2(0.5, 0.5)).lpNorm<Eigen::Infinity>() < 0.3) {
        inner.pos.push_back(fm.pos[s]);
        wts.push_back(1.0);
      }
    inner.ref = inner.pos;
    inner.weight = Eigen::Map<Vec>(wts.data(), (Eigen::Index)wts.size());
    inner.det = Vec::Ones((Eigen::Index)wts.size());
    inner.sigma_max = Vec::Ones((Eigen::Index)wts.size());
    inner.reset_reference(1.6 * spec.cell_dx());

    const double omega = 0.5;
    VelocityField v = VelocityField::zero(grid, cls);
    for (int i = 0; i < spec.mx; ++i)
      for (int j = 0; j < spec.my; ++j) {
        const Vec2 p = spec.cell_center(i, j) - Vec2(0.5, 0.5);
        v.values.set(spec.cell_index(i, j), omega * Vec2(-p.y(), p.x()));
      }
    for (int k = 0; k < 100; ++k) inner = update_flow_map(inner, v, 1e-3);
    CHECK(inner.min_det() > 1.0 - 1e-4);
    CHECK(inner.max_det() < 1.0 + 1e-4);
  }

  SUBCASE("incompressible shear keeps unit determinants") {
    FlowMap fm = FlowMap::init(fd);
    FlowMap inner;
    std::vector<double> wts;
    for (size_t s = 0; s < fm.pos.size(); ++s)
      if ((fm.pos[s] - Vec2(0.5, 0.5)).lpNorm<Eigen::Infinity>() < 0.3) {
        inner.pos.push_back(fm.pos[s]);
        wts.push_back(1.0);
      }
    inner.ref = inner.pos;
    inner.weight = Eigen::Map<Vec>(wts.data(), (Eigen::Index)wts.size());
    inner.det = Vec::Ones((Eigen::Index)wts.size());
    inner.sigma_max = Vec::Ones((Eigen::Index)wts.size());
    inner.reset_reference(1.6 * spec.cell_dx());
    VelocityField v = VelocityField::zero(grid, cls);
    for (int i = 0; i < spec.mx; ++i)
      for (int j = 0; j < spec.my; ++j)
        v.values.set(spec.cell_index(i, j), Vec2(0.8 * spec.cell_center(i, j).y(), 0.0));
    for (int k = 0; k < 100; ++k) inner = update_flow_map(inner, v, 1e-3);
    CHECK(inner.min_det() > 0.99);
    CHECK(inner.max_det() < 1.01);
  }

  SUBCASE("samples escaping the region raise") {
    FlowMap fm = FlowMap::init(fd);
    VelocityField v = VelocityField::zero(grid, cls);
    for (int c = 0; c < spec.cell_count(); ++c) v.values.set(c, Vec2(50.0, 0.0));
    CHECK_THROWS_AS(update_flow_map(fm, v, 1.0), SampleEscaped);
  }
}

TEST_CASE("delay windows") {
  ToyStep t;

  SUBCASE("first window carries the initial data in every slot") {
    CHECK(t.window.slots == t.setup.cfg.slots_per_window());
    for (int s = 0; s < t.window.slots; ++s) {
      CHECK((t.window.w_s[s].x - t.setup.init.eta_star.x).cwiseAbs().maxCoeff() == 0.0);
      CHECK(t.window.w_f[s].x.cwiseAbs().maxCoeff() == 0.0);  // v0 = 0
    }
  }

  SUBCASE("quiescent window advances to zero slots") {
    const int slots = t.setup.cfg.slots_per_window();
    std::vector<Field2> rates(slots, Field2(t.setup.sgrid->node_count()));
    std::vector<Field2> samples(slots, Field2((Eigen::Index)t.fm.size()));
    const DelayWindow w = advance_delay_window(rates, samples, 0.01, t.setup.cfg);
    for (int s = 0; s < slots; ++s) {
      CHECK(w.w_s[s].x.cwiseAbs().maxCoeff() == 0.0);
      CHECK(w.w_f[s].y.cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK_THROWS_AS(
        advance_delay_window({Field2(4)}, {Field2(4)}, 0.0, t.setup.cfg),
        ValidationError);
  }
}

TEST_CASE("run_simulation basics") {
  SUBCASE("zero steps returns only the initial state") {
    auto setup = toy("step.t_end = 0\n");
    const Trajectory traj = run_simulation(setup.cfg, setup.models, setup.init);
    CHECK(traj.steps_completed() == 0);
    CHECK(traj.records.size() == 1);
  }

  SUBCASE("forced run: comparison inequality and window energy bookkeeping") {
    auto setup = toy("step.t_end = 0.02\n");  // two delay windows
    const Trajectory traj = run_simulation(setup.cfg, setup.models, setup.init);
    REQUIRE(traj.steps_completed() == setup.cfg.total_steps());
    double tol = 0.0;
    for (int k = 1; k <= traj.steps_completed(); ++k)
      tol = std::max(tol, 1e-9 * std::max(1.0, std::abs(traj.records[k].budget.j_warm)));
    for (int k = 1; k <= traj.steps_completed(); ++k)
      CHECK(traj.records[k].budget.comparison_gap <= tol);

    // pulled-back slot energy vs the Eulerian velocity energy over the window
    REQUIRE(traj.windows.size() >= 2);
    const DelayWindow& w = traj.windows[1];
    double pulled = 0.0, eulerian = 0.0;
    for (int s = 0; s < w.slots; ++s) {
      pulled += setup.cfg.dt_tau * (w.w_f[s].x.cwiseAbs2().dot(traj.sample_weight) +
                                    w.w_f[s].y.cwiseAbs2().dot(traj.sample_weight));
      const TrajectoryRecord& rec = traj.records[s + 1];
      FluidDiscretization fd(traj.fgrid, rec.cls_used);
      const Vec va = fd.restrict_active(rec.v_full);
      const int na = fd.n_active();
      eulerian += setup.cfg.dt_tau * (va.head(na).cwiseAbs2().dot(fd.cell_weight()) +
                                      va.tail(na).cwiseAbs2().dot(fd.cell_weight()));
    }
    if (eulerian > 1e-16) CHECK(std::abs(pulled - eulerian) / eulerian < 2e-2);
  }

  SUBCASE("determinism: identical runs are bitwise identical") {
    auto s1 = toy();
    auto s2 = toy();
    const Trajectory a = run_simulation(s1.cfg, s1.models, s1.init);
    const Trajectory b = run_simulation(s2.cfg, s2.models, s2.init);
    REQUIRE(a.steps_completed() == b.steps_completed());
    for (int k = 0; k <= a.steps_completed(); ++k) {
      CHECK(std::memcmp(a.records[k].eta.x.data(), b.records[k].eta.x.data(),
                        sizeof(double) * a.records[k].eta.x.size()) == 0);
      CHECK(std::memcmp(a.records[k].v_full.x.data(), b.records[k].v_full.x.data(),
                        sizeof(double) * a.records[k].v_full.x.size()) == 0);
    }
  }

  SUBCASE("interpolants agree with the nodal records at grid times") {
    auto setup = toy();
    const Trajectory traj = run_simulation(setup.cfg, setup.models, setup.init);
    const double tau = setup.cfg.dt_tau;
    for (int k = 1; k < traj.steps_completed(); ++k) {
      const Field2 aff = traj.eta_affine(k * tau);
      const Field2 left = traj.eta_const_left(k * tau);
      const Field2 right = traj.eta_const_right(k * tau - 0.5 * tau);
      CHECK((aff.x - traj.records[k].eta.x).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((left.x - traj.records[k].eta.x).cwiseAbs().maxCoeff() == 0.0);
      CHECK((right.x - traj.records[k].eta.x).cwiseAbs().maxCoeff() == 0.0);
    }
  }
}
