#include "varislip/scenario.hpp"

#include <cmath>

namespace varislip {

Vec2 disc_map(const Vec2& u01, const Vec2& center, double radius, double gamma) {
  // [0,1]^2 -> [-gamma,gamma]^2 -> disc, rescaled so the corner points sit at
  // distance `radius` from the center
  const double a = gamma * (2.0 * u01.x() - 1.0);
  const double b = gamma * (2.0 * u01.y() - 1.0);
  const Vec2 d(a * std::sqrt(1.0 - 0.5 * b * b), b * std::sqrt(1.0 - 0.5 * a * a));
  const double s = gamma * std::sqrt(2.0 - gamma * gamma);
  return center + (radius / s) * d;
}

ScenarioSetup build_scenario(const SimulationConfig& config) {
  ScenarioSetup s;
  const std::string name = config.scenario();

  GridSpec container;
  container.x0 = config.get_double("fluid.x0");
  container.y0 = config.get_double("fluid.y0");
  container.lx = config.get_double("fluid.lx");
  container.ly = config.get_double("fluid.ly");
  container.mx = config.get_int("fluid.mx");
  container.my = config.get_int("fluid.my");

  if (name == "shrinking_disc_transport") {
    s.is_transport = true;
    const double r0 = config.get_double("scenario.r0");
    const double rate = config.get_double("scenario.rate");
    const Vec2 c(config.get_double("scenario.cx"), config.get_double("scenario.cy"));
    const double cell = container.cell_dx();

    TransportScenario& t = s.transport;
    t.grid = container;
    t.t0 = config.get_double("scenario.t0");
    t.t1 = config.get_double("scenario.t1");
    t.n_times = config.get_int("scenario.n_times");
    t.u = [](double, const Vec2&) { return 1.0; };
    t.du_dt = [](double, const Vec2&) { return 0.0; };
    // polygon resolution tied to the grid, fixed over the scenario
    const int m = std::max(16, (int)std::llround(2.0 * M_PI * r0 / cell));
    t.interface_at = [r0, rate, c, m](double time) {
      const double r = r0 + rate * time;
      std::vector<Vec2> poly(m);
      for (int k = 0; k < m; ++k) {
        const double th = 2.0 * M_PI * k / m;
        poly[k] = c + r * Vec2(std::cos(th), std::sin(th));
      }
      return poly;
    };
    // the disc is the solid: fluid shrinks inward speed -rate along the
    // outer normal of the fluid domain (pointing into the disc)
    t.normal_speed = [rate](double, const Vec2&) { return -rate; };
    t.analytic_rate = [r0, rate](double time) {
      return -2.0 * M_PI * (r0 + rate * time) * rate;
    };
    return s;
  }

  auto sgrid = std::make_shared<SolidGrid>(
      SolidGrid::make(config.get_int("solid.nx"), config.get_int("solid.ny"),
                      config.get_double("solid.extent_x"), config.get_double("solid.extent_y")));
  auto ops = std::make_shared<DiffOps>(DiffOps::build(*sgrid));
  s.sgrid = sgrid;
  s.ops = ops;
  s.fgrid = std::make_shared<FluidGrid>(FluidGrid::make(container));
  s.cfg = config.step_config();
  s.models = config.models();

  const std::string shape = config.get_string("scenario.shape");
  const Vec2 center(config.get_double("scenario.cx"), config.get_double("scenario.cy"));

  DeformationField eta0(sgrid, ops);
  Field2 pos(sgrid->node_count());
  if (shape == "disc") {
    const double radius = config.get_double("scenario.radius");
    const double gamma = config.get_double("scenario.gamma");
    for (int i = 0; i < sgrid->nx; ++i)
      for (int j = 0; j < sgrid->ny; ++j) {
        const Vec2 u(i / double(sgrid->nx - 1), j / double(sgrid->ny - 1));
        pos.set(sgrid->node(i, j), disc_map(u, center, radius, gamma));
      }
  } else if (shape == "block") {
    const Vec2 offset = center - 0.5 * Vec2(sgrid->extent_x, sgrid->extent_y);
    for (int i = 0; i < sgrid->nx; ++i)
      for (int j = 0; j < sgrid->ny; ++j)
        pos.set(sgrid->node(i, j), sgrid->node_pos(i, j) + offset);
  } else {
    throw ValidationError("unknown scenario.shape '" + shape + "'");
  }
  eta0.set_positions(std::move(pos));
  if (eta0.min_det() <= 0)
    throw ValidationError("scenario: initial deformation has nonpositive Jacobian");

  s.init.eta0 = eta0;
  s.init.eta_star = Field2(sgrid->node_count());

  CellClassification cls = classify_cells(build_interface(eta0), container);
  VelocityField v0 = VelocityField::zero(s.fgrid, cls);
  s.init.v0 = project_divergence_free(v0, cls);
  return s;
}

}  // namespace varislip
