#pragma once

#include "varislip/config.hpp"
#include "varislip/diagnostics.hpp"

namespace varislip {

struct ScenarioSetup {
  std::shared_ptr<const SolidGrid> sgrid;
  std::shared_ptr<const DiffOps> ops;
  std::shared_ptr<const FluidGrid> fgrid;
  StepConfig cfg;
  ModelBundle models;
  InitialData init;
  bool is_transport = false;
  TransportScenario transport;
};

ScenarioSetup build_scenario(const SimulationConfig& config);

// smooth square-to-disc embedding used by the disc scenarios; gamma < 1 keeps
// the corner Jacobians away from zero
Vec2 disc_map(const Vec2& unit_square_point, const Vec2& center, double radius, double gamma);

}  // namespace varislip
