#pragma once

#include <cmath>
#include <random>

#include "varislip/solid_model.hpp"

namespace varislip::testing {

struct GridBundle {
  std::shared_ptr<const SolidGrid> grid;
  std::shared_ptr<const DiffOps> ops;
};

inline GridBundle make_grid(int n, double extent = 1.0) {
  auto g = std::make_shared<SolidGrid>(SolidGrid::make(n, n, extent, extent));
  auto d = std::make_shared<DiffOps>(DiffOps::build(*g));
  return {g, d};
}

// identity plus a few seeded low-frequency modes; amplitude small enough to
// keep det(grad eta) positive
inline DeformationField random_admissible(const GridBundle& gb, std::mt19937_64& rng,
                                          double amplitude = 0.02) {
  const SolidGrid& g = *gb.grid;
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double c[2][2][2][2];
  for (auto& a : c)
    for (auto& b : a)
      for (auto& d : b)
        for (double& e : d) e = amplitude * unif(rng);

  DeformationField eta(gb.grid, gb.ops);
  Field2 pos(g.node_count());
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j) {
      const Vec2 x = g.node_pos(i, j);
      Vec2 p = x;
      for (int pmode = 1; pmode <= 2; ++pmode)
        for (int qmode = 1; qmode <= 2; ++qmode) {
          const double sx = std::sin(M_PI * pmode * x.x() / g.extent_x);
          const double sy = std::sin(M_PI * qmode * x.y() / g.extent_y);
          const double cx = std::cos(M_PI * pmode * x.x() / g.extent_x);
          p.x() += c[0][0][pmode - 1][qmode - 1] * sx * sy +
                   c[0][1][pmode - 1][qmode - 1] * cx * sy * 0.5;
          p.y() += c[1][0][pmode - 1][qmode - 1] * sx * sy +
                   c[1][1][pmode - 1][qmode - 1] * sx * cx * 0.5;
        }
      pos.set(g.node(i, j), p);
    }
  eta.set_positions(std::move(pos));
  if (eta.min_det() <= 0.05) return random_admissible(gb, rng, 0.5 * amplitude);
  return eta;
}

inline Field2 random_field(Eigen::Index n, std::mt19937_64& rng, double amplitude = 1.0) {
  std::uniform_real_distribution<double> unif(-amplitude, amplitude);
  Field2 f(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    f.x[i] = unif(rng);
    f.y[i] = unif(rng);
  }
  return f;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

}  // namespace varislip::testing
