#include "varislip/solid_grid.hpp"

#include <cmath>

namespace varislip {

SolidGrid SolidGrid::make(int nx, int ny, double extent_x, double extent_y) {
  if (nx < 4 || ny < 4)
    throw ValidationError("SolidGrid: nx, ny must be >= 4 (second-gradient stencils)");
  if (extent_x <= 0 || extent_y <= 0)
    throw ValidationError("SolidGrid: extents must be positive");

  SolidGrid g;
  g.nx = nx;
  g.ny = ny;
  g.extent_x = extent_x;
  g.extent_y = extent_y;
  g.hx = extent_x / (nx - 1);
  g.hy = extent_y / (ny - 1);
  g.reference_area = extent_x * extent_y;

  g.boundary_mask.assign(g.node_count(), 0);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      if (i == 0 || j == 0 || i == nx - 1 || j == ny - 1) g.boundary_mask[g.node(i, j)] = 1;

  // CCW loop: bottom, right, top, left.  Inner normals: bottom edge -> +y, etc.
  for (int i = 0; i < nx - 1; ++i) g.boundary_loop.push_back(g.node(i, 0));
  for (int j = 0; j < ny - 1; ++j) g.boundary_loop.push_back(g.node(nx - 1, j));
  for (int i = nx - 1; i > 0; --i) g.boundary_loop.push_back(g.node(i, ny - 1));
  for (int j = ny - 1; j > 0; --j) g.boundary_loop.push_back(g.node(0, j));

  g.reference_normal.resize(g.boundary_loop.size());
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (size_t k = 0; k < g.boundary_loop.size(); ++k) {
    const int n = g.boundary_loop[k];
    const int i = n / ny, j = n % ny;
    Vec2 m = Vec2::Zero();
    if (j == 0) m += Vec2(0, 1);
    if (j == ny - 1) m += Vec2(0, -1);
    if (i == 0) m += Vec2(1, 0);
    if (i == nx - 1) m += Vec2(-1, 0);
    g.reference_normal[k] = (m.norm() > 1.5) ? Vec2(m.x() * inv_sqrt2, m.y() * inv_sqrt2)
                                             : m.normalized();
  }

  g.node_weight = Vec::Zero(g.node_count());
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      double w = g.hx * g.hy;
      if (i == 0 || i == nx - 1) w *= 0.5;
      if (j == 0 || j == ny - 1) w *= 0.5;
      g.node_weight[g.node(i, j)] = w;
    }
  return g;
}

namespace {

// 1D first/second derivative stencil rows, second order everywhere.
void d1_row(int i, int n, double h, std::vector<std::pair<int, double>>& row) {
  row.clear();
  if (i == 0) {
    row = {{0, -1.5 / h}, {1, 2.0 / h}, {2, -0.5 / h}};
  } else if (i == n - 1) {
    row = {{n - 1, 1.5 / h}, {n - 2, -2.0 / h}, {n - 3, 0.5 / h}};
  } else {
    row = {{i - 1, -0.5 / h}, {i + 1, 0.5 / h}};
  }
}

void d2_row(int i, int n, double h, std::vector<std::pair<int, double>>& row) {
  const double h2 = h * h;
  row.clear();
  if (i == 0) {
    row = {{0, 2.0 / h2}, {1, -5.0 / h2}, {2, 4.0 / h2}, {3, -1.0 / h2}};
  } else if (i == n - 1) {
    row = {{n - 1, 2.0 / h2}, {n - 2, -5.0 / h2}, {n - 3, 4.0 / h2}, {n - 4, -1.0 / h2}};
  } else {
    row = {{i - 1, 1.0 / h2}, {i, -2.0 / h2}, {i + 1, 1.0 / h2}};
  }
}

enum class Axis { X, Y };

SpMat axis_op(const SolidGrid& g, Axis axis, int deriv) {
  const int n = g.node_count();
  std::vector<Triplet> trip;
  std::vector<std::pair<int, double>> row;
  const int n1d = (axis == Axis::X) ? g.nx : g.ny;
  const double h = (axis == Axis::X) ? g.hx : g.hy;
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < g.ny; ++j) {
      const int self = g.node(i, j);
      const int k = (axis == Axis::X) ? i : j;
      if (deriv == 1)
        d1_row(k, n1d, h, row);
      else
        d2_row(k, n1d, h, row);
      for (auto& [k2, c] : row) {
        const int other = (axis == Axis::X) ? g.node(k2, j) : g.node(i, k2);
        trip.emplace_back(self, other, c);
      }
    }
  SpMat m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

}  // namespace

DiffOps DiffOps::build(const SolidGrid& g) {
  DiffOps ops;
  ops.dx = axis_op(g, Axis::X, 1);
  ops.dy = axis_op(g, Axis::Y, 1);
  ops.dxx = axis_op(g, Axis::X, 2);
  ops.dyy = axis_op(g, Axis::Y, 2);
  ops.dxy = (ops.dx * ops.dy).pruned();
  ops.dxy.makeCompressed();
  return ops;
}

DiffOps::HighOrder DiffOps::high_order(const SolidGrid& g, int order) const {
  if (order < 2) throw ValidationError("regularizer order must be >= 2");
  HighOrder ho;
  ho.order = order;
  const int n = g.node_count();

  auto pure_power = [&](const SpMat& d1, const SpMat& d2, int p) -> SpMat {
    SpMat id(n, n);
    id.setIdentity();
    if (p == 0) return id;
    if (p == 1) return d1;
    SpMat acc = d2;
    for (int k = 2; k < p; k += 2) {
      if (p - k >= 2)
        acc = (d2 * acc).pruned();
      else
        acc = (d1 * acc).pruned();
    }
    return acc;
  };

  auto binom = [](int m, int p) {
    double r = 1;
    for (int i = 0; i < p; ++i) r = r * (m - i) / (i + 1);
    return r;
  };

  for (int p = 0; p <= order; ++p) {
    SpMat op = (pure_power(dx, dxx, p) * pure_power(dy, dyy, order - p)).pruned();
    op.makeCompressed();
    ho.ops.push_back(std::move(op));
    ho.multiplicity.push_back(binom(order, p));
  }
  return ho;
}

DeformationField::DeformationField(std::shared_ptr<const SolidGrid> grid,
                                   std::shared_ptr<const DiffOps> ops)
    : grid_(std::move(grid)), ops_(std::move(ops)), pos_(grid_->node_count()) {}

void DeformationField::set_positions(Field2 p) {
  if (p.size() != grid_->node_count())
    throw ValidationError("DeformationField: position count does not match grid");
  pos_ = std::move(p);
  kin_valid_ = false;
}

const DeformationField::Kinematics& DeformationField::kinematics() const {
  if (!kin_valid_) {
    kin_.fxx = ops_->dx * pos_.x;
    kin_.fxy = ops_->dy * pos_.x;
    kin_.fyx = ops_->dx * pos_.y;
    kin_.fyy = ops_->dy * pos_.y;
    kin_.det = kin_.fxx.cwiseProduct(kin_.fyy) - kin_.fxy.cwiseProduct(kin_.fyx);
    kin_valid_ = true;
  }
  return kin_;
}

bool DeformationField::inside(const GridSpec& container) const {
  for (Eigen::Index n = 0; n < pos_.size(); ++n)
    if (!container.contains(pos_.at(n))) return false;
  return true;
}

DeformationField DeformationField::reference(std::shared_ptr<const SolidGrid> grid,
                                             std::shared_ptr<const DiffOps> ops,
                                             const Vec2& offset) {
  DeformationField f(grid, ops);
  Field2 p(grid->node_count());
  for (int i = 0; i < grid->nx; ++i)
    for (int j = 0; j < grid->ny; ++j)
      p.set(grid->node(i, j), grid->node_pos(i, j) + offset);
  f.set_positions(std::move(p));
  return f;
}

}  // namespace varislip
