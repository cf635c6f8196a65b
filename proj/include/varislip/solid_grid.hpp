#pragma once

#include <memory>
#include <vector>

#include "varislip/types.hpp"

namespace varislip {

// Structured tensor grid over the reference body Q = [0,ex] x [0,ey].
// Nodes are indexed x-major: node(i,j) = i*ny + j.  Boundary nodes are kept
// as a counterclockwise loop starting at (0,0); reference normals along the
// loop are unit vectors pointing INTO Q, i.e. from the fluid side into the
// solid, which is the orientation the deformed interface inherits.
struct SolidGrid {
  int nx = 0, ny = 0;
  double hx = 0.0, hy = 0.0;
  double extent_x = 0.0, extent_y = 0.0;
  double reference_area = 0.0;

  std::vector<int> boundary_loop;      // node indices, CCW, no repeated endpoint
  std::vector<Vec2> reference_normal;  // per loop entry, unit, inward
  std::vector<uint8_t> boundary_mask;  // per node
  Vec node_weight;                     // trapezoidal quadrature weights, per node

  int node_count() const { return nx * ny; }
  int node(int i, int j) const { return i * ny + j; }
  Vec2 node_pos(int i, int j) const { return Vec2(i * hx, j * hy); }
  Vec2 node_pos(int n) const { return node_pos(n / ny, n % ny); }

  static SolidGrid make(int nx, int ny, double extent_x, double extent_y);
};

// Sparse finite-difference operators on scalar nodal fields: second order
// centered in the interior, second order one-sided on the boundary.  The
// mixed and higher derivatives are compositions of the 1D stencils, so they
// commute exactly and the adjoint of every operator is its transpose.
struct DiffOps {
  SpMat dx, dy, dxx, dyy, dxy;

  // Multi-index family for the regularizer seminorm of the given order
  // (order >= 2): op[p] ~ d^p_x d^(order-p)_y with binomial multiplicity.
  struct HighOrder {
    int order = 0;
    std::vector<SpMat> ops;
    std::vector<double> multiplicity;
  };

  HighOrder high_order(const SolidGrid& g, int order) const;

  static DiffOps build(const SolidGrid& g);
};

// Nodal positions of the deformation eta on a SolidGrid.  The gradient cache
// holds stencil-evaluated d(eta) arrays; it is invalidated by any mutation.
class DeformationField {
 public:
  DeformationField() = default;
  DeformationField(std::shared_ptr<const SolidGrid> grid,
                   std::shared_ptr<const DiffOps> ops);

  const SolidGrid& grid() const { return *grid_; }
  const DiffOps& ops() const { return *ops_; }
  std::shared_ptr<const SolidGrid> grid_ptr() const { return grid_; }
  std::shared_ptr<const DiffOps> ops_ptr() const { return ops_; }

  const Field2& positions() const { return pos_; }
  void set_positions(Field2 p);
  Vec2 position(int node) const { return pos_.at(node); }

  // Per-node deformation gradient, from the difference stencils.
  struct Kinematics {
    Vec fxx, fxy, fyx, fyy;  // F = [dx eta_x, dy eta_x; dx eta_y, dy eta_y]
    Vec det;
    Mat2 F(Eigen::Index n) const {
      Mat2 f;
      f << fxx[n], fxy[n], fyx[n], fyy[n];
      return f;
    }
  };
  const Kinematics& kinematics() const;

  double min_det() const { return kinematics().det.minCoeff(); }
  bool inside(const GridSpec& container) const;

  // identity embedding of Q shifted by `offset`
  static DeformationField reference(std::shared_ptr<const SolidGrid> grid,
                                    std::shared_ptr<const DiffOps> ops,
                                    const Vec2& offset = Vec2::Zero());

 private:
  std::shared_ptr<const SolidGrid> grid_;
  std::shared_ptr<const DiffOps> ops_;
  Field2 pos_;
  mutable Kinematics kin_;
  mutable bool kin_valid_ = false;
};

}  // namespace varislip
