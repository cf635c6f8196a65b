#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <stdexcept>
#include <string>

namespace varislip {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Rotation by +90 degrees (counterclockwise).
inline Vec2 rot90(const Vec2& v) { return Vec2(-v.y(), v.x()); }

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// cof(A) maps reference normals to deformed normals: n = cof(F) n_Q / |cof(F) n_Q|.
inline Mat2 cofactor(const Mat2& a) {
  Mat2 c;
  c << a(1, 1), -a(1, 0), -a(0, 1), a(0, 0);
  return c;
}

// A pair of scalar nodal/cell fields forming a 2-vector field.
struct Field2 {
  Vec x, y;

  Field2() = default;
  explicit Field2(Eigen::Index n) : x(Vec::Zero(n)), y(Vec::Zero(n)) {}
  Field2(Vec xv, Vec yv) : x(std::move(xv)), y(std::move(yv)) {}
  Eigen::Index size() const { return x.size(); }
  Vec2 at(Eigen::Index i) const { return Vec2(x[i], y[i]); }
  void set(Eigen::Index i, const Vec2& v) { x[i] = v.x(); y[i] = v.y(); }
  void setZero() { x.setZero(); y.setZero(); }

  Vec flatten() const {
    Vec out(2 * x.size());
    out.head(x.size()) = x;
    out.tail(y.size()) = y;
    return out;
  }
  static Field2 from_flat(const Vec& f) {
    Field2 r;
    const Eigen::Index n = f.size() / 2;
    r.x = f.head(n);
    r.y = f.tail(n);
    return r;
  }
};

// Axis-aligned rectangular cell grid (used for the container and for
// classification results).
struct GridSpec {
  double x0 = 0.0, y0 = 0.0;
  double lx = 1.0, ly = 1.0;
  int mx = 1, my = 1;

  int cell_count() const { return mx * my; }
  double cell_dx() const { return lx / mx; }
  double cell_dy() const { return ly / my; }
  double area() const { return lx * ly; }
  int cell_index(int i, int j) const { return i * my + j; }
  Vec2 cell_center(int i, int j) const {
    return Vec2(x0 + (i + 0.5) * cell_dx(), y0 + (j + 0.5) * cell_dy());
  }
  bool contains(const Vec2& p) const {
    return p.x() >= x0 && p.x() <= x0 + lx && p.y() >= y0 && p.y() <= y0 + ly;
  }
};

struct DegenerateJacobian : std::runtime_error {
  explicit DegenerateJacobian(const std::string& m) : std::runtime_error(m) {}
};
struct SelfIntersecting : std::runtime_error {
  explicit SelfIntersecting(const std::string& m) : std::runtime_error(m) {}
};
struct InterpolationOutOfDomain : std::runtime_error {
  explicit InterpolationOutOfDomain(const std::string& m) : std::runtime_error(m) {}
};
struct SingularSystem : std::runtime_error {
  explicit SingularSystem(const std::string& m) : std::runtime_error(m) {}
};
struct SampleEscaped : std::runtime_error {
  explicit SampleEscaped(const std::string& m) : std::runtime_error(m) {}
};
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& m) : std::runtime_error(m) {}
};
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace varislip
