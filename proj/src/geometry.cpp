#include "varislip/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace varislip {

double InterfaceGeometry::total_weight() const {
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

InterfaceGeometry build_interface(const DeformationField& eta) {
  const SolidGrid& g = eta.grid();
  const auto& kin = eta.kinematics();
  if (kin.det.minCoeff() <= 0.0)
    throw DegenerateJacobian("build_interface: det(grad eta) <= 0");

  InterfaceGeometry ifc;
  const size_t m = g.boundary_loop.size();
  ifc.points.resize(m);
  ifc.normals.resize(m);
  ifc.tangents.resize(m);
  ifc.weights.assign(m, 0.0);
  ifc.node_index = g.boundary_loop;

  for (size_t k = 0; k < m; ++k) {
    const int node = g.boundary_loop[k];
    ifc.points[k] = eta.position(node);
    const Vec2 cn = cofactor(kin.F(node)) * g.reference_normal[k];
    if (cn.norm() == 0.0)
      throw DegenerateJacobian("build_interface: vanishing cofactor normal");
    ifc.normals[k] = cn.normalized();
    ifc.tangents[k] = rot90(ifc.normals[k]);
  }

  // segment weights: reference length x |cof(F) n_Q| at the segment midpoint,
  // with n_Q the (inner) edge normal, constant along each straight edge of Q
  for (size_t k = 0; k < m; ++k) {
    const size_t k1 = (k + 1) % m;
    const int a = g.boundary_loop[k], b = g.boundary_loop[k1];
    const Vec2 t_ref = g.node_pos(b) - g.node_pos(a);
    const double ref_len = t_ref.norm();
    const Vec2 n_seg = rot90(t_ref / ref_len);  // CCW loop: inner normal to the left
    const Mat2 f_mid = 0.5 * (kin.F(a) + kin.F(b));
    const double wseg = ref_len * (cofactor(f_mid) * n_seg).norm();
    ifc.weights[k] += 0.5 * wseg;
    ifc.weights[k1] += 0.5 * wseg;
  }

  if (polygon_self_intersects(ifc.points))
    throw SelfIntersecting("build_interface: image boundary self-intersects");
  return ifc;
}

double polygon_area(const std::vector<Vec2>& poly) {
  double a = 0.0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) a += cross2(poly[i], poly[(i + 1) % n]);
  return 0.5 * a;
}

namespace {

bool segments_properly_intersect(const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1) {
  auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return cross2(q - p, r - p);
  };
  const double d1 = orient(b0, b1, a0);
  const double d2 = orient(b0, b1, a1);
  const double d3 = orient(a0, a1, b0);
  const double d4 = orient(a0, a1, b1);
  return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
         ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

}  // namespace

bool polygon_self_intersects(const std::vector<Vec2>& poly) {
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      // skip segments sharing a vertex
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_properly_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
        return true;
    }
  }
  return false;
}

int winding_number(const std::vector<Vec2>& poly, const Vec2& p) {
  int wind = 0;
  const size_t n = poly.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % n];
    if (a.y() <= p.y()) {
      if (b.y() > p.y() && cross2(b - a, p - a) > 0) ++wind;
    } else {
      if (b.y() <= p.y() && cross2(b - a, p - a) < 0) --wind;
    }
  }
  return wind;
}

std::vector<Vec2> clip_polygon_to_rect(const std::vector<Vec2>& poly, const Vec2& lo,
                                       const Vec2& hi) {
  // Sutherland-Hodgman against the four half planes of the rectangle.
  std::vector<Vec2> cur = poly, next;
  auto clip_half = [&](auto inside, auto intersect) {
    next.clear();
    const size_t n = cur.size();
    for (size_t i = 0; i < n; ++i) {
      const Vec2& a = cur[i];
      const Vec2& b = cur[(i + 1) % n];
      const bool ia = inside(a), ib = inside(b);
      if (ia) next.push_back(a);
      if (ia != ib) next.push_back(intersect(a, b));
    }
    cur.swap(next);
  };
  auto lerp_at_x = [](const Vec2& a, const Vec2& b, double x) {
    const double t = (x - a.x()) / (b.x() - a.x());
    return Vec2(x, a.y() + t * (b.y() - a.y()));
  };
  auto lerp_at_y = [](const Vec2& a, const Vec2& b, double y) {
    const double t = (y - a.y()) / (b.y() - a.y());
    return Vec2(a.x() + t * (b.x() - a.x()), y);
  };
  clip_half([&](const Vec2& p) { return p.x() >= lo.x(); },
            [&](const Vec2& a, const Vec2& b) { return lerp_at_x(a, b, lo.x()); });
  if (cur.empty()) return cur;
  clip_half([&](const Vec2& p) { return p.x() <= hi.x(); },
            [&](const Vec2& a, const Vec2& b) { return lerp_at_x(a, b, hi.x()); });
  if (cur.empty()) return cur;
  clip_half([&](const Vec2& p) { return p.y() >= lo.y(); },
            [&](const Vec2& a, const Vec2& b) { return lerp_at_y(a, b, lo.y()); });
  if (cur.empty()) return cur;
  clip_half([&](const Vec2& p) { return p.y() <= hi.y(); },
            [&](const Vec2& a, const Vec2& b) { return lerp_at_y(a, b, hi.y()); });
  return cur;
}

double covered_area_rasterized(const std::vector<Vec2>& poly, int resolution) {
  Vec2 lo(std::numeric_limits<double>::max(), std::numeric_limits<double>::max());
  Vec2 hi = -lo;
  for (const Vec2& p : poly) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec2 pad = 1e-3 * (hi - lo).cwiseMax(Vec2(1e-12, 1e-12));
  lo -= pad;
  hi += pad;
  const double dx = (hi.x() - lo.x()) / resolution;
  const double dy = (hi.y() - lo.y()) / resolution;
  long covered = 0;
  for (int i = 0; i < resolution; ++i)
    for (int j = 0; j < resolution; ++j) {
      const Vec2 p(lo.x() + (i + 0.5) * dx, lo.y() + (j + 0.5) * dy);
      if (winding_number(poly, p) != 0) ++covered;
    }
  return covered * dx * dy;
}

double image_volume(const DeformationField& eta) {
  const SolidGrid& g = eta.grid();
  double vol = 0.0;
  for (int i = 0; i + 1 < g.nx; ++i)
    for (int j = 0; j + 1 < g.ny; ++j) {
      const Vec2 a = eta.position(g.node(i, j));
      const Vec2 b = eta.position(g.node(i + 1, j));
      const Vec2 c = eta.position(g.node(i + 1, j + 1));
      const Vec2 d = eta.position(g.node(i, j + 1));
      vol += 0.5 * (cross2(a, b) + cross2(b, c) + cross2(c, d) + cross2(d, a));
    }
  return vol;
}

double ciarlet_necas_residual(const DeformationField& eta, int raster_resolution) {
  if (eta.min_det() <= 0.0)
    throw DegenerateJacobian("ciarlet_necas_residual: det(grad eta) <= 0");

  const SolidGrid& g = eta.grid();
  std::vector<Vec2> poly(g.boundary_loop.size());
  for (size_t k = 0; k < poly.size(); ++k) poly[k] = eta.position(g.boundary_loop[k]);

  const double integral = image_volume(eta);
  double covered;
  if (!polygon_self_intersects(poly)) {
    covered = std::abs(polygon_area(poly));
  } else {
    // overlap is exactly what this measures; count multiply-covered area once
    covered = covered_area_rasterized(poly, raster_resolution);
  }
  return integral - covered;
}

int CellClassification::active_count() const {
  int n = 0;
  for (CellLabel l : labels)
    if (l != CellLabel::Solid) ++n;
  return n;
}

CellClassification classify_polygon(const std::vector<Vec2>& polygon, const GridSpec& container) {
  if (polygon_self_intersects(polygon))
    throw SelfIntersecting("classify_cells: interface polygon self-intersects");

  CellClassification cls;
  cls.grid = container;
  cls.labels.assign(container.cell_count(), CellLabel::Fluid);
  cls.fluid_fraction.assign(container.cell_count(), 1.0);

  const double dx = container.cell_dx(), dy = container.cell_dy();
  const double cell_area = dx * dy;
  const double tol = 1e-12;

  // bucket boundary segments by the cells their bounding boxes touch
  std::vector<uint8_t> near_boundary(container.cell_count(), 0);
  const size_t np = polygon.size();
  for (size_t k = 0; k < np; ++k) {
    const Vec2& a = polygon[k];
    const Vec2& b = polygon[(k + 1) % np];
    int i0 = std::max(0, (int)std::floor((std::min(a.x(), b.x()) - container.x0) / dx) - 1);
    int i1 = std::min(container.mx - 1,
                      (int)std::floor((std::max(a.x(), b.x()) - container.x0) / dx) + 1);
    int j0 = std::max(0, (int)std::floor((std::min(a.y(), b.y()) - container.y0) / dy) - 1);
    int j1 = std::min(container.my - 1,
                      (int)std::floor((std::max(a.y(), b.y()) - container.y0) / dy) + 1);
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j) near_boundary[container.cell_index(i, j)] = 1;
  }

  double solid_area = 0.0;
  for (int i = 0; i < container.mx; ++i)
    for (int j = 0; j < container.my; ++j) {
      const int c = container.cell_index(i, j);
      if (!near_boundary[c]) {
        if (winding_number(polygon, container.cell_center(i, j)) != 0) {
          cls.labels[c] = CellLabel::Solid;
          cls.fluid_fraction[c] = 0.0;
          solid_area += cell_area;
        }
        continue;
      }
      const Vec2 lo(container.x0 + i * dx, container.y0 + j * dy);
      const Vec2 hi(container.x0 + (i + 1) * dx, container.y0 + (j + 1) * dy);
      const auto clipped = clip_polygon_to_rect(polygon, lo, hi);
      const double inside = clipped.empty() ? 0.0 : std::abs(polygon_area(clipped));
      solid_area += inside;
      if (inside <= tol * cell_area) {
        cls.labels[c] = CellLabel::Fluid;
        cls.fluid_fraction[c] = 1.0;
      } else if (inside >= (1.0 - tol) * cell_area) {
        cls.labels[c] = CellLabel::Solid;
        cls.fluid_fraction[c] = 0.0;
      } else {
        cls.labels[c] = CellLabel::Cut;
        cls.fluid_fraction[c] = 1.0 - inside / cell_area;
      }
    }
  cls.fluid_area = container.area() - solid_area;
  return cls;
}

CellClassification classify_cells(const InterfaceGeometry& interface, const GridSpec& container) {
  return classify_polygon(interface.points, container);
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double segment_segment_distance(const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1) {
  if (segments_properly_intersect(a0, a1, b0, b1)) return 0.0;
  double d = point_segment_distance(a0, b0, b1);
  d = std::min(d, point_segment_distance(a1, b0, b1));
  d = std::min(d, point_segment_distance(b0, a0, a1));
  d = std::min(d, point_segment_distance(b1, a0, a1));
  return d;
}

double hausdorff_distance(const std::vector<Vec2>& a, const std::vector<Vec2>& b,
                          int samples_per_segment) {
  auto one_sided = [&](const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
    double worst = 0.0;
    const size_t n = from.size();
    for (size_t i = 0; i < n; ++i) {
      const Vec2& p0 = from[i];
      const Vec2& p1 = from[(i + 1) % n];
      for (int s = 0; s < samples_per_segment; ++s) {
        const Vec2 p = p0 + (double(s) / samples_per_segment) * (p1 - p0);
        double best = std::numeric_limits<double>::max();
        const size_t m = to.size();
        for (size_t j = 0; j < m; ++j)
          best = std::min(best, point_segment_distance(p, to[j], to[(j + 1) % m]));
        worst = std::max(worst, best);
      }
    }
    return worst;
  };
  return std::max(one_sided(a, b), one_sided(b, a));
}

double min_separation(const std::vector<Vec2>& poly, const GridSpec& container) {
  double best = std::numeric_limits<double>::max();
  const size_t n = poly.size();
  // walls
  for (const Vec2& p : poly) {
    best = std::min(best, p.x() - container.x0);
    best = std::min(best, container.x0 + container.lx - p.x());
    best = std::min(best, p.y() - container.y0);
    best = std::min(best, container.y0 + container.ly - p.y());
  }
  // Self-proximity between parts of the boundary that are far apart along the
  // loop: neighbors along a finely sampled polyline are trivially close, so a
  // pair only counts when its chord is shorter than half its arc separation.
  std::vector<double> cum(n + 1, 0.0);
  for (size_t i = 0; i < n; ++i)
    cum[i + 1] = cum[i] + (poly[(i + 1) % n] - poly[i]).norm();
  const double total = cum[n];
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 2; j < n; ++j) {
      if (i == 0 && j == n - 1) continue;  // adjacent through the wrap
      const double arc_fwd = cum[j] - cum[i + 1];
      const double arc = std::min(arc_fwd, total - arc_fwd -
                                               (cum[i + 1] - cum[i]) - (cum[j + 1] - cum[j]));
      const double d = segment_segment_distance(poly[i], poly[(i + 1) % n], poly[j],
                                                poly[(j + 1) % n]);
      if (d < 0.5 * std::max(arc, 0.0)) best = std::min(best, d);
    }
  return std::max(best, 0.0);
}

double min_separation(const InterfaceGeometry& interface, const GridSpec& container) {
  return min_separation(interface.points, container);
}

}  // namespace varislip
