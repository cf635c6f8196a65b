#pragma once

#include <vector>

#include "varislip/solid_grid.hpp"

namespace varislip {

// Deformed configuration of the solid boundary.  Normals follow the paper's
// orientation: unit vectors pointing from the fluid into the solid (the
// reference normals of SolidGrid are inward, and cof(grad eta) transports
// them).  Tangents are the normals rotated by +90 degrees.  Weights are
// surface-measure quadrature weights: reference segment length times
// |cof(grad eta) n_Q| at segment midpoints, split to the endpoints.
struct InterfaceGeometry {
  std::vector<Vec2> points;
  std::vector<Vec2> normals;
  std::vector<Vec2> tangents;
  std::vector<double> weights;
  std::vector<int> node_index;  // solid-grid node id per point

  double total_weight() const;
  size_t size() const { return points.size(); }
};

InterfaceGeometry build_interface(const DeformationField& eta);

// integral of det(grad eta) over Q minus the area the image covers at least
// once; measures interpenetration (overlap) and vanishes for injective maps.
// The integral is the piecewise-bilinear volume (sum of image-quad areas),
// the covered area is the polygon area when the boundary is simple and a
// rasterized winding count otherwise.
double ciarlet_necas_residual(const DeformationField& eta, int raster_resolution = 512);

// piecewise-bilinear volume: sum of signed areas of the image cell quads
double image_volume(const DeformationField& eta);

enum class CellLabel : uint8_t { Fluid = 0, Solid = 1, Cut = 2 };

struct CellClassification {
  GridSpec grid;
  std::vector<CellLabel> labels;
  std::vector<double> fluid_fraction;  // 1 for Fluid, 0 for Solid, (0,1) for Cut
  double fluid_area = 0.0;

  bool is_active(int c) const { return labels[c] != CellLabel::Solid; }
  int active_count() const;
};

CellClassification classify_cells(const InterfaceGeometry& interface, const GridSpec& container);

// classify an arbitrary closed polygon (used by diagnostics scenarios)
CellClassification classify_polygon(const std::vector<Vec2>& polygon, const GridSpec& container);

double hausdorff_distance(const std::vector<Vec2>& a, const std::vector<Vec2>& b,
                          int samples_per_segment = 8);

// Minimum of (i) distances between non-adjacent interface segments and
// (ii) distance from the interface to the container walls.
double min_separation(const InterfaceGeometry& interface, const GridSpec& container);
double min_separation(const std::vector<Vec2>& polygon, const GridSpec& container);

// polygon helpers
double polygon_area(const std::vector<Vec2>& poly);  // signed, shoelace
bool polygon_self_intersects(const std::vector<Vec2>& poly);
int winding_number(const std::vector<Vec2>& poly, const Vec2& p);
std::vector<Vec2> clip_polygon_to_rect(const std::vector<Vec2>& poly, const Vec2& lo,
                                       const Vec2& hi);
double covered_area_rasterized(const std::vector<Vec2>& poly, int resolution);
double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);
double segment_segment_distance(const Vec2& a0, const Vec2& a1, const Vec2& b0, const Vec2& b1);

}  // namespace varislip
