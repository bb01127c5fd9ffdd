#pragma once

#include "demforge/grid.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace demforge {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  bool operator==(const Point3&) const = default;
};

/// Trapezoidal channel cross-section used when burning a centerline.
struct ChannelSection {
  double bed_width = 0.0;
  double top_width = 0.0;
  double depth_below_bank = 0.0;

  /// Throws std::invalid_argument unless top_width >= bed_width > 0 and depth > 0.
  void validate() const;
  bool operator==(const ChannelSection&) const = default;
};

enum class FeatureKind { isoline, depth_curve, channel, points };

std::string_view to_string(FeatureKind kind);

/// One digitized feature. Lines use `vertices`; point sets use `points`.
struct VectorFeature {
  FeatureKind kind = FeatureKind::isoline;
  std::string id;
  std::vector<Point2> vertices;
  std::vector<Point3> points;
  std::optional<double> level;    // water-level mark of an isoline / coastline
  std::optional<double> depth;    // depth of a depth curve below the water surface
  std::optional<double> surface;  // water surface a depth curve refers to
  std::optional<ChannelSection> section;
  std::optional<std::string> timestamp;

  bool operator==(const VectorFeature&) const = default;
};

// Feature file: one feature per line,
//   TYPE=<isoline|depth_curve|channel|points>;LEVEL=..|DEPTH=..|SECTION=bw,tw,d;T=..;x1 y1,x2 y2,...
// Optional keys ID=<name> and SURFACE=<float>. Points carry `x y z` triples.
// Blank lines and lines starting with '#' are skipped.
std::vector<VectorFeature> parse_features(std::istream& in,
                                          const std::string& source = "<stream>");
std::vector<VectorFeature> read_features(const std::filesystem::path& path);
std::string format_feature(const VectorFeature& feature);
void write_features(std::span<const VectorFeature> features, const std::filesystem::path& path);

/// Cells (node Voronoi squares) crossed by a polyline, in path order, with
/// consecutive duplicates removed. Cells outside the grid are skipped.
std::vector<NodeIndex> trace_cells(const GridGeometry& geometry, std::span<const Point2> path);

/// Like trace_cells but each cell appears once (first occurrence order).
std::vector<NodeIndex> rasterize_polyline(const GridGeometry& geometry,
                                          std::span<const Point2> path);

/// Distance from p to segment [a, b] and the closest point on it.
struct SegmentProjection {
  double distance = 0.0;
  Point2 closest;
  double t = 0.0;
};
SegmentProjection project_onto_segment(Point2 p, Point2 a, Point2 b);

}  // namespace demforge
