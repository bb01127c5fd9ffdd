#pragma once

#include "demforge/features.hpp"
#include "demforge/grid.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace demforge {

enum class ConstraintSource { sounding, depth_curve, coastline, channel, geodetic_profile, correction };

std::string_view to_string(ConstraintSource source);

/// A fixed height b^(exp) pinned at node (i, j).
struct Constraint {
  int i = 0;
  int j = 0;
  double value = 0.0;
  ConstraintSource source = ConstraintSource::sounding;
  std::optional<std::string> timestamp;

  NodeIndex node() const noexcept { return {i, j}; }
  bool operator==(const Constraint&) const = default;
};

/// Node carrying several constraints whose values disagree by more than the
/// conflict tolerance.
struct Conflict {
  NodeIndex node;
  double min = 0.0;
  double max = 0.0;
  double spread = 0.0;
  std::size_t count = 0;
};
using ConflictReport = std::vector<Conflict>;

/// Resolved pin: exactly one height per constrained node.
struct Pin {
  NodeIndex node;
  double value = 0.0;
};

inline constexpr double kDefaultConflictTolerance = 0.05;

class ConstraintSet {
 public:
  explicit ConstraintSet(double conflict_tolerance = kDefaultConflictTolerance);

  void add(Constraint c);
  void append(const ConstraintSet& other);

  std::span<const Constraint> constraints() const noexcept { return constraints_; }
  std::size_t size() const noexcept { return constraints_.size(); }
  bool empty() const noexcept { return constraints_.empty(); }
  double conflict_tolerance() const noexcept { return tolerance_; }

  /// One value per node, ordered by node index. Values on a node whose spread
  /// is within tolerance are averaged; otherwise the one added last wins.
  std::vector<Pin> resolve() const;

 private:
  std::vector<Constraint> constraints_;
  double tolerance_;
};

struct RejectedPoint {
  std::size_t index = 0;
  Point3 point;
};

struct PointIngest {
  ConstraintSet set;
  std::vector<RejectedPoint> rejected;
  ConflictReport conflicts;
};

/// Snaps soundings to their nearest node. Points sharing a node are averaged
/// when their spread is within tolerance, otherwise kept and reported.
PointIngest constraints_from_points(std::span<const Point3> points, const GridGeometry& geometry,
                                    ConstraintSource source = ConstraintSource::sounding,
                                    double conflict_tolerance = kDefaultConflictTolerance);

/// Every node whose cell the polyline crosses is pinned to the feature's
/// water-level mark. Throws std::invalid_argument without a finite LEVEL or
/// with fewer than two vertices.
ConstraintSet constraints_from_isoline(const VectorFeature& line, const GridGeometry& geometry,
                                       ConstraintSource source = ConstraintSource::coastline);

/// Depth curve: like an isoline, valued water_surface - depth.
ConstraintSet constraints_from_depth_curve(const VectorFeature& curve, double water_surface,
                                           const GridGeometry& geometry);

/// Trapezoidal channel cut around a centerline. Nodes within top_width/2 get
/// bank - depth inside bed_width/2, rising linearly to the bank elevation at
/// top_width/2. The bank elevation is read from `grid` at the node nearest to
/// the channel edge on the node's side of the centerline (the lower side for
/// nodes on the centerline).
ConstraintSet burn_channel(const ElevationGrid& grid, const VectorFeature& centerline,
                           const ChannelSection& section);

/// Cells where constraints disagree beyond the set's tolerance, by node index.
ConflictReport check_constraint_consistency(const ConstraintSet& set);

struct SolverParams {
  double alpha = 0.25;
  double tol = 1e-4;
  int max_iter = 100000;
  bool record_history = false;

  /// Throws std::invalid_argument unless 0 < alpha <= 0.25, tol > 0, max_iter >= 1.
  void validate() const;
};

struct RelaxResult {
  ElevationGrid grid;
  int iterations = 0;
  double final_update = 0.0;      // max |b^{p+1} - b^p| over free nodes, last sweep
  double laplace_residual = 0.0;  // max |discrete Laplacian| over free nodes at exit
  bool converged = false;
  std::vector<double> update_history;  // per sweep, when requested
};

/// Explicit diffusion relaxation around pinned nodes (Jacobi sweeps):
///   b <- b + alpha * (b_E - 2b + b_W) + alpha * (b_N - 2b + b_S)   (free nodes)
///   b <- b^(exp)                                                  (pinned nodes)
/// Out-of-grid and nodata neighbours mirror the node itself (zero flux).
///
/// Iteration stops once the largest update is below tol and the remaining
/// distance to the fixed point, estimated from the observed contraction rate,
/// is below tol as well. Hitting max_iter returns converged = false.
///
/// `active`, when given, restricts which free nodes may change; the others
/// keep their input value. Nodata nodes in the active region start from the
/// mean pin value.
RelaxResult relax(const ElevationGrid& grid, const ConstraintSet& constraints,
                  const SolverParams& params, const Mask* active = nullptr);

}  // namespace demforge
