#include "demforge/assimilate.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace demforge {

std::string_view to_string(ConstraintSource source) {
  switch (source) {
    case ConstraintSource::sounding: return "sounding";
    case ConstraintSource::depth_curve: return "depth_curve";
    case ConstraintSource::coastline: return "coastline";
    case ConstraintSource::channel: return "channel";
    case ConstraintSource::geodetic_profile: return "geodetic_profile";
    case ConstraintSource::correction: return "correction";
  }
  return "unknown";
}

namespace {

// Row-major ordering key.
using NodeKey = std::pair<int, int>;
NodeKey key_of(NodeIndex n) { return {n.j, n.i}; }

// Sorted before summing so the mean does not depend on insertion order.
double order_free_mean(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

std::map<NodeKey, std::vector<double>> group_by_node(std::span<const Constraint> cs) {
  std::map<NodeKey, std::vector<double>> groups;
  for (const auto& c : cs) groups[key_of(c.node())].push_back(c.value);
  return groups;
}

std::pair<double, double> min_max(const std::vector<double>& v) {
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return {*lo, *hi};
}

}  // namespace

ConstraintSet::ConstraintSet(double conflict_tolerance) : tolerance_(conflict_tolerance) {
  if (!(conflict_tolerance >= 0.0))
    throw std::invalid_argument("conflict tolerance must be non-negative");
}

void ConstraintSet::add(Constraint c) {
  if (!std::isfinite(c.value)) throw std::invalid_argument("constraint value must be finite");
  if (c.i < 0 || c.j < 0) throw std::invalid_argument("constraint indices must be non-negative");
  constraints_.push_back(std::move(c));
}

void ConstraintSet::append(const ConstraintSet& other) {
  constraints_.insert(constraints_.end(), other.constraints_.begin(), other.constraints_.end());
}

std::vector<Pin> ConstraintSet::resolve() const {
  std::map<NodeKey, std::vector<double>> groups;
  std::map<NodeKey, double> last;
  for (const auto& c : constraints_) {
    groups[key_of(c.node())].push_back(c.value);
    last[key_of(c.node())] = c.value;
  }
  std::vector<Pin> pins;
  pins.reserve(groups.size());
  for (auto& [key, values] : groups) {
    const auto [lo, hi] = min_max(values);
    const double v = hi - lo <= tolerance_ ? order_free_mean(values) : last[key];
    pins.push_back({NodeIndex{key.second, key.first}, v});
  }
  return pins;
}

ConflictReport check_constraint_consistency(const ConstraintSet& set) {
  ConflictReport report;
  for (const auto& [key, values] : group_by_node(set.constraints())) {
    if (values.size() < 2) continue;
    const auto [lo, hi] = min_max(values);
    if (hi - lo > set.conflict_tolerance())
      report.push_back({NodeIndex{key.second, key.first}, lo, hi, hi - lo, values.size()});
  }
  return report;
}

// ---------------------------------------------------------------------------
// Ingestion

PointIngest constraints_from_points(std::span<const Point3> points, const GridGeometry& geometry,
                                    ConstraintSource source, double conflict_tolerance) {
  PointIngest out{ConstraintSet(conflict_tolerance), {}, {}};
  std::vector<NodeIndex> order;
  std::map<NodeKey, std::vector<double>> by_node;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto& p = points[k];
    const NodeIndex n = geometry.nearest_node(p.x, p.y);
    if (!geometry.contains(p.x, p.y) || !geometry.in_bounds(n) || !std::isfinite(p.z)) {
      out.rejected.push_back({k, p});
      continue;
    }
    auto& bucket = by_node[key_of(n)];
    if (bucket.empty()) order.push_back(n);
    bucket.push_back(p.z);
  }
  for (const auto& n : order) {
    const auto& values = by_node[key_of(n)];
    const auto [lo, hi] = min_max(values);
    if (hi - lo <= conflict_tolerance) {
      out.set.add({n.i, n.j, order_free_mean(values), source, std::nullopt});
    } else {
      for (double v : values) out.set.add({n.i, n.j, v, source, std::nullopt});
      out.conflicts.push_back({n, lo, hi, hi - lo, values.size()});
    }
  }
  return out;
}

namespace {

ConstraintSet pin_polyline(const VectorFeature& line, const GridGeometry& geometry, double value,
                           ConstraintSource source) {
  ConstraintSet set;
  for (const auto& n : rasterize_polyline(geometry, line.vertices))
    set.add({n.i, n.j, value, source, line.timestamp});
  return set;
}

void require_polyline(const VectorFeature& line) {
  if (line.vertices.size() < 2)
    throw std::invalid_argument("feature '" + line.id + "' needs at least two vertices");
}

}  // namespace

ConstraintSet constraints_from_isoline(const VectorFeature& line, const GridGeometry& geometry,
                                       ConstraintSource source) {
  if (!line.level || !std::isfinite(*line.level))
    throw std::invalid_argument("isoline '" + line.id + "' has no water-level mark");
  require_polyline(line);
  return pin_polyline(line, geometry, *line.level, source);
}

ConstraintSet constraints_from_depth_curve(const VectorFeature& curve, double water_surface,
                                           const GridGeometry& geometry) {
  if (!curve.depth || !(*curve.depth > 0.0) || !std::isfinite(*curve.depth))
    throw std::invalid_argument("depth curve '" + curve.id + "' needs a positive depth");
  if (!std::isfinite(water_surface))
    throw std::invalid_argument("water surface must be finite");
  require_polyline(curve);
  return pin_polyline(curve, geometry, water_surface - *curve.depth,
                      ConstraintSource::depth_curve);
}

ConstraintSet burn_channel(const ElevationGrid& grid, const VectorFeature& centerline,
                           const ChannelSection& section) {
  section.validate();
  require_polyline(centerline);
  const auto& g = grid.geometry();
  for (const auto& v : centerline.vertices)
    if (!g.contains(v.x, v.y))
      throw std::out_of_range("channel '" + centerline.id + "' leaves the grid extent");

  const double half_top = 0.5 * section.top_width;
  const double half_bed = 0.5 * section.bed_width;
  const auto& path = centerline.vertices;

  auto bank_at = [&](Point2 p) {
    NodeIndex n = g.nearest_node(p.x, p.y);
    n.i = std::clamp(n.i, 0, g.n_cols - 1);
    n.j = std::clamp(n.j, 0, g.n_rows - 1);
    if (!grid.valid(n))
      throw std::domain_error("bank node (" + std::to_string(n.i) + ", " +
                              std::to_string(n.j) + ") is nodata");
    return grid(n);
  };
  auto profile = [&](double d, double bank) {
    if (d <= half_bed) return bank - section.depth_below_bank;
    return bank - section.depth_below_bank * (half_top - d) / (half_top - half_bed);
  };

  double xmin = path[0].x, xmax = path[0].x, ymin = path[0].y, ymax = path[0].y;
  for (const auto& v : path) {
    xmin = std::min(xmin, v.x);
    xmax = std::max(xmax, v.x);
    ymin = std::min(ymin, v.y);
    ymax = std::max(ymax, v.y);
  }
  const int i_lo = std::max(0, static_cast<int>(std::floor((xmin - half_top - g.x0) / g.dx)));
  const int i_hi = std::min(g.n_cols - 1, static_cast<int>(std::ceil((xmax + half_top - g.x0) / g.dx)));
  const int j_lo = std::max(0, static_cast<int>(std::floor((ymin - half_top - g.y0) / g.dx)));
  const int j_hi = std::min(g.n_rows - 1, static_cast<int>(std::ceil((ymax + half_top - g.y0) / g.dx)));

  ConstraintSet set;
  for (int j = j_lo; j <= j_hi; ++j) {
    for (int i = i_lo; i <= i_hi; ++i) {
      const Point2 p{g.x(i), g.y(j)};
      SegmentProjection best;
      std::size_t seg = 0;
      for (std::size_t k = 1; k < path.size(); ++k) {
        auto proj = project_onto_segment(p, path[k - 1], path[k]);
        if (k == 1 || proj.distance < best.distance) {
          best = proj;
          seg = k;
        }
      }
      if (best.distance > half_top + 1e-9 * g.dx) continue;
      const double d = std::min(best.distance, half_top);

      double bank = 0.0;
      if (best.distance > 1e-9) {
        const double ux = (p.x - best.closest.x) / best.distance;
        const double uy = (p.y - best.closest.y) / best.distance;
        bank = bank_at({best.closest.x + ux * half_top, best.closest.y + uy * half_top});
      } else {
        const Point2 a = path[seg - 1];
        const Point2 b = path[seg];
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        const double nx = len > 0.0 ? -(b.y - a.y) / len : 0.0;
        const double ny = len > 0.0 ? (b.x - a.x) / len : 1.0;
        bank = std::min(bank_at({p.x + nx * half_top, p.y + ny * half_top}),
                        bank_at({p.x - nx * half_top, p.y - ny * half_top}));
      }
      set.add({i, j, profile(d, bank), ConstraintSource::channel, centerline.timestamp});
    }
  }
  return set;
}

// ---------------------------------------------------------------------------
// Relaxation

void SolverParams::validate() const {
  if (!(alpha > 0.0) || alpha > 0.25)
    throw std::invalid_argument("alpha must lie in (0, 0.25], got " + std::to_string(alpha));
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
}

namespace {

enum class NodeRole : unsigned char { pinned, free, fixed, hole };

constexpr int kRateWindow = 20;

}  // namespace

RelaxResult relax(const ElevationGrid& grid, const ConstraintSet& constraints,
                  const SolverParams& params, const Mask* active) {
  params.validate();
  const auto& g = grid.geometry();
  if (active && (active->cols() != g.n_cols || active->rows() != g.n_rows))
    throw std::invalid_argument("active mask does not match grid");

  const std::size_t n = g.size();
  std::vector<NodeRole> role(n);
  std::vector<double> cur(grid.values().begin(), grid.values().end());

  const auto pins = constraints.resolve();
  double pin_sum = 0.0;
  for (const auto& p : pins) {
    if (!g.in_bounds(p.node))
      throw std::out_of_range("constraint at (" + std::to_string(p.node.i) + ", " +
                              std::to_string(p.node.j) + ") outside grid");
    pin_sum += p.value;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const NodeIndex nd = g.node(k);
    const bool may_change = !active || (*active)(nd);
    if (may_change)
      role[k] = NodeRole::free;
    else
      role[k] = grid.is_nodata(cur[k]) ? NodeRole::hole : NodeRole::fixed;
  }
  for (const auto& p : pins) {
    role[g.index(p.node)] = NodeRole::pinned;
    cur[g.index(p.node)] = p.value;
  }

  bool has_free = false;
  double fill = pins.empty() ? 0.0 : pin_sum / static_cast<double>(pins.size());
  if (pins.empty()) {
    double s = 0.0;
    std::size_t c = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (!grid.is_nodata(cur[k])) s += cur[k], ++c;
    if (c) fill = s / static_cast<double>(c);
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (role[k] != NodeRole::free) continue;
    has_free = true;
    if (grid.is_nodata(cur[k])) cur[k] = fill;
  }

  // Neighbour lists: out-of-grid and hole neighbours contribute nothing.
  auto for_each_neighbour = [&](std::size_t k, auto&& fn) {
    const NodeIndex nd = g.node(k);
    constexpr std::array<std::array<int, 2>, 4> offsets{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
    for (const auto& o : offsets) {
      const int i = nd.i + o[0];
      const int j = nd.j + o[1];
      if (!g.in_bounds(i, j)) continue;
      const std::size_t m = g.index(i, j);
      if (role[m] == NodeRole::hole) continue;
      fn(m);
    }
  };

  RelaxResult result{ElevationGrid(g, 0.0, grid.nodata()), 0, 0.0, 0.0, false, {}};
  std::vector<double> next(cur);
  std::deque<double> recent;

  for (int it = 1; it <= params.max_iter; ++it) {
    double max_update = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (role[k] != NodeRole::free) {
        next[k] = cur[k];
        continue;
      }
      double sum = 0.0;
      int count = 0;
      for_each_neighbour(k, [&](std::size_t m) {
        sum += cur[m];
        ++count;
      });
      next[k] = (1.0 - count * params.alpha) * cur[k] + params.alpha * sum;
      max_update = std::max(max_update, std::abs(next[k] - cur[k]));
    }
    std::swap(cur, next);
    result.iterations = it;
    result.final_update = max_update;
    if (params.record_history) result.update_history.push_back(max_update);

    recent.push_back(max_update);
    if (recent.size() > kRateWindow + 1) recent.pop_front();

    if (!has_free || max_update == 0.0) {
      result.converged = true;
      break;
    }
    if (max_update < params.tol && recent.size() == kRateWindow + 1 && recent.front() > 0.0) {
      const double rate = std::pow(max_update / recent.front(), 1.0 / kRateWindow);
      if (rate < 1.0 && max_update * rate / (1.0 - rate) < params.tol) {
        result.converged = true;
        break;
      }
    }
  }

  double residual = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (role[k] != NodeRole::free) continue;
    double lap = 0.0;
    for_each_neighbour(k, [&](std::size_t m) { lap += cur[m] - cur[k]; });
    residual = std::max(residual, std::abs(lap));
  }
  result.laplace_residual = residual;

  for (std::size_t k = 0; k < n; ++k)
    result.grid.values()[k] = role[k] == NodeRole::hole ? grid.nodata() : cur[k];
  return result;
}

}  // namespace demforge
