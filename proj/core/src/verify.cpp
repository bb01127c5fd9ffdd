#include "demforge/verify.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace demforge {

MaskComparison compare_masks(const Mask& simulated, const Mask& observed, const Mask* valid) {
  if (!simulated.same_shape(observed) || (valid && !valid->same_shape(observed)))
    throw std::invalid_argument("mask dimensions differ");
  MaskComparison c;
  for (int j = 0; j < observed.rows(); ++j) {
    for (int i = 0; i < observed.cols(); ++i) {
      if (valid && !(*valid)(i, j)) continue;
      const bool s = simulated(i, j);
      const bool o = observed(i, j);
      if (s && o)
        ++c.hits;
      else if (o)
        ++c.misses;
      else if (s)
        ++c.false_alarms;
      else
        ++c.correct_negatives;
    }
  }
  const std::size_t denom = c.hits + c.misses + c.false_alarms;
  c.csi = denom ? static_cast<double>(c.hits) / static_cast<double>(denom) : 1.0;
  c.jaccard = c.csi;
  return c;
}

SpreadEntry coastline_spread(const ElevationGrid& grid, const VectorFeature& coastline) {
  const auto& v = coastline.vertices;
  if (v.empty()) throw std::invalid_argument("coastline '" + coastline.id + "' has no vertices");
  for (const auto& p : v)
    if (!grid.geometry().contains(p.x, p.y))
      throw std::out_of_range("coastline '" + coastline.id + "' vertex outside grid extent");

  std::vector<double> samples;
  samples.push_back(sample_bilinear(grid, v[0].x, v[0].y));
  const double spacing = 0.5 * grid.dx();
  for (std::size_t k = 1; k < v.size(); ++k) {
    const double len = std::hypot(v[k].x - v[k - 1].x, v[k].y - v[k - 1].y);
    const int pieces = std::max(1, static_cast<int>(std::ceil(len / spacing)));
    for (int s = 1; s <= pieces; ++s) {
      const double t = static_cast<double>(s) / pieces;
      const double x = s == pieces ? v[k].x : v[k - 1].x + t * (v[k].x - v[k - 1].x);
      const double y = s == pieces ? v[k].y : v[k - 1].y + t * (v[k].y - v[k - 1].y);
      samples.push_back(sample_bilinear(grid, x, y));
    }
  }

  SpreadEntry e;
  e.feature_id = coastline.id;
  e.samples = samples.size();
  auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  e.min = *lo;
  e.max = *hi;
  e.spread = e.max - e.min;
  double sum = 0.0;
  for (double s : samples) sum += s;
  e.mean = sum / static_cast<double>(samples.size());
  double var = 0.0;
  for (double s : samples) var += (s - e.mean) * (s - e.mean);
  e.stddev = std::sqrt(var / static_cast<double>(samples.size()));
  return e;
}

ConstraintSet propose_corrections(const ElevationGrid& bed,
                                  std::span<const CoastlineCheck> coastlines,
                                  const Mask& simulated, const Mask& observed,
                                  const ElevationGrid& free_surface,
                                  const CorrectionParams& params) {
  const auto& g = bed.geometry();
  const Mask shape(g);
  if (!simulated.same_shape(shape) || !observed.same_shape(shape) ||
      free_surface.cols() != g.n_cols || free_surface.rows() != g.n_rows)
    throw std::invalid_argument("correction inputs do not share one grid");

  ConstraintSet set;
  constexpr std::array<std::array<int, 2>, 4> offsets{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
  for (int j = 0; j < g.n_rows; ++j) {
    for (int i = 0; i < g.n_cols; ++i) {
      if (!observed(i, j) || simulated(i, j) || !bed.valid(i, j)) continue;
      double surface = -std::numeric_limits<double>::infinity();
      for (const auto& o : offsets) {
        const int ni = i + o[0];
        const int nj = j + o[1];
        if (!g.in_bounds(ni, nj) || !simulated(ni, nj) || !free_surface.valid(ni, nj)) continue;
        surface = std::max(surface, free_surface(ni, nj));
      }
      if (!std::isfinite(surface)) continue;
      const double target = surface - std::max(params.h_dry, params.clearance);
      if (target < bed(i, j)) set.add({i, j, target, ConstraintSource::correction, std::nullopt});
    }
  }

  for (const auto& check : coastlines) {
    if (!check.coastline || check.spread.spread <= params.spread_tolerance) continue;
    set.append(constraints_from_isoline(*check.coastline, g, ConstraintSource::coastline));
  }
  return set;
}

}  // namespace demforge
