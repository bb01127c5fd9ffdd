#include "demforge/morpho.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace demforge {

MorphoFields morpho_fields(const DerivativeField& d) {
  const auto& g = d.b_x.geometry();
  const double nodata = d.b_x.nodata();
  MorphoFields out{ElevationGrid(g, 0.0, nodata), ElevationGrid(g, 0.0, nodata),
                   ElevationGrid(g, 0.0, nodata)};
  constexpr double deg_per_rad = 360.0 / (2.0 * std::numbers::pi);

  for (std::size_t k = 0; k < g.size(); ++k) {
    const double bx = d.b_x.values()[k];
    const double by = d.b_y.values()[k];
    const double bxx = d.b_xx.values()[k];
    const double byy = d.b_yy.values()[k];
    const double bxy = d.b_xy.values()[k];
    if (d.b_x.is_nodata(bx) || d.b_y.is_nodata(by)) {
      out.slope.values()[k] = nodata;
      out.profile_curvature.values()[k] = nodata;
      out.tangential_curvature.values()[k] = nodata;
      continue;
    }
    const double p = bx * bx + by * by;
    const double q = 1.0 + p;
    out.slope.values()[k] = deg_per_rad * std::atan(std::sqrt(p));

    if (d.b_xx.is_nodata(bxx) || d.b_yy.is_nodata(byy) || d.b_xy.is_nodata(bxy)) {
      out.profile_curvature.values()[k] = nodata;
      out.tangential_curvature.values()[k] = nodata;
      continue;
    }
    if (p < kFlatCellThreshold) continue;  // flat cell: both curvatures 0

    const double outer = bxx * by * by + byy * bx * bx;
    const double cross = 2.0 * bxy * bx * by;
    out.profile_curvature.values()[k] = (outer - cross) / (p * std::sqrt(q));
    out.tangential_curvature.values()[k] = (outer + cross) / (p * std::sqrt(q * q * q));
  }
  return out;
}

MorphoFields morpho_fields(const ElevationGrid& grid) { return morpho_fields(derivatives(grid)); }

std::vector<Spike> detect_spikes(const ElevationGrid& grid, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("spike threshold must be positive");
  std::vector<Spike> spikes;
  std::vector<double> ring;
  ring.reserve(8);
  for (int j = 0; j < grid.rows(); ++j) {
    for (int i = 0; i < grid.cols(); ++i) {
      if (!grid.valid(i, j)) continue;
      ring.clear();
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          if (!di && !dj) continue;
          const int ni = i + di;
          const int nj = j + dj;
          if (grid.geometry().in_bounds(ni, nj) && grid.valid(ni, nj)) ring.push_back(grid(ni, nj));
        }
      // a one-sided median is biased on any slope
      if (ring.size() < 8) continue;
      std::sort(ring.begin(), ring.end());
      const std::size_t m = ring.size();
      const double median = m % 2 ? ring[m / 2] : 0.5 * (ring[m / 2 - 1] + ring[m / 2]);
      const double diff = grid(i, j) - median;
      if (std::abs(diff) > threshold) spikes.push_back({{i, j}, diff});
    }
  }
  return spikes;
}

std::vector<BrokenLink> check_connectivity(const ElevationGrid& grid,
                                           const VectorFeature& channel_path, double stage) {
  const auto& path = channel_path.vertices;
  if (path.empty()) throw std::invalid_argument("channel path '" + channel_path.id + "' is empty");
  for (const auto& v : path)
    if (!grid.geometry().contains(v.x, v.y))
      throw std::out_of_range("channel path '" + channel_path.id + "' leaves the grid extent");

  const auto cells = trace_cells(grid.geometry(), path);
  std::vector<BrokenLink> links;
  bool in_run = false;
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const double bed = grid.valid(cells[k]) ? grid(cells[k])
                                            : std::numeric_limits<double>::infinity();
    if (bed <= stage) {
      in_run = false;
      continue;
    }
    if (!in_run) {
      links.push_back({channel_path.id, cells[k], bed, k, 0});
      in_run = true;
    }
    auto& link = links.back();
    ++link.run_length;
    if (bed > link.sill_height) {
      link.sill = cells[k];
      link.sill_height = bed;
      link.path_position = k;
    }
  }
  return links;
}

}  // namespace demforge
