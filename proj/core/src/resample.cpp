#include "demforge/resample.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace demforge {

namespace {

struct Candidate {
  double distance;
  double value;
};

void validate(const ElevationGrid& source, const ResampleParams& p, double radius) {
  const double sdx = source.dx();
  if (!(p.target_dx > 0.0) || p.target_dx > sdx * (1.0 + 1e-12))
    throw std::invalid_argument("target_dx must be in (0, source dx]");
  if (p.n_directions < 4 || p.n_directions % 4 != 0)
    throw std::invalid_argument("n_directions must be >= 4 and divisible by 4");
  if (radius < sdx * (1.0 - 1e-12))
    throw std::invalid_argument("search_radius must be >= source dx");
  if (!std::isfinite(p.idw_power) || p.idw_power < 0.0)
    throw std::invalid_argument("idw_power must be finite and non-negative");
  if (source.count_valid() < 4)
    throw std::invalid_argument("source needs at least 4 valid nodes");
}

}  // namespace

ResampleResult refine(const ElevationGrid& source, const ResampleParams& params) {
  const auto& sg = source.geometry();
  const double radius = params.search_radius > 0.0 ? params.search_radius : 3.0 * sg.dx;
  validate(source, params, radius);

  const double tdx = params.target_dx;
  const double width = (sg.n_cols - 1) * sg.dx;
  const double height = (sg.n_rows - 1) * sg.dx;
  GridGeometry fg;
  fg.x0 = sg.x0;
  fg.y0 = sg.y0;
  fg.dx = tdx;
  fg.n_cols = static_cast<int>(std::floor(width / tdx + 1e-9)) + 1;
  fg.n_rows = static_cast<int>(std::floor(height / tdx + 1e-9)) + 1;

  ResampleResult result{ElevationGrid(fg, 0.0, source.nodata()), 0};
  const int n_dir = params.n_directions;
  const double sector = 2.0 * std::numbers::pi / n_dir;
  const int reach = static_cast<int>(std::ceil(radius / sg.dx));
  std::vector<std::optional<Candidate>> best(static_cast<std::size_t>(n_dir));

  for (int fj = 0; fj < fg.n_rows; ++fj) {
    for (int fi = 0; fi < fg.n_cols; ++fi) {
      // Offsets are taken relative to the shared origin so the result does not
      // depend on x0, y0.
      const double fx = fi * tdx;
      const double fy = fj * tdx;
      const int ci = static_cast<int>(std::floor(fx / sg.dx + 0.5));
      const int cj = static_cast<int>(std::floor(fy / sg.dx + 0.5));

      std::fill(best.begin(), best.end(), std::nullopt);
      std::optional<double> exact;
      for (int j = std::max(0, cj - reach); j <= std::min(sg.n_rows - 1, cj + reach) && !exact;
           ++j) {
        for (int i = std::max(0, ci - reach); i <= std::min(sg.n_cols - 1, ci + reach); ++i) {
          if (!source.valid(i, j)) continue;
          const double ox = i * sg.dx - fx;
          const double oy = j * sg.dx - fy;
          const double d = std::hypot(ox, oy);
          if (d < 1e-9) {
            exact = source(i, j);
            break;
          }
          if (d > radius) continue;
          double angle = std::atan2(oy, ox);
          if (angle < 0.0) angle += 2.0 * std::numbers::pi;
          const int k =
              static_cast<int>(std::floor((angle + 0.5 * sector) / sector)) % n_dir;
          auto& slot = best[static_cast<std::size_t>(k)];
          if (!slot || d < slot->distance) slot = Candidate{d, source(i, j)};
        }
      }
      if (exact) {
        result.grid(fi, fj) = *exact;
        continue;
      }

      bool paired = false;
      for (int k = 0; k < n_dir / 2 && !paired; ++k)
        paired = best[static_cast<std::size_t>(k)] &&
                 best[static_cast<std::size_t>(k + n_dir / 2)];

      double wsum = 0.0;
      double vsum = 0.0;
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (int k = 0; k < n_dir; ++k) {
        const auto& c = best[static_cast<std::size_t>(k)];
        if (!c) continue;
        if (paired && !best[static_cast<std::size_t>((k + n_dir / 2) % n_dir)]) continue;
        const double w = 1.0 / std::pow(c->distance, params.idw_power);
        wsum += w;
        vsum += w * c->value;
        lo = std::min(lo, c->value);
        hi = std::max(hi, c->value);
      }
      if (wsum > 0.0) {
        result.grid(fi, fj) = std::clamp(vsum / wsum, lo, hi);
      } else {
        result.grid.set_nodata(fi, fj);
        ++result.unfilled;
      }
    }
  }
  return result;
}

}  // namespace demforge
