#pragma once

#include "demforge/grid.hpp"

#include <cstddef>

namespace demforge {

/// Directional weighted-average refinement parameters. A non-positive
/// search_radius means "3 x source step".
struct ResampleParams {
  double target_dx = 0.0;
  int n_directions = 16;
  double search_radius = 0.0;
  double idw_power = 1.0;
};

struct ResampleResult {
  ElevationGrid grid;
  std::size_t unfilled = 0;  // fine nodes left as nodata (no contributor in range)
};

/// Refines `source` to a smaller step over the same extent.
///
/// Around every fine node the plane is split into n_directions equal angular
/// sectors centred on the azimuths 2*pi*k/n. In each sector the nearest valid
/// source node within search_radius is a candidate (first in row-major scan
/// order on ties). A sector contributes only if the diametrically opposite
/// sector also holds a candidate, which keeps the estimate balanced along grid
/// edges; when no opposite pair exists every candidate contributes. The value
/// is the inverse-distance^idw_power weighted mean of the contributors. A fine
/// node within 1e-9 m of a valid source node copies it.
///
/// Throws std::invalid_argument on invalid parameters.
ResampleResult refine(const ElevationGrid& source, const ResampleParams& params);

}  // namespace demforge
