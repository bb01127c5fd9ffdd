#pragma once

#include "demforge/assimilate.hpp"
#include "demforge/features.hpp"
#include "demforge/grid.hpp"

#include <cstddef>
#include <span>
#include <string>

namespace demforge {

/// Contingency counts of a simulated flood extent against an observed one.
struct MaskComparison {
  std::size_t hits = 0;          // wet in both
  std::size_t misses = 0;        // observed wet, simulated dry
  std::size_t false_alarms = 0;  // simulated wet, observed dry
  std::size_t correct_negatives = 0;
  double csi = 1.0;      // hits / (hits + misses + false_alarms); 1 when both masks are empty
  double jaccard = 1.0;  // |S & O| / |S | O|, identical to csi for binary masks
};

/// Throws std::invalid_argument on mismatched dimensions. Cells outside
/// `valid` (when given) are ignored.
MaskComparison compare_masks(const Mask& simulated, const Mask& observed,
                             const Mask* valid = nullptr);

/// Height statistics of the grid sampled along a coastline.
struct SpreadEntry {
  std::string feature_id;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double stddev = 0.0;
  double spread = 0.0;  // max - min
  std::size_t samples = 0;
};

/// Samples the grid bilinearly along the polyline at spacing <= dx/2
/// (vertices included). Throws std::out_of_range for vertices outside the grid.
SpreadEntry coastline_spread(const ElevationGrid& grid, const VectorFeature& coastline);

struct CorrectionParams {
  double h_dry = 1e-3;
  double spread_tolerance = 0.2;
  /// Depth left over a lowered cell; values below h_dry are raised to h_dry.
  double clearance = 1e-3;
};

struct CoastlineCheck {
  const VectorFeature* coastline = nullptr;
  SpreadEntry spread;
};

/// Constraints for the next assimilation round.
///  (i)  observed-wet cells that are simulated dry and 4-adjacent to simulated
///       water are lowered to (highest adjacent simulated free surface -
///       max(h_dry, clearance))
///       when that is below their current height; never raised.
///  (ii) cells of coastlines whose spread exceeds the tolerance are pinned to
///       the coastline's water-level mark.
ConstraintSet propose_corrections(const ElevationGrid& bed, std::span<const CoastlineCheck> coastlines,
                                  const Mask& simulated, const Mask& observed,
                                  const ElevationGrid& free_surface,
                                  const CorrectionParams& params = {});

}  // namespace demforge
