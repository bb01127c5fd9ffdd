#pragma once

#include "demforge/features.hpp"
#include "demforge/grid.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace demforge {

/// Morphostructural parameters of a height field.
struct MorphoFields {
  ElevationGrid slope;                 // degrees
  ElevationGrid profile_curvature;     // k_t, 1/m
  ElevationGrid tangential_curvature;  // k_s, 1/m
};

/// Below this value of p = b_x^2 + b_y^2 both curvatures are reported as 0.
inline constexpr double kFlatCellThreshold = 1e-12;

/// slope = (360 / 2pi) * atan(sqrt(p))
/// k_t   = (b_xx b_y^2 - 2 b_xy b_x b_y + b_yy b_x^2) / (p sqrt(q))
/// k_s   = (b_xx b_y^2 + 2 b_xy b_x b_y + b_yy b_x^2) / (p sqrt(q^3))
/// The curvature numerators are kept in exactly this form (b_xx paired with
/// b_y^2 in both). Nodata propagates from the derivative stencils.
MorphoFields morpho_fields(const DerivativeField& d);
MorphoFields morpho_fields(const ElevationGrid& grid);

struct Spike {
  NodeIndex node;
  double magnitude = 0.0;  // height minus neighbourhood median
};

/// Nodes deviating from the median of their 8 neighbours by more than
/// `threshold`. Only nodes whose 8 neighbours all exist and are valid are judged. Throws std::invalid_argument for threshold <= 0.
std::vector<Spike> detect_spikes(const ElevationGrid& grid, double threshold);

struct BrokenLink {
  std::string channel_id;
  NodeIndex sill;               // highest cell of the blocked run
  double sill_height = 0.0;
  std::size_t path_position = 0;  // index of `sill` along the traced path
  std::size_t run_length = 0;     // consecutive blocked cells
};

/// Walks the cells of a channel path in order and returns every maximal run
/// of cells whose bed lies above `stage` (nodata counts as blocked).
/// Throws std::invalid_argument for an empty path and std::out_of_range when
/// a vertex lies outside the grid.
std::vector<BrokenLink> check_connectivity(const ElevationGrid& grid,
                                           const VectorFeature& channel_path, double stage);

}  // namespace demforge
