#pragma once

#include "demforge/grid.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace demforge {

struct HydrographSample {
  double t = 0.0;  // s
  double q = 0.0;  // m^3/s
};

/// Piecewise-linear discharge Q(t), held constant outside the sampled range.
class Hydrograph {
 public:
  Hydrograph();  // Q = 0 everywhere
  explicit Hydrograph(std::vector<HydrographSample> samples);

  static Hydrograph constant(double q);

  double discharge(double t) const;
  /// Exact integral of Q over [t0, t1].
  double volume(double t0, double t1) const;
  std::span<const HydrographSample> samples() const noexcept { return samples_; }

 private:
  double cumulative(double t) const;
  std::vector<HydrographSample> samples_;
};

/// CSV with header `t_seconds,Q_m3s` and one `t,Q` sample per line.
Hydrograph parse_hydrograph(std::istream& in, const std::string& source = "<stream>");
Hydrograph read_hydrograph(const std::filesystem::path& path);

/// Cell list file: one `i j` pair per line (column, row counted from the south).
std::vector<NodeIndex> parse_cells(std::istream& in, const std::string& source = "<stream>");
std::vector<NodeIndex> read_cells(const std::filesystem::path& path);

/// Depth and unit discharges on the bed grid.
struct FlowState {
  ElevationGrid h;   // m
  ElevationGrid qu;  // m^2/s, x
  ElevationGrid qv;  // m^2/s, y
  double t = 0.0;

  static FlowState dry(const GridGeometry& geometry, double t = 0.0);
  /// Still water at `surface` over `bed` (zero depth where the bed is higher).
  static FlowState at_rest(const ElevationGrid& bed, double surface, double t = 0.0);

  double volume() const;
};

enum class Boundary { closed, open };
enum class Side { west = 0, east = 1, south = 2, north = 3 };

inline constexpr double kDefaultDryDepth = 1e-3;

struct SimParams {
  double cfl = 0.4;
  double h_dry = kDefaultDryDepth;
  double manning_n = 0.03;
  double gravity = 9.81;
  double max_dt = 10.0;  // used while the domain is still
  double min_dt = 1e-6;
  std::vector<NodeIndex> inflow_cells;
  std::array<Boundary, 4> boundaries{Boundary::closed, Boundary::closed, Boundary::closed,
                                     Boundary::closed};

  Boundary boundary(Side s) const { return boundaries[static_cast<std::size_t>(s)]; }
  void set_boundary(Side s, Boundary b) { boundaries[static_cast<std::size_t>(s)] = b; }

  /// Throws std::invalid_argument on out-of-range values.
  void validate() const;
};

/// First-order well-balanced finite-volume shallow-water solver.
///
/// Interface fluxes use HLL on hydrostatically reconstructed states
/// (z* = max(zL, zR), h* = max(0, h + z - z*)) with the matching pressure
/// correction, so still water over any bed stays still. Friction is Manning,
/// applied semi-implicitly. Cells with h < h_dry carry no momentum. Nodata
/// bed cells are inactive and act as walls. Inflow adds the hydrograph volume
/// of each step uniformly over the inflow cells.
class ShallowWaterSolver {
 public:
  ShallowWaterSolver(ElevationGrid bed, SimParams params, Hydrograph hydrograph,
                     std::optional<FlowState> initial = std::nullopt);

  /// Advances one CFL-limited step, never past `t_limit`. Returns dt.
  double step(double t_limit = std::numeric_limits<double>::infinity());
  void advance_to(double t);

  const FlowState& state() const noexcept { return state_; }
  const ElevationGrid& bed() const noexcept { return bed_; }
  double time() const noexcept { return state_.t; }
  std::size_t steps() const noexcept { return steps_; }

  double inflow_volume() const noexcept { return inflow_volume_; }
  /// Net volume leaving through open boundaries.
  double outflow_volume() const noexcept { return outflow_volume_; }
  double stored_volume() const { return state_.volume() - initial_volume_; }
  /// (inflow - stored - outflow) / inflow, 0 without inflow.
  double mass_balance_error() const;

 private:
  struct Face {
    double mass = 0.0;
    double mom_left = 0.0;
    double mom_right = 0.0;
    double tangential = 0.0;
  };
  struct CellState {
    double h, un, ut, z;
  };

  Face interface_flux(const CellState& left, const CellState& right, double& max_speed) const;
  CellState cell(std::size_t k, bool x_normal) const;

  ElevationGrid bed_;
  SimParams params_;
  Hydrograph hydrograph_;
  FlowState state_;
  std::vector<unsigned char> active_;
  std::vector<Face> fx_;  // (n_cols + 1) * n_rows
  std::vector<Face> fy_;  // n_cols * (n_rows + 1)
  double initial_volume_ = 0.0;
  double inflow_volume_ = 0.0;
  double outflow_volume_ = 0.0;
  std::size_t steps_ = 0;
};

/// One solver step from `state`.
FlowState step(const FlowState& state, const ElevationGrid& bed, const SimParams& params,
               const Hydrograph& hydrograph);

struct RunResult {
  std::vector<FlowState> snapshots;
  double inflow_volume = 0.0;
  double outflow_volume = 0.0;
  double stored_volume = 0.0;
  double mass_balance_error = 0.0;
  std::size_t steps = 0;
};

/// Integrates to t_end from `initial` (dry by default). Snapshots are taken at
/// the start, at every multiple of snapshot_every and at t_end.
RunResult run(const ElevationGrid& bed, const SimParams& params, const Hydrograph& hydrograph,
              double t_end, double snapshot_every,
              std::optional<FlowState> initial = std::nullopt);

/// True where h >= threshold. Throws std::invalid_argument if threshold < h_dry.
Mask wet_mask(const FlowState& state, double threshold, double h_dry = kDefaultDryDepth);

}  // namespace demforge
