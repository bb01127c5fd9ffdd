#pragma once

// Synthetic verify/correct scene. The true bed is a flat floodplain with a
// burned channel; the corrupted bed adds one sill across the channel. The
// observed wet mask comes from a reference simulation on the true bed.

#include "demforge/assimilate.hpp"
#include "demforge/features.hpp"
#include "demforge/grid.hpp"
#include "demforge/hydrosim.hpp"

#include <filesystem>
#include <fstream>
#include <string>

namespace scene {

struct LoopScene {
  std::filesystem::path dir;
  std::filesystem::path config;
  demforge::ElevationGrid true_bed;
  demforge::ElevationGrid corrupted_bed;
  demforge::Mask observed;
  demforge::NodeIndex sill{20, 30};
};

inline constexpr double kFloodplain = 12.0;
inline constexpr double kDx = 10.0;
inline constexpr int kSize = 60;
inline constexpr double kTEnd = 3600.0;
inline constexpr double kWetThreshold = 0.01;

inline demforge::VectorFeature channel_feature() {
  demforge::VectorFeature f;
  f.kind = demforge::FeatureKind::channel;
  f.id = "erik";
  f.vertices = {{30.0, 300.0}, {560.0, 300.0}};
  f.section = demforge::ChannelSection{10.0, 30.0, 3.0};
  return f;
}

inline demforge::ElevationGrid true_bed() {
  demforge::GridGeometry g{kSize, kSize, 0.0, 0.0, kDx};
  demforge::ElevationGrid bed(g, kFloodplain);
  const auto ch = channel_feature();
  for (const auto& c : demforge::burn_channel(bed, ch, *ch.section).constraints()) bed(c.i, c.j) = c.value;
  return bed;
}

inline demforge::ElevationGrid corrupt(demforge::ElevationGrid bed, demforge::NodeIndex sill) {
  for (int dj = -1; dj <= 1; ++dj) bed(sill.i, sill.j + dj) = kFloodplain;
  return bed;
}

inline demforge::SimParams sim_params() {
  demforge::SimParams p;
  p.manning_n = 0.03;
  p.inflow_cells = {{4, 30}};
  return p;
}

inline demforge::Hydrograph hydrograph() {
  return demforge::Hydrograph({{0.0, 4.0}, {600.0, 4.0}, {601.0, 0.0}, {kTEnd, 0.0}});
}

inline demforge::Mask reference_mask(const demforge::ElevationGrid& bed) {
  demforge::ShallowWaterSolver s(bed, sim_params(), hydrograph());
  s.advance_to(kTEnd);
  return demforge::wet_mask(s.state(), kWetThreshold);
}

// Writes every input file plus pipeline.cfg into `dir`.
inline LoopScene write_loop_scene(const std::filesystem::path& dir, int max_rounds = 3,
                                  double csi_target = 1.0, double clearance = 0.5) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  LoopScene s;
  s.dir = dir;
  s.true_bed = true_bed();
  s.corrupted_bed = corrupt(s.true_bed, s.sill);
  s.observed = reference_mask(s.true_bed);

  demforge::write_grid(s.corrupted_bed, dir / "corrupted.asc");
  demforge::write_grid(demforge::grid_from_mask(s.observed), dir / "observed.asc");
  {
    std::ofstream h(dir / "hydrograph.csv");
    h << "t_seconds,Q_m3s\n";
    const auto hydro = hydrograph();
    for (const auto& smp : hydro.samples()) h << smp.t << ',' << smp.q << '\n';
  }
  {
    std::ofstream c(dir / "inflow.txt");
    for (const auto& n : sim_params().inflow_cells) c << n.i << ' ' << n.j << '\n';
  }
  std::vector<demforge::VectorFeature> channels{channel_feature()};
  demforge::write_features(channels, dir / "channel.txt");

  s.config = dir / "pipeline.cfg";
  std::ofstream cfg(s.config);
  cfg << "# sill scene\n"
      << "base corrupted.asc\n"
      << "stage morpho_check spike_threshold=5 channels=channel.txt stage_level=10\n"
      << "stage simulate hydrograph=hydrograph.csv inflow=inflow.txt t_end=" << kTEnd
      << " manning=0.03\n"
      << "stage verify observed=observed.asc wet_threshold=" << kWetThreshold << '\n'
      << "loop max_rounds=" << max_rounds << " csi_target=" << csi_target << " clearance=" << clearance << '\n';
  return s;
}

}  // namespace scene
