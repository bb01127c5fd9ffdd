// dem-forge: command line front end for the demforge library.

#include "demforge/assimilate.hpp"
#include "demforge/features.hpp"
#include "demforge/grid.hpp"
#include "demforge/hydrosim.hpp"
#include "demforge/morpho.hpp"
#include "demforge/pipeline.hpp"
#include "demforge/resample.hpp"
#include "demforge/verify.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace demforge;

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

ConstraintSet constraints_from_file(const ElevationGrid& grid, const fs::path& path,
                                    std::optional<double> surface, double conflict_tol,
                                    std::ostream& report) {
  ConstraintSet set(conflict_tol);
  for (const auto& f : read_features(path)) {
    switch (f.kind) {
      case FeatureKind::points: {
        auto ing = constraints_from_points(f.points, grid.geometry(), ConstraintSource::sounding,
                                           conflict_tol);
        for (const auto& r : ing.rejected)
          report << "rejected " << f.id << ' ' << r.index << " outside extent\n";
        set.append(ing.set);
        break;
      }
      case FeatureKind::isoline:
        set.append(constraints_from_isoline(f, grid.geometry()));
        break;
      case FeatureKind::depth_curve: {
        const auto s = f.surface ? f.surface : surface;
        if (!s) throw std::invalid_argument("depth curve '" + f.id + "' needs SURFACE or --surface");
        set.append(constraints_from_depth_curve(f, *s, grid.geometry()));
        break;
      }
      case FeatureKind::channel:
        if (!f.section) throw std::invalid_argument("channel '" + f.id + "' has no SECTION");
        set.append(burn_channel(grid, f, *f.section));
        break;
    }
  }
  return set;
}

void write_field(const ElevationGrid& g, const std::string& prefix, const std::string& name) {
  write_grid(g, prefix + "_" + name + ".asc");
  write_pgm(g, prefix + "_" + name + ".pgm");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DEM construction, assimilation, morphometry and flood simulation"};
  app.require_subcommand(1);

  // resample
  auto* rs = app.add_subcommand("resample", "Refine a grid by sector-search inverse distance weighting");
  std::string rs_in, rs_out;
  ResampleParams rp;
  rs->add_option("--in", rs_in)->required();
  rs->add_option("--out", rs_out)->required();
  rs->add_option("--dx", rp.target_dx)->required();
  rs->add_option("--dirs", rp.n_directions);
  rs->add_option("--radius", rp.search_radius);
  rs->add_option("--power", rp.idw_power);

  // assimilate
  auto* as = app.add_subcommand("assimilate", "Pin vector features and relax the grid around them");
  std::string as_in, as_out, as_report;
  std::vector<std::string> as_features;
  std::optional<double> as_surface;
  double as_conflict = kDefaultConflictTolerance;
  SolverParams sp;
  as->add_option("--in", as_in)->required();
  as->add_option("--features", as_features)->required();
  as->add_option("--alpha", sp.alpha);
  as->add_option("--tol", sp.tol);
  as->add_option("--max-iter", sp.max_iter);
  as->add_option("--surface", as_surface, "Water surface for depth curves without SURFACE");
  as->add_option("--conflict-tol", as_conflict);
  as->add_option("--out", as_out)->required();
  as->add_option("--report", as_report);

  // morpho
  auto* mo = app.add_subcommand("morpho", "Slope and curvature grids with PGM previews");
  std::string mo_in, mo_prefix;
  mo->add_option("--in", mo_in)->required();
  mo->add_option("--out-prefix", mo_prefix)->required();

  auto* sk = app.add_subcommand("spikes", "List nodes deviating from their 8-neighbour median");
  std::string sk_in;
  double sk_threshold = 5.0;
  sk->add_option("--in", sk_in)->required();
  sk->add_option("--threshold", sk_threshold)->required();

  auto* cn = app.add_subcommand("connectivity", "Find sills blocking channel paths at a stage");
  std::string cn_in, cn_channel;
  double cn_stage = 0.0;
  cn->add_option("--in", cn_in)->required();
  cn->add_option("--channel", cn_channel)->required();
  cn->add_option("--stage", cn_stage)->required();

  // simulate
  auto* si = app.add_subcommand("simulate", "Shallow-water inundation driven by a hydrograph");
  std::string si_bed, si_hydro, si_inflow, si_out;
  double si_tend = 0.0, si_snap = 0.0;
  std::vector<std::string> si_open;
  SimParams simp;
  si->add_option("--bed", si_bed)->required();
  si->add_option("--hydrograph", si_hydro)->required();
  si->add_option("--t-end", si_tend)->required();
  si->add_option("--snap", si_snap)->required();
  si->add_option("--inflow", si_inflow)->required();
  si->add_option("--out-dir", si_out)->required();
  si->add_option("--manning", simp.manning_n);
  si->add_option("--cfl", simp.cfl);
  si->add_option("--h-dry", simp.h_dry);
  si->add_option("--open", si_open, "Open sides: west east south north")
      ->check(CLI::IsMember({"west", "east", "south", "north"}));

  // verify
  auto* ve = app.add_subcommand("verify", "Compare simulated and observed extents, propose corrections");
  std::string ve_dem, ve_depth, ve_obs, ve_coast, ve_out;
  CorrectionParams cp;
  double ve_wet = 0.01;
  ve->add_option("--dem", ve_dem)->required();
  ve->add_option("--sim-depth", ve_depth)->required();
  ve->add_option("--observed-mask", ve_obs)->required();
  ve->add_option("--coastlines", ve_coast);
  ve->add_option("--spread-tol", cp.spread_tolerance);
  ve->add_option("--wet-threshold", ve_wet);
  ve->add_option("--h-dry", cp.h_dry);
  ve->add_option("--clearance", cp.clearance);
  ve->add_option("--out-constraints", ve_out);

  // pipeline
  auto* pi = app.add_subcommand("pipeline", "Run a staged configuration");
  std::string pi_config, pi_workdir;
  pi->add_option("--config", pi_config)->required();
  pi->add_option("--workdir", pi_workdir)->required();

  auto* de = app.add_subcommand("describe", "Print the plan of a configuration without running it");
  std::string de_config;
  de->add_option("--config", de_config)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (rs->parsed()) {
      const auto r = refine(read_grid(rs_in), rp);
      write_grid(r.grid, rs_out);
      std::cout << "grid " << r.grid.cols() << 'x' << r.grid.rows() << " dx " << num(r.grid.dx())
                << "\nunfilled " << r.unfilled << '\n';
    } else if (as->parsed()) {
      const auto grid = read_grid(as_in);
      std::ostringstream rep;
      ConstraintSet set(as_conflict);
      for (const auto& f : as_features) set.append(constraints_from_file(grid, f, as_surface, as_conflict, rep));
      const auto conflicts = check_constraint_consistency(set);
      const auto r = relax(grid, set, sp);
      write_grid(r.grid, as_out);
      rep << "constraints " << set.size() << "\nconflicts " << conflicts.size() << '\n';
      for (const auto& c : conflicts)
        rep << "conflict " << c.node.i << ' ' << c.node.j << " spread " << num(c.spread) << '\n';
      rep << "iterations " << r.iterations << "\nfinal_update " << num(r.final_update)
          << "\nlaplace_residual " << num(r.laplace_residual) << "\nconverged "
          << (r.converged ? "yes" : "no") << '\n';
      std::cout << rep.str();
      if (!as_report.empty()) std::ofstream(as_report) << rep.str();
      return r.converged ? 0 : 1;
    } else if (mo->parsed()) {
      const auto f = morpho_fields(read_grid(mo_in));
      write_field(f.slope, mo_prefix, "slope");
      write_field(f.profile_curvature, mo_prefix, "kt");
      write_field(f.tangential_curvature, mo_prefix, "ks");
    } else if (sk->parsed()) {
      for (const auto& s : detect_spikes(read_grid(sk_in), sk_threshold))
        std::cout << "spike " << s.node.i << ' ' << s.node.j << ' ' << num(s.magnitude) << '\n';
    } else if (cn->parsed()) {
      const auto grid = read_grid(cn_in);
      for (const auto& f : read_features(cn_channel))
        for (const auto& l : check_connectivity(grid, f, cn_stage))
          std::cout << "broken_link " << l.channel_id << ' ' << l.sill.i << ' ' << l.sill.j << ' '
                    << num(l.sill_height) << '\n';
    } else if (si->parsed()) {
      for (const auto& s : si_open)
        simp.set_boundary(s == "west" ? Side::west : s == "east" ? Side::east
                          : s == "south" ? Side::south : Side::north, Boundary::open);
      simp.inflow_cells = read_cells(si_inflow);
      const auto res = run(read_grid(si_bed), simp, read_hydrograph(si_hydro), si_tend, si_snap);
      fs::create_directories(si_out);
      std::ofstream summary(fs::path(si_out) / "summary.txt");
      for (std::size_t k = 0; k < res.snapshots.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "depth_%04zu.asc", k);
        write_grid(res.snapshots[k].h, fs::path(si_out) / name);
        summary << "snapshot " << name << " t " << num(res.snapshots[k].t) << '\n';
      }
      summary << "steps " << res.steps << "\ninflow_volume " << num(res.inflow_volume)
              << "\noutflow_volume " << num(res.outflow_volume) << "\nstored_volume "
              << num(res.stored_volume) << "\nmass_balance_error " << num(res.mass_balance_error) << '\n';
      std::cout << "steps " << res.steps << "\nmass_balance_error " << num(res.mass_balance_error) << '\n';
    } else if (ve->parsed()) {
      const auto dem = read_grid(ve_dem);
      const auto depth = read_grid(ve_depth);
      const auto observed = mask_from_grid(read_grid(ve_obs));
      if (depth.cols() != dem.cols() || depth.rows() != dem.rows())
        throw std::invalid_argument("depth grid dimensions differ from the DEM");
      Mask simulated(dem.geometry());
      ElevationGrid surface = dem;
      for (int j = 0; j < dem.rows(); ++j)
        for (int i = 0; i < dem.cols(); ++i) {
          const double h = depth.valid(i, j) ? depth(i, j) : 0.0;
          simulated.set(i, j, h >= ve_wet);
          if (dem.valid(i, j)) surface(i, j) = dem(i, j) + h;
        }
      std::vector<VectorFeature> coasts;
      if (!ve_coast.empty())
        for (auto& f : read_features(ve_coast))
          if (f.kind == FeatureKind::isoline) coasts.push_back(std::move(f));
      std::vector<CoastlineCheck> checks;
      for (const auto& c : coasts) {
        const auto e = coastline_spread(dem, c);
        std::cout << "feature " << e.feature_id << " spread " << num(e.spread) << " min " << num(e.min)
                  << " max " << num(e.max) << " mean " << num(e.mean) << " stddev " << num(e.stddev)
                  << (e.spread > cp.spread_tolerance ? " flagged" : "") << '\n';
        checks.push_back({&c, e});
      }
      const auto cmp = compare_masks(simulated, observed);
      std::cout << "hits " << cmp.hits << "\nmisses " << cmp.misses << "\nfalse_alarms "
                << cmp.false_alarms << "\ncsi " << num(cmp.csi) << '\n';
      const auto set = propose_corrections(dem, checks, simulated, observed, surface, cp);
      std::cout << "corrections " << set.size() << '\n';
      if (!ve_out.empty()) {
        VectorFeature out;
        out.kind = FeatureKind::points;
        out.id = "corrections";
        for (const auto& c : set.constraints())
          out.points.push_back({dem.geometry().x(c.i), dem.geometry().y(c.j), c.value});
        std::vector<VectorFeature> list;
        if (!out.points.empty()) list.push_back(out);
        write_features(list, ve_out);
      }
    } else if (pi->parsed()) {
      const auto report = run_pipeline(load_config(pi_config), pi_workdir);
      std::cout << report.text();
      return report.criteria_met ? 0 : 1;
    } else if (de->parsed()) {
      std::cout << describe(load_config(de_config));
    }
  } catch (const std::exception& e) {
    std::cerr << "dem-forge: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
