// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include "demforge/assimilate.hpp"
#include "demforge/grid.hpp"
#include "demforge/hydrosim.hpp"
#include "demforge/morpho.hpp"
#include "demforge/pipeline.hpp"
#include "demforge/verify.hpp"

#include "../support/loop_scene.hpp"
#include "../support/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

using namespace demforge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

int failures = 0;

void criterion(int n, const char* name, double time_limit, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs >= time_limit) {
    o.pass = false;
    o.detail += fmt(" (over the %.0f s limit)", time_limit);
  }
  if (!o.pass) ++failures;
  std::printf("%s %d %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

Outcome morphometry() {
  const double dx = 0.01;
  const auto g = ElevationGrid::from_function(GridGeometry{401, 401, -2.0, -2.0, dx},
                                              [](double x, double y) { return 0.5 * (x * x + y * y); });
  const auto m = morpho_fields(g);
  const auto n = g.geometry().nearest_node(1.0, 0.0);
  // direct substitution at (1, 0): b_x = 1, b_y = 0, b_xx = b_yy = 1, b_xy = 0
  const double bx = 1, by = 0, bxx = 1, byy = 1, bxy = 0;
  const double p = bx * bx + by * by, q = 1 + p;
  const double kt = (bxx * by * by - 2 * bxy * bx * by + byy * bx * bx) / (p * std::sqrt(q));
  const double ks = (bxx * by * by + 2 * bxy * bx * by + byy * bx * bx) / (p * std::sqrt(q * q * q));
  const double et = std::abs(m.profile_curvature(n) - kt) / kt;
  const double es = std::abs(m.tangential_curvature(n) - ks) / ks;

  const auto plane = ElevationGrid::from_function(GridGeometry{41, 41, -2.0, -2.0, 0.1},
                                                  [](double x, double) { return x; });
  double slope_err = 0.0;
  for (double s : morpho_fields(plane).slope.values()) slope_err = std::max(slope_err, std::abs(s - 45.0));

  const bool ok = et <= 1e-3 && es <= 1e-3 && slope_err <= 1e-9;
  return {ok, "k_t rel err " + fmt("%.2e", et) + ", k_s rel err " + fmt("%.2e", es) +
                  ", slope err " + fmt("%.1e", slope_err) + " deg"};
}

ConstraintSet random_constraints(const GridGeometry& g, std::mt19937& rng, int count, double lo,
                                 double hi) {
  std::uniform_int_distribution<int> ui(0, g.n_cols - 1), uj(0, g.n_rows - 1);
  std::uniform_real_distribution<double> uv(lo, hi);
  ConstraintSet set(0.0);
  std::vector<char> used(g.size(), 0);
  for (int k = 0; k < count;) {
    const int i = ui(rng), j = uj(rng);
    if (used[g.index(i, j)]) continue;
    used[g.index(i, j)] = 1;
    set.add({i, j, uv(rng), ConstraintSource::sounding, std::nullopt});
    ++k;
  }
  return set;
}

Outcome relax_vs_direct() {
  std::mt19937 rng(2024);
  std::uniform_int_distribution<int> size(10, 50);
  SolverParams params;
  params.alpha = 0.25;
  params.tol = 1e-6;
  params.max_iter = 2000000;
  double worst = 0.0;
  bool pins_exact = true, converged = true;
  for (int run = 0; run < 20; ++run) {
    const GridGeometry g{size(rng), size(rng), 0, 0, 1.0};
    const int count = std::uniform_int_distribution<int>(3, static_cast<int>(g.size() / 10))(rng);
    const auto set = random_constraints(g, rng, count, -5.0, 5.0);
    const auto r = relax(ElevationGrid(g, 0.0), set, params);
    converged = converged && r.converged;
    const auto pins = set.resolve();
    const auto direct = oracle::direct_laplace(g, pins);
    for (std::size_t k = 0; k < g.size(); ++k)
      worst = std::max(worst, std::abs(r.grid.values()[k] - direct.values()[k]));
    for (const auto& p : pins) pins_exact = pins_exact && r.grid(p.node) == p.value;
  }
  return {worst < 1e-5 && pins_exact && converged,
          "max deviation " + fmt("%.2e", worst) + " m, pins " + (pins_exact ? "exact" : "NOT exact") +
              (converged ? "" : ", some runs did not converge")};
}

Outcome maximum_principle() {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> size(4, 24);
  SolverParams params;
  params.tol = 1e-5;
  params.max_iter = 200000;
  int violations = 0;
  double worst = 0.0;
  for (int run = 0; run < 1000; ++run) {
    const GridGeometry g{size(rng), size(rng), 0, 0, 1.0};
    const int count = std::uniform_int_distribution<int>(1, std::max<int>(1, g.size() / 8))(rng);
    const auto set = random_constraints(g, rng, count, -20.0, 20.0);
    const auto pins = set.resolve();
    double lo = pins[0].value, hi = pins[0].value;
    for (const auto& p : pins) {
      lo = std::min(lo, p.value);
      hi = std::max(hi, p.value);
    }
    std::uniform_real_distribution<double> init(lo, hi);
    ElevationGrid start(g);
    for (auto& v : start.values()) v = init(rng);
    const auto r = relax(start, set, params);
    for (double v : r.grid.values()) {
      const double out = std::max(lo - v, v - hi);
      if (out > 0.0) {
        ++violations;
        worst = std::max(worst, out);
      }
    }
  }
  return {violations == 0, std::to_string(violations) + " values outside the pin range over 1000 runs" +
                               (violations ? fmt(", worst %.2e", worst) : "")};
}

Outcome well_balancing() {
  const GridGeometry g{40, 30, 0, 0, 5.0};
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  ElevationGrid bed(g);
  for (auto& v : bed.values()) v = u(rng);
  SimParams p;
  const auto lake = FlowState::at_rest(bed, 2.5);
  ShallowWaterSolver still(bed, p, Hydrograph(), lake);
  for (int s = 0; s < 1000; ++s) still.step();
  double dh = 0.0;
  for (std::size_t k = 0; k < g.size(); ++k)
    dh = std::max(dh, std::abs(still.state().h.values()[k] - lake.h.values()[k]));

  auto moving = lake;
  for (int j = 0; j < g.n_rows; ++j)
    for (int i = 0; i < 12; ++i) moving.h(i, j) += 1.5;
  ShallowWaterSolver basin(bed, p, Hydrograph(), moving);
  const double v0 = moving.volume();
  bool nonneg = true;
  for (int s = 0; s < 10000; ++s) {
    basin.step();
    if (s % 100 == 0)
      for (double h : basin.state().h.values()) nonneg = nonneg && h >= 0.0;
  }
  const double dv = std::abs(basin.state().volume() - v0) / v0;
  return {dh <= 1e-10 && dv <= 1e-8 && nonneg,
          "lake-at-rest max |dh| " + fmt("%.2e", dh) + " m over 1000 steps, basin volume drift " +
              fmt("%.2e", dv) + " over 10000 steps"};
}

Outcome dam_break() {
  const int n = 1000;
  const double dx = 1.0;
  const GridGeometry g{n, 2, 0, 0, dx};
  const ElevationGrid bed(g, 0.0);
  auto initial = FlowState::dry(g);
  for (int j = 0; j < 2; ++j)
    for (int i = 0; i < n / 2; ++i) initial.h(i, j) = 1.0;
  const double x_dam = g.x(n / 2) - 0.5 * dx;
  SimParams p;
  p.manning_n = 0.0;
  ShallowWaterSolver solver(bed, p, Hydrograph(), initial);
  const double c0 = std::sqrt(p.gravity);
  // fan from -c0 t to 2 c0 t covers 200 cells
  const double t = 200.0 * dx / (3.0 * c0);
  solver.advance_to(t);
  double err = 0.0, norm = 0.0;
  for (int i = 0; i < n; ++i) {
    const double exact = oracle::ritter_depth(g.x(i) - x_dam, t, 1.0, p.gravity);
    err += std::abs(solver.state().h(i, 0) - exact) * dx;
    norm += exact * dx;
  }
  const double rel = err / norm;
  return {rel < 0.02, "relative L1 error " + fmt("%.4f", rel) + " with the fan over " +
                          fmt("%.0f", 3 * c0 * t / dx) + " cells"};
}

Outcome connectivity() {
  const GridGeometry g{80, 20, 0, 0, 5.0};
  ElevationGrid bed(g, 10.0);
  for (int i = 0; i < 80; ++i) bed(i, 10) = 4.0 - 0.02 * i;
  const double stage = 5.0;
  const std::vector<std::pair<int, double>> sills{{15, 6.2}, {40, 5.5}, {63, 7.0}};
  for (const auto& [i, h] : sills) bed(i, 10) = h;
  VectorFeature path;
  path.kind = FeatureKind::channel;
  path.id = "main";
  path.vertices = {{g.x(0), g.y(10)}, {g.x(79), g.y(10)}};
  const auto links = check_connectivity(bed, path, stage);
  bool ok = links.size() == sills.size();
  for (std::size_t k = 0; ok && k < links.size(); ++k)
    ok = links[k].sill == NodeIndex{sills[k].first, 10} && links[k].sill_height == sills[k].second;
  return {ok, std::to_string(links.size()) + " breaks reported"};
}

Outcome coastline() {
  const double gradient = 1e-3, diameter = 400.0;
  const auto plane = ElevationGrid::from_function(GridGeometry{101, 101, 0, 0, 10.0},
                                                  [gradient](double x, double) { return 3.0 + gradient * x; });
  VectorFeature circle;
  circle.kind = FeatureKind::isoline;
  circle.id = "ring";
  circle.level = 3.5;
  for (int k = 0; k <= 360; ++k) {
    const double a = 2 * std::numbers::pi * k / 360;
    circle.vertices.push_back({500 + 0.5 * diameter * std::cos(a), 500 + 0.5 * diameter * std::sin(a)});
  }
  const double spread = coastline_spread(plane, circle).spread;
  const double expected = gradient * diameter;
  const bool circle_ok = std::abs(spread - expected) <= 0.05 * expected;

  // two marks of one shoreline on opposite slopes, 0.5 m apart
  ElevationGrid reservoir(GridGeometry{21, 11, 0, 0, 25.0}, 0.0);
  for (int j = 0; j < 11; ++j)
    for (int i = 0; i < 21; ++i) reservoir(i, j) = i < 10 ? 14.0 : 14.5;
  VectorFeature pair;
  pair.kind = FeatureKind::isoline;
  pair.id = "1a-1b";
  pair.level = 14.0;
  pair.vertices = {{50.0, 125.0}, {450.0, 125.0}};
  const double pair_spread = coastline_spread(reservoir, pair).spread;
  return {circle_ok && pair_spread == 0.5,
          "circle spread " + fmt("%.4f", spread) + " m (expected " + fmt("%.1f", expected) +
              "), pair spread " + fmt("%.6f", pair_spread) + " m"};
}

fs::path scene_dir() { return fs::temp_directory_path() / "demforge_acceptance"; }

Outcome loop_improvement() {
  fs::remove_all(scene_dir());
  // one evaluation plus two correction rounds
  const auto s = scene::write_loop_scene(scene_dir(), 3, 1.0);
  const auto r = run_pipeline(load_config(s.config), scene_dir() / "run1");
  const double first = r.csi_per_round.front(), last = r.csi_per_round.back();
  std::string rounds;
  for (double c : r.csi_per_round) rounds += (rounds.empty() ? "" : " -> ") + fmt("%.4f", c);
  return {last >= 0.9 && last > first, "csi " + rounds};
}

Outcome reproducibility() {
  const auto cfg = load_config(scene_dir() / "pipeline.cfg");
  const auto r = run_pipeline(cfg, scene_dir() / "run2");
  std::size_t compared = 0;
  bool same = true;
  std::vector<std::string> names{"report.txt"};
  for (const auto& g : r.grids) names.push_back(g.filename().string());
  for (const auto& name : names) {
    const auto a = scene_dir() / "run1" / name;
    if (!fs::exists(a)) return {false, "missing " + a.string()};
    same = same && oracle::slurp(a) == oracle::slurp(scene_dir() / "run2" / name);
    ++compared;
  }
  return {same, std::to_string(compared) + " files compared, " + (same ? "all identical" : "differences found")};
}

}  // namespace

int main() {
  criterion(1, "morphometry oracle", 1.0, morphometry);
  criterion(2, "relaxation vs direct Laplace solve", 30.0, relax_vs_direct);
  criterion(3, "maximum principle", 60.0, maximum_principle);
  criterion(4, "well-balancing and conservation", 1e9, well_balancing);
  criterion(5, "dam-break accuracy", 30.0, dam_break);
  criterion(6, "connectivity detection", 1.0, connectivity);
  criterion(7, "coastline spread", 1e9, coastline);
  criterion(8, "end-to-end loop improvement", 300.0, loop_improvement);
  criterion(9, "reproducibility", 1e9, reproducibility);
  return failures == 0 ? 0 : 1;
}
