#include "demforge/pipeline.hpp"

#include "demforge/resample.hpp"

#include "../support/loop_scene.hpp"
#include "../support/oracles.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

using namespace demforge;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

ElevationGrid bumpy(const GridGeometry& g, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(10.0, 14.0);
  ElevationGrid b(g);
  for (auto& v : b.values()) v = u(rng);
  return b;
}

PipelineConfig parse(const std::string& text, const fs::path& dir = {}) {
  std::istringstream in(text);
  return parse_config(in, "p.cfg", dir);
}

std::size_t error_line(const std::string& text, const fs::path& dir = {}) {
  try {
    validate_config(parse(text, dir));
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

std::string error_text(const std::string& text, const fs::path& dir = {}) {
  try {
    validate_config(parse(text, dir));
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

// Small channel scene used by the feature-stage tests.
fs::path feature_scene(const std::string& name) {
  const auto dir = oracle::temp_dir(name);
  write_grid(bumpy(GridGeometry{20, 16, 0, 0, 5.0}, 4), dir / "base.asc");
  write_text(dir / "chan.txt", "TYPE=channel;ID=c;SECTION=2,10,1;10 40,90 40\n");
  write_text(dir / "pts.txt", "TYPE=points;ID=s;20 20 9.5,60 60 11\n");
  write_text(dir / "p.cfg",
             "base base.asc\n"
             "stage burn_channels features=chan.txt\n"
             "stage assimilate_points features=pts.txt\n"
             "stage relax region=all tol=1e-6\n");
  return dir;
}

}  // namespace

TEST(PipelineConfig, ParsesStagesAndLoop) {
  const auto c = parse(
      "# plan\n"
      "base dem.asc\n"
      "stage resample dx=5 dirs=8\n"
      "\n"
      "stage relax alpha=0.2\n"
      "loop max_rounds=2 csi_target=0.9\n",
      "/data");
  EXPECT_EQ(c.base_grid, "dem.asc");
  EXPECT_EQ(c.resolve(c.base_grid), fs::path("/data/dem.asc"));
  ASSERT_EQ(c.stages.size(), 2u);
  EXPECT_EQ(c.stages[0].kind, StageKind::resample);
  EXPECT_EQ(c.stages[0].number("dirs", 16), 8.0);
  EXPECT_EQ(c.stages[1].line, 5u);
  EXPECT_EQ(c.loop.max_rounds, 2);
  EXPECT_EQ(c.loop.csi_target, 0.9);
}

TEST(PipelineConfig, UnknownStageIsNamed) {
  EXPECT_EQ(error_line("base a.asc\nstage resample dx=1\nstage smooth k=2\n"), 3u);
  EXPECT_NE(error_text("base a.asc\nstage smooth k=2\n").find("smooth"), std::string::npos);
}

TEST(PipelineConfig, SyntaxErrorsCarryLines) {
  EXPECT_EQ(error_line("base a.asc\nstage relax colour=red\n"), 2u);
  EXPECT_EQ(error_line("base a.asc\nstage relax alpha=fast\n"), 2u);
  EXPECT_EQ(error_line("base a.asc\nstage relax alpha=0.1 alpha=0.2\n"), 2u);
  EXPECT_EQ(error_line("base a.asc\n\nstage resample\n"), 3u);
  EXPECT_EQ(error_line("base a.asc\nloop max_rounds=0\n"), 2u);
}

TEST(PipelineConfig, MissingFileListsPath) {
  const auto dir = oracle::temp_dir("cfg_missing");
  write_grid(ElevationGrid(GridGeometry{3, 3, 0, 0, 1.0}, 0.0), dir / "a.asc");
  const auto msg = error_text("base a.asc\nstage burn_channels features=nowhere.txt\n", dir);
  EXPECT_NE(msg.find((dir / "nowhere.txt").string()), std::string::npos);
  EXPECT_EQ(error_line("base a.asc\nstage burn_channels features=nowhere.txt\n", dir), 2u);
  EXPECT_NE(error_text("base gone.asc\n", dir).find("gone.asc"), std::string::npos);
}

TEST(PipelineConfig, OrderingRules) {
  const auto dir = oracle::temp_dir("cfg_order");
  write_grid(ElevationGrid(GridGeometry{3, 3, 0, 0, 1.0}, 0.0), dir / "a.asc");
  EXPECT_EQ(error_line("base a.asc\nstage relax\nstage resample dx=0.5\n", dir), 3u);
  EXPECT_EQ(error_line("base a.asc\nstage verify observed=a.asc\n", dir), 2u);
}

TEST(Describe, ThreeStagesThreeLines) {
  const auto dir = feature_scene("describe");
  const auto c = load_config(dir / "p.cfg");
  const auto plan = describe(c);
  std::istringstream in(plan);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_NE(lines[0].find("burn_channels"), std::string::npos);
  EXPECT_NE(lines[0].find((dir / "chan.txt").string()), std::string::npos);
  EXPECT_NE(lines[2].find("b1.asc"), std::string::npos);
}

TEST(Pipeline, ResampleOnlyMatchesRefine) {
  const auto dir = oracle::temp_dir("resample_only");
  write_grid(bumpy(GridGeometry{9, 7, 100, 50, 30.0}, 1), dir / "base.asc");
  write_text(dir / "p.cfg", "base base.asc\nstage resample dx=10\n");
  const auto report = run_pipeline(load_config(dir / "p.cfg"), dir / "work");
  ASSERT_EQ(report.grids.size(), 1u);
  EXPECT_TRUE(report.criteria_met);
  write_grid(refine(read_grid(dir / "base.asc"), {10.0}).grid, dir / "direct.asc");
  EXPECT_EQ(oracle::slurp(dir / "work" / "b0.asc"), oracle::slurp(dir / "direct.asc"));
}

TEST(Pipeline, FeatureStagesPersistEachRelax) {
  const auto dir = feature_scene("features");
  const auto report = run_pipeline(load_config(dir / "p.cfg"), dir / "work");
  ASSERT_EQ(report.grids.size(), 2u);
  const auto b1 = read_grid(dir / "work" / "b1.asc");
  // the burned centreline sits at the section depth below the bank
  const auto b0 = read_grid(dir / "work" / "b0.asc");
  EXPECT_LT(b1(10, 8), b0(10, 8));
  EXPECT_NEAR(b1(4, 4), 9.5, 1e-6);
  EXPECT_TRUE(fs::exists(dir / "work" / "report.txt"));
}

TEST(Pipeline, StageIsolation) {
  const auto dir = feature_scene("isolation");
  run_pipeline(load_config(dir / "p.cfg"), dir / "work");
  // rerun from the persisted input of the relax stage
  fs::copy_file(dir / "work" / "b0.asc", dir / "b0_in.asc");
  write_text(dir / "q.cfg",
             "base b0_in.asc\n"
             "stage burn_channels features=chan.txt\n"
             "stage assimilate_points features=pts.txt\n"
             "stage relax region=all tol=1e-6\n");
  const auto original = oracle::slurp(dir / "work" / "b1.asc");
  fs::remove(dir / "work" / "b1.asc");
  run_pipeline(load_config(dir / "q.cfg"), dir / "again");
  EXPECT_EQ(oracle::slurp(dir / "again" / "b1.asc"), original);
}

TEST(Pipeline, Deterministic) {
  const auto dir = feature_scene("determinism");
  const auto r1 = run_pipeline(load_config(dir / "p.cfg"), dir / "w1");
  const auto r2 = run_pipeline(load_config(dir / "p.cfg"), dir / "w2");
  EXPECT_EQ(r1.text(), r2.text());
  for (const char* f : {"b0.asc", "b1.asc", "report.txt"})
    EXPECT_EQ(oracle::slurp(dir / "w1" / f), oracle::slurp(dir / "w2" / f)) << f;
}

TEST(Pipeline, FailingStageKeepsLastGoodGrid) {
  const auto dir = feature_scene("failing");
  write_text(dir / "hyd.csv", "t_seconds,Q_m3s\n0,1\n");
  write_text(dir / "in.txt", "500 500\n");
  write_text(dir / "f.cfg",
             "base base.asc\n"
             "stage burn_channels features=chan.txt\n"
             "stage relax region=all\n"
             "stage simulate hydrograph=hyd.csv inflow=in.txt t_end=10\n");
  try {
    run_pipeline(load_config(dir / "f.cfg"), dir / "work");
    FAIL() << "expected a stage error";
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.stage(), "simulate");
    EXPECT_EQ(e.line(), 4u);
    EXPECT_EQ(oracle::slurp(e.last_good()), oracle::slurp(dir / "work" / "b1.asc"));
  }
  EXPECT_NE(oracle::slurp(dir / "work" / "report.txt").find("failed"), std::string::npos);
}

TEST(Pipeline, PerfectAgreementStopsAfterFirstRound) {
  const auto dir = oracle::temp_dir("perfect");
  const auto s = scene::write_loop_scene(dir);
  // the true bed reproduces the observation exactly
  write_grid(s.true_bed, dir / "corrupted.asc");
  const auto report = run_pipeline(load_config(s.config), dir / "work");
  EXPECT_EQ(report.rounds, 1);
  ASSERT_EQ(report.csi_per_round.size(), 1u);
  EXPECT_EQ(report.csi_per_round[0], 1.0);
  EXPECT_TRUE(report.criteria_met);
  EXPECT_EQ(report.grids.size(), 1u);
}

TEST(Pipeline, SillSceneImprovesAndNeverAddsMisses) {
  const auto dir = oracle::temp_dir("sill");
  const auto s = scene::write_loop_scene(dir);
  const auto report = run_pipeline(load_config(s.config), dir / "work");
  ASSERT_GE(report.csi_per_round.size(), 2u);
  EXPECT_GT(report.csi_per_round.back(), report.csi_per_round.front());
  for (std::size_t k = 1; k < report.misses_per_round.size(); ++k)
    EXPECT_LE(report.misses_per_round[k], report.misses_per_round[k - 1]);
  // the sill has been cut below the channel stage
  const auto last = read_grid(report.grids.back());
  EXPECT_LT(last(s.sill), s.corrupted_bed(s.sill));
  const auto text = oracle::slurp(dir / "work" / "report.txt");
  EXPECT_NE(text.find("broken_link erik 20 30"), std::string::npos);
}
