#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace demforge {

enum class StageKind {
  resample,
  embed_charts,
  burn_channels,
  assimilate_points,
  assimilate_coastlines,
  relax,
  morpho_check,
  simulate,
  verify
};

std::string_view to_string(StageKind kind);
std::optional<StageKind> stage_kind_from_string(std::string_view name);

struct StageSpec {
  StageKind kind = StageKind::relax;
  std::vector<std::pair<std::string, std::string>> args;  // in file order
  std::size_t line = 0;

  std::optional<std::string> get(std::string_view key) const;
  double number(std::string_view key, double fallback) const;
};

struct LoopSpec {
  int max_rounds = 3;
  double csi_target = 0.8;
  double spread_tol = 0.2;
  std::optional<double> clearance;  // defaults to the simulation's h_dry
  std::string region = "pins";
  int radius = 1;
  double alpha = 0.25;
  double tol = 1e-4;
  int max_iter = 100000;
  std::size_t line = 0;
};

/// Parsed pipeline configuration. Relative paths are resolved against
/// `base_dir` (the directory holding the config file).
struct PipelineConfig {
  std::string source = "<stream>";
  std::filesystem::path base_dir;
  std::filesystem::path base_grid;
  std::size_t base_line = 0;
  std::vector<StageSpec> stages;
  LoopSpec loop;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Line-oriented config:
///   base <grid.asc>
///   stage <name> key=value ...
///   loop key=value ...
/// '#' starts a comment line. Unknown stage names, unknown keys, missing
/// required keys and malformed numbers raise ParseError with the line number.
PipelineConfig parse_config(std::istream& in, const std::string& source = "<stream>",
                            const std::filesystem::path& base_dir = {});

/// Stage ordering and file existence. Throws ParseError naming the line and,
/// for missing files, the resolved path.
void validate_config(const PipelineConfig& config);

/// parse_config + validate_config.
PipelineConfig load_config(const std::filesystem::path& path);

/// One line per stage with its parameters and file bindings.
std::string describe(const PipelineConfig& config);

/// A stage failed. The last good grid was written to `last_good`.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, std::size_t line, std::filesystem::path last_good,
                const std::string& message);

  const std::string& stage() const noexcept { return stage_; }
  std::size_t line() const noexcept { return line_; }
  const std::filesystem::path& last_good() const noexcept { return last_good_; }

 private:
  std::string stage_;
  std::size_t line_;
  std::filesystem::path last_good_;
};

struct PipelineReport {
  std::vector<std::string> lines;
  std::vector<std::filesystem::path> grids;  // b0.asc, b1.asc, ... in order written
  std::vector<double> csi_per_round;
  std::vector<std::size_t> misses_per_round;
  double max_spread = 0.0;
  int rounds = 0;
  bool verified = false;        // a verify stage ran
  bool criteria_met = false;    // verified and both stop criteria hold

  std::string text() const;
};

/// Runs every stage, writing grids and report.txt into `workdir` (created if
/// needed).
PipelineReport run_pipeline(const PipelineConfig& config, const std::filesystem::path& workdir);

}  // namespace demforge
