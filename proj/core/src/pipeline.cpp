#include "demforge/pipeline.hpp"

#include "demforge/assimilate.hpp"
#include "demforge/features.hpp"
#include "demforge/grid.hpp"
#include "demforge/hydrosim.hpp"
#include "demforge/morpho.hpp"
#include "demforge/resample.hpp"
#include "demforge/verify.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace demforge {

namespace fs = std::filesystem;
using detail::format_shortest;

namespace {

constexpr std::array<std::pair<StageKind, std::string_view>, 9> kStageNames{{
    {StageKind::resample, "resample"},
    {StageKind::embed_charts, "embed_charts"},
    {StageKind::burn_channels, "burn_channels"},
    {StageKind::assimilate_points, "assimilate_points"},
    {StageKind::assimilate_coastlines, "assimilate_coastlines"},
    {StageKind::relax, "relax"},
    {StageKind::morpho_check, "morpho_check"},
    {StageKind::simulate, "simulate"},
    {StageKind::verify, "verify"},
}};

enum class ValueKind { number, integer, file, word };

struct KeyDef {
  std::string_view name;
  ValueKind kind;
  bool required = false;
};

std::vector<KeyDef> keys_for(StageKind kind) {
  using V = ValueKind;
  switch (kind) {
    case StageKind::resample:
      return {{"dx", V::number, true}, {"dirs", V::integer}, {"radius", V::number},
              {"power", V::number}};
    case StageKind::embed_charts:
      return {{"features", V::file, true}, {"surface", V::number}, {"tolerance", V::number}};
    case StageKind::burn_channels:
      return {{"features", V::file, true}};
    case StageKind::assimilate_points:
      return {{"features", V::file, true}, {"tolerance", V::number}};
    case StageKind::assimilate_coastlines:
      return {{"features", V::file, true}};
    case StageKind::relax:
      return {{"alpha", V::number}, {"tol", V::number}, {"max_iter", V::integer},
              {"region", V::word}, {"radius", V::integer}};
    case StageKind::morpho_check:
      return {{"spike_threshold", V::number}, {"channels", V::file}, {"stage_level", V::number}};
    case StageKind::simulate:
      return {{"hydrograph", V::file, true}, {"inflow", V::file, true}, {"t_end", V::number, true},
              {"manning", V::number}, {"cfl", V::number}, {"h_dry", V::number},
              {"max_dt", V::number}, {"open", V::word}};
    case StageKind::verify:
      return {{"observed", V::file, true}, {"coastlines", V::file}, {"wet_threshold", V::number}};
  }
  return {};
}

const std::vector<KeyDef> kLoopKeys{
    {"max_rounds", ValueKind::integer}, {"csi_target", ValueKind::number},
    {"spread_tol", ValueKind::number},  {"clearance", ValueKind::number},
    {"region", ValueKind::word},        {"radius", ValueKind::integer},
    {"alpha", ValueKind::number},       {"tol", ValueKind::number},
    {"max_iter", ValueKind::integer},
};

bool valid_region(std::string_view r) {
  return r == "all" || r == "nodata" || r == "pins" || r == "window";
}

std::optional<Side> side_from_string(std::string_view s) {
  if (s == "west") return Side::west;
  if (s == "east") return Side::east;
  if (s == "south") return Side::south;
  if (s == "north") return Side::north;
  return std::nullopt;
}

std::vector<std::pair<std::string, std::string>> parse_args(
    const std::vector<std::string_view>& tokens, std::size_t first, const std::vector<KeyDef>& defs,
    const std::string& what, const std::string& source, std::size_t line_no) {
  std::vector<std::pair<std::string, std::string>> args;
  for (std::size_t t = first; t < tokens.size(); ++t) {
    const auto tok = tokens[t];
    const auto eq = tok.find('=');
    if (eq == std::string_view::npos || eq == 0 || eq + 1 == tok.size())
      throw ParseError(source, line_no, "expected key=value, got '" + std::string(tok) + "'");
    const std::string key(tok.substr(0, eq));
    const std::string value(tok.substr(eq + 1));
    const auto def = std::find_if(defs.begin(), defs.end(), [&](const KeyDef& d) { return d.name == key; });
    if (def == defs.end())
      throw ParseError(source, line_no, "unknown key '" + key + "' for " + what);
    if (std::any_of(args.begin(), args.end(), [&](const auto& a) { return a.first == key; }))
      throw ParseError(source, line_no, "duplicate key '" + key + "'");
    if (def->kind == ValueKind::number) {
      const auto v = detail::parse_double(value);
      if (!v || !std::isfinite(*v))
        throw ParseError(source, line_no, "key '" + key + "' needs a number, got '" + value + "'");
    } else if (def->kind == ValueKind::integer) {
      if (!detail::parse_int(value))
        throw ParseError(source, line_no, "key '" + key + "' needs an integer, got '" + value + "'");
    }
    args.emplace_back(key, value);
  }
  for (const auto& d : defs)
    if (d.required && std::none_of(args.begin(), args.end(), [&](const auto& a) { return a.first == d.name; }))
      throw ParseError(source, line_no, what + " requires key '" + std::string(d.name) + "'");
  return args;
}

std::string fmt(double v) { return format_shortest(v); }

std::string grid_name(int k) { return "b" + std::to_string(k) + ".asc"; }

}  // namespace

std::string_view to_string(StageKind kind) {
  for (const auto& [k, name] : kStageNames)
    if (k == kind) return name;
  return "?";
}

std::optional<StageKind> stage_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kStageNames)
    if (n == name) return k;
  return std::nullopt;
}

std::optional<std::string> StageSpec::get(std::string_view key) const {
  for (const auto& [k, v] : args)
    if (k == key) return v;
  return std::nullopt;
}

double StageSpec::number(std::string_view key, double fallback) const {
  const auto v = get(key);
  return v ? *detail::parse_double(*v) : fallback;
}

fs::path PipelineConfig::resolve(const fs::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

PipelineConfig parse_config(std::istream& in, const std::string& source, const fs::path& base_dir) {
  PipelineConfig cfg;
  cfg.source = source;
  cfg.base_dir = base_dir;
  bool have_loop = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto tokens = detail::split_ws(body);
    const auto head = tokens[0];

    if (head == "base") {
      if (!cfg.base_grid.empty()) throw ParseError(source, line_no, "base given twice");
      if (tokens.size() != 2) throw ParseError(source, line_no, "expected 'base <grid.asc>'");
      auto arg = tokens[1];
      if (arg.starts_with("path=")) arg.remove_prefix(5);
      if (arg.empty()) throw ParseError(source, line_no, "empty base path");
      cfg.base_grid = std::string(arg);
      cfg.base_line = line_no;
    } else if (head == "stage") {
      if (tokens.size() < 2) throw ParseError(source, line_no, "stage without a name");
      const auto kind = stage_kind_from_string(tokens[1]);
      if (!kind) throw ParseError(source, line_no, "unknown stage '" + std::string(tokens[1]) + "'");
      StageSpec st;
      st.kind = *kind;
      st.line = line_no;
      st.args = parse_args(tokens, 2, keys_for(*kind), "stage " + std::string(tokens[1]), source, line_no);
      if (const auto r = st.get("region"); r && !valid_region(*r))
        throw ParseError(source, line_no, "unknown relax region '" + *r + "'");
      if (const auto o = st.get("open")) {
        for (const auto s : detail::split(*o, ','))
          if (!side_from_string(detail::trim(s)))
            throw ParseError(source, line_no, "unknown boundary side '" + std::string(s) + "'");
      }
      cfg.stages.push_back(std::move(st));
    } else if (head == "loop") {
      if (have_loop) throw ParseError(source, line_no, "loop given twice");
      have_loop = true;
      const auto args = parse_args(tokens, 1, kLoopKeys, "loop", source, line_no);
      auto& L = cfg.loop;
      L.line = line_no;
      for (const auto& [k, v] : args) {
        if (k == "max_rounds") L.max_rounds = static_cast<int>(*detail::parse_int(v));
        else if (k == "csi_target") L.csi_target = *detail::parse_double(v);
        else if (k == "spread_tol") L.spread_tol = *detail::parse_double(v);
        else if (k == "clearance") L.clearance = *detail::parse_double(v);
        else if (k == "region") L.region = v;
        else if (k == "radius") L.radius = static_cast<int>(*detail::parse_int(v));
        else if (k == "alpha") L.alpha = *detail::parse_double(v);
        else if (k == "tol") L.tol = *detail::parse_double(v);
        else if (k == "max_iter") L.max_iter = static_cast<int>(*detail::parse_int(v));
      }
      if (L.max_rounds < 1) throw ParseError(source, line_no, "max_rounds must be >= 1");
      if (!valid_region(L.region))
        throw ParseError(source, line_no, "unknown relax region '" + L.region + "'");
      if (L.radius < 0) throw ParseError(source, line_no, "radius must be >= 0");
      if (L.clearance && *L.clearance < 0.0)
        throw ParseError(source, line_no, "clearance must be >= 0");
    } else {
      throw ParseError(source, line_no, "unknown directive '" + std::string(head) + "'");
    }
  }
  if (cfg.base_grid.empty()) throw ParseError(source, line_no, "missing 'base <grid.asc>' line");
  return cfg;
}

void validate_config(const PipelineConfig& config) {
  const auto& src = config.source;
  auto require_file = [&](const fs::path& p, std::size_t line) {
    const auto full = config.resolve(p);
    if (!fs::is_regular_file(full))
      throw ParseError(src, line, "missing file: " + full.string());
  };
  require_file(config.base_grid, config.base_line);

  bool simulated = false;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const auto& st = config.stages[s];
    const auto name = std::string(to_string(st.kind));
    if (st.kind == StageKind::resample && s != 0)
      throw ParseError(src, st.line, "resample must be the first stage");
    if (st.kind == StageKind::verify) {
      if (s + 1 != config.stages.size()) throw ParseError(src, st.line, "verify must be the last stage");
      if (!simulated) throw ParseError(src, st.line, "verify needs an earlier simulate stage");
    }
    if (st.kind == StageKind::simulate) simulated = true;
    if (st.kind == StageKind::morpho_check && st.get("channels") && !st.get("stage_level"))
      throw ParseError(src, st.line, "morpho_check with channels requires key 'stage_level'");
    for (const auto& def : keys_for(st.kind)) {
      if (def.kind != ValueKind::file) continue;
      if (const auto v = st.get(def.name)) require_file(*v, st.line);
    }
  }
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  auto cfg = parse_config(in, path.string(), path.parent_path());
  validate_config(cfg);
  return cfg;
}

std::string describe(const PipelineConfig& config) {
  std::ostringstream out;
  int k = 0;
  for (std::size_t s = 0; s < config.stages.size(); ++s) {
    const auto& st = config.stages[s];
    out << s + 1 << ' ' << to_string(st.kind);
    if (s == 0 && st.kind != StageKind::resample) out << " in=" << config.resolve(config.base_grid).string();
    for (const auto& [key, value] : st.args) {
      const auto defs = keys_for(st.kind);
      const bool is_file = std::any_of(defs.begin(), defs.end(), [&](const KeyDef& d) {
        return d.name == key && d.kind == ValueKind::file;
      });
      out << ' ' << key << '=' << (is_file ? config.resolve(value).string() : value);
    }
    if (st.kind == StageKind::resample) out << " in=" << config.resolve(config.base_grid).string() << " -> b0.asc";
    if (st.kind == StageKind::relax) out << " -> " << grid_name(++k);
    if (st.kind == StageKind::verify) {
      const auto& L = config.loop;
      out << " loop max_rounds=" << L.max_rounds << " csi_target=" << fmt(L.csi_target)
          << " spread_tol=" << fmt(L.spread_tol) << " region=" << L.region;
    }
    out << '\n';
  }
  return out.str();
}

PipelineError::PipelineError(std::string stage, std::size_t line, fs::path last_good,
                             const std::string& message)
    : std::runtime_error("stage " + stage + " (line " + std::to_string(line) + "): " + message),
      stage_(std::move(stage)),
      line_(line),
      last_good_(std::move(last_good)) {}

std::string PipelineReport::text() const {
  std::string s;
  for (const auto& l : lines) {
    s += l;
    s += '\n';
  }
  return s;
}

namespace {

class Runner {
 public:
  Runner(const PipelineConfig& cfg, fs::path workdir) : cfg_(cfg), dir_(std::move(workdir)) {}

  PipelineReport run();

 private:
  void persist(ElevationGrid grid);
  void write_report() const;
  void log(std::string line) { report_.lines.push_back(std::move(line)); }
  std::string prefix(std::size_t s) const {
    return "stage " + std::to_string(s + 1) + ' ' + std::string(to_string(cfg_.stages[s].kind));
  }

  void do_resample(const StageSpec& st, std::size_t s);
  void do_features(const StageSpec& st, std::size_t s);
  void do_relax(const StageSpec& st, std::size_t s);
  void do_morpho(const StageSpec& st, std::size_t s);
  void do_simulate(const StageSpec& st, const std::string& label);
  void do_verify(const StageSpec& st, std::size_t s);

  RelaxResult relax_with(const ConstraintSet& extra, const std::string& region, int radius,
                         const SolverParams& sp);
  struct Evaluation {
    MaskComparison cmp;
    std::vector<SpreadEntry> spreads;
    double max_spread = 0.0;
  };
  Evaluation evaluate(const StageSpec& st);

  const PipelineConfig& cfg_;
  fs::path dir_;
  PipelineReport report_;
  ElevationGrid grid_;
  int k_ = -1;
  ConstraintSet applied_;
  ConstraintSet pending_;
  const StageSpec* sim_spec_ = nullptr;
  std::optional<FlowState> flow_;
  double sim_h_dry_ = kDefaultDryDepth;
  int sim_runs_ = 0;
  std::vector<VectorFeature> coastlines_;
};

void Runner::persist(ElevationGrid grid) {
  const auto path = dir_ / grid_name(++k_);
  write_grid(grid, path);
  grid_ = read_grid(path);
  report_.grids.push_back(path);
}

void Runner::write_report() const {
  std::ofstream out(dir_ / "report.txt", std::ios::binary);
  out << report_.text();
}

PipelineReport Runner::run() {
  fs::create_directories(dir_);
  const auto base = cfg_.resolve(cfg_.base_grid);
  try {
    grid_ = read_grid(base);
  } catch (const std::exception& e) {
    throw PipelineError("base", cfg_.base_line, {}, e.what());
  }
  log("base " + base.filename().string() + ' ' + std::to_string(grid_.cols()) + 'x' +
      std::to_string(grid_.rows()) + " dx=" + fmt(grid_.dx()) + " valid=" +
      std::to_string(grid_.count_valid()));
  if (cfg_.stages.empty() || cfg_.stages.front().kind != StageKind::resample) {
    persist(grid_);
    log("base -> " + grid_name(k_));
  }

  for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
    const auto& st = cfg_.stages[s];
    try {
      switch (st.kind) {
        case StageKind::resample: do_resample(st, s); break;
        case StageKind::embed_charts:
        case StageKind::burn_channels:
        case StageKind::assimilate_points:
        case StageKind::assimilate_coastlines: do_features(st, s); break;
        case StageKind::relax: do_relax(st, s); break;
        case StageKind::morpho_check: do_morpho(st, s); break;
        case StageKind::simulate: do_simulate(st, prefix(s)); break;
        case StageKind::verify: do_verify(st, s); break;
      }
    } catch (const std::exception& e) {
      const auto last = dir_ / "last_good.asc";
      if (grid_.cols() > 0) write_grid(grid_, last);
      log(prefix(s) + " failed: " + e.what());
      write_report();
      throw PipelineError(std::string(to_string(st.kind)), st.line, last, e.what());
    }
  }

  if (!report_.verified) report_.criteria_met = true;
  log(std::string("result criteria_met=") + (report_.criteria_met ? "yes" : "no") +
      " rounds=" + std::to_string(report_.rounds) + " grids=" + std::to_string(k_ + 1) +
      (report_.csi_per_round.empty() ? "" : " final_csi=" + fmt(report_.csi_per_round.back())));
  write_report();
  return report_;
}

void Runner::do_resample(const StageSpec& st, std::size_t s) {
  ResampleParams p;
  p.target_dx = st.number("dx", 0.0);
  p.n_directions = static_cast<int>(st.number("dirs", 16));
  p.search_radius = st.number("radius", 0.0);
  p.idw_power = st.number("power", 1.0);
  auto r = refine(grid_, p);
  persist(std::move(r.grid));
  log(prefix(s) + ' ' + std::to_string(grid_.cols()) + 'x' + std::to_string(grid_.rows()) +
      " dx=" + fmt(grid_.dx()) + " unfilled=" + std::to_string(r.unfilled) + " -> " + grid_name(k_));
}

void Runner::do_features(const StageSpec& st, std::size_t s) {
  const auto features = read_features(cfg_.resolve(*st.get("features")));
  const auto& g = grid_.geometry();
  const double tol = st.number("tolerance", kDefaultConflictTolerance);
  ConstraintSet added;
  std::size_t rejected = 0;
  std::size_t point_conflicts = 0;

  auto wrong = [&](const VectorFeature& f) {
    return std::invalid_argument("feature '" + f.id + "' of type " + std::string(to_string(f.kind)) +
                                 " is not accepted here");
  };
  for (const auto& f : features) {
    switch (st.kind) {
      case StageKind::embed_charts:
        if (f.kind == FeatureKind::depth_curve) {
          std::optional<double> surface = f.surface;
          if (!surface && st.get("surface")) surface = st.number("surface", 0.0);
          if (!surface)
            throw std::invalid_argument("depth curve '" + f.id + "' has no water surface (SURFACE or surface=)");
          added.append(constraints_from_depth_curve(f, *surface, g));
        } else if (f.kind == FeatureKind::points) {
          auto ing = constraints_from_points(f.points, g, ConstraintSource::sounding, tol);
          rejected += ing.rejected.size();
          point_conflicts += ing.conflicts.size();
          added.append(ing.set);
        } else if (f.kind == FeatureKind::isoline) {
          added.append(constraints_from_isoline(f, g, ConstraintSource::depth_curve));
        } else {
          throw wrong(f);
        }
        break;
      case StageKind::burn_channels:
        if (f.kind != FeatureKind::channel || !f.section) throw wrong(f);
        added.append(burn_channel(grid_, f, *f.section));
        break;
      case StageKind::assimilate_points: {
        if (f.kind != FeatureKind::points) throw wrong(f);
        auto ing = constraints_from_points(f.points, g, ConstraintSource::sounding, tol);
        rejected += ing.rejected.size();
        point_conflicts += ing.conflicts.size();
        added.append(ing.set);
        break;
      }
      case StageKind::assimilate_coastlines:
        if (f.kind != FeatureKind::isoline) throw wrong(f);
        added.append(constraints_from_isoline(f, g, ConstraintSource::coastline));
        break;
      default:
        break;
    }
  }
  pending_.append(added);
  ConstraintSet all = applied_;
  all.append(pending_);
  const auto conflicts = check_constraint_consistency(all);
  log(prefix(s) + " features=" + std::to_string(features.size()) + " constraints=" +
      std::to_string(added.size()) + " rejected=" + std::to_string(rejected) +
      " point_conflicts=" + std::to_string(point_conflicts) +
      " conflicts=" + std::to_string(conflicts.size()));
  for (const auto& c : conflicts)
    log("  conflict " + std::to_string(c.node.i) + ' ' + std::to_string(c.node.j) + " spread=" +
        fmt(c.spread) + " count=" + std::to_string(c.count));
}

RelaxResult Runner::relax_with(const ConstraintSet& extra, const std::string& region, int radius,
                               const SolverParams& sp) {
  ConstraintSet pins = applied_;
  pins.append(extra);
  const auto& g = grid_.geometry();
  std::optional<Mask> active;
  if (region == "nodata") {
    active.emplace(g);
    for (int j = 0; j < g.n_rows; ++j)
      for (int i = 0; i < g.n_cols; ++i) active->set(i, j, !grid_.valid(i, j));
  } else if (region == "pins") {
    active.emplace(g);
  } else if (region == "window") {
    active.emplace(g);
    for (const auto& c : extra.constraints())
      for (int j = std::max(0, c.j - radius); j <= std::min(g.n_rows - 1, c.j + radius); ++j)
        for (int i = std::max(0, c.i - radius); i <= std::min(g.n_cols - 1, c.i + radius); ++i)
          active->set(i, j, true);
  }
  return relax(grid_, pins, sp, active ? &*active : nullptr);
}

void Runner::do_relax(const StageSpec& st, std::size_t s) {
  SolverParams sp;
  sp.alpha = st.number("alpha", sp.alpha);
  sp.tol = st.number("tol", sp.tol);
  sp.max_iter = static_cast<int>(st.number("max_iter", sp.max_iter));
  const std::string region = st.get("region").value_or("all");
  const int radius = static_cast<int>(st.number("radius", 1));
  const std::size_t n_pending = pending_.size();
  auto r = relax_with(pending_, region, radius, sp);
  applied_.append(pending_);
  pending_ = ConstraintSet{};
  persist(std::move(r.grid));
  log(prefix(s) + " region=" + region + " constraints=" + std::to_string(n_pending) +
      " pinned_total=" + std::to_string(applied_.size()) + " iterations=" +
      std::to_string(r.iterations) + " update=" + fmt(r.final_update) + " residual=" +
      fmt(r.laplace_residual) + " converged=" + (r.converged ? "yes" : "no") + " -> " +
      grid_name(k_));
}

void Runner::do_morpho(const StageSpec& st, std::size_t s) {
  const auto fields = morpho_fields(grid_);
  double max_slope = 0.0;
  for (int j = 0; j < grid_.rows(); ++j)
    for (int i = 0; i < grid_.cols(); ++i)
      if (fields.slope.valid(i, j)) max_slope = std::max(max_slope, fields.slope(i, j));
  const auto spikes = detect_spikes(grid_, st.number("spike_threshold", 5.0));
  std::vector<BrokenLink> links;
  if (const auto ch = st.get("channels")) {
    const double stage = st.number("stage_level", 0.0);
    for (const auto& f : read_features(cfg_.resolve(*ch))) {
      if (f.kind != FeatureKind::channel && f.kind != FeatureKind::isoline)
        throw std::invalid_argument("feature '" + f.id + "' is not a channel path");
      for (auto& l : check_connectivity(grid_, f, stage)) links.push_back(std::move(l));
    }
  }
  log(prefix(s) + " on " + grid_name(k_) + " max_slope=" + fmt(max_slope) +
      " spikes=" + std::to_string(spikes.size()) + " broken_links=" + std::to_string(links.size()));
  for (const auto& sp : spikes)
    log("  spike " + std::to_string(sp.node.i) + ' ' + std::to_string(sp.node.j) +
        " magnitude=" + fmt(sp.magnitude));
  for (const auto& l : links)
    log("  broken_link " + l.channel_id + ' ' + std::to_string(l.sill.i) + ' ' +
        std::to_string(l.sill.j) + " height=" + fmt(l.sill_height) +
        " run=" + std::to_string(l.run_length));
}

void Runner::do_simulate(const StageSpec& st, const std::string& label) {
  SimParams p;
  p.manning_n = st.number("manning", p.manning_n);
  p.cfl = st.number("cfl", p.cfl);
  p.h_dry = st.number("h_dry", p.h_dry);
  p.max_dt = st.number("max_dt", p.max_dt);
  if (const auto o = st.get("open"))
    for (const auto side : detail::split(*o, ','))
      p.set_boundary(*side_from_string(detail::trim(side)), Boundary::open);
  p.inflow_cells = read_cells(cfg_.resolve(*st.get("inflow")));
  const auto hydro = read_hydrograph(cfg_.resolve(*st.get("hydrograph")));
  const double t_end = st.number("t_end", 0.0);
  if (!(t_end > 0.0)) throw std::invalid_argument("t_end must be positive");

  ShallowWaterSolver solver(grid_, p, hydro);
  solver.advance_to(t_end);
  flow_ = solver.state();
  sim_spec_ = &st;
  sim_h_dry_ = p.h_dry;
  ++sim_runs_;
  const auto depth_path = dir_ / ("depth" + std::to_string(sim_runs_) + ".asc");
  write_grid(flow_->h, depth_path);
  log(label + " on " + grid_name(k_) + " t_end=" + fmt(t_end) + " steps=" +
      std::to_string(solver.steps()) + " inflow=" + fmt(solver.inflow_volume()) + " outflow=" +
      fmt(solver.outflow_volume()) + " mass_balance=" + fmt(solver.mass_balance_error()) +
      " -> " + depth_path.filename().string());
}

Runner::Evaluation Runner::evaluate(const StageSpec& st) {
  const auto observed_grid = read_grid(cfg_.resolve(*st.get("observed")));
  if (observed_grid.cols() != grid_.cols() || observed_grid.rows() != grid_.rows())
    throw std::invalid_argument("observed mask dimensions differ from the grid");
  const auto observed = mask_from_grid(observed_grid);
  const auto simulated = wet_mask(*flow_, st.number("wet_threshold", 0.01), sim_h_dry_);
  Evaluation ev;
  ev.cmp = compare_masks(simulated, observed);
  for (const auto& c : coastlines_) {
    ev.spreads.push_back(coastline_spread(grid_, c));
    ev.max_spread = std::max(ev.max_spread, ev.spreads.back().spread);
  }
  return ev;
}

void Runner::do_verify(const StageSpec& st, std::size_t s) {
  const auto& L = cfg_.loop;
  if (const auto c = st.get("coastlines"))
    for (auto& f : read_features(cfg_.resolve(*c)))
      if (f.kind == FeatureKind::isoline) coastlines_.push_back(std::move(f));
  report_.verified = true;
  const double wet_threshold = st.number("wet_threshold", 0.01);

  for (int round = 1;; ++round) {
    const auto ev = evaluate(st);
    report_.rounds = round;
    report_.csi_per_round.push_back(ev.cmp.csi);
    report_.misses_per_round.push_back(ev.cmp.misses);
    report_.max_spread = ev.max_spread;
    const bool met = ev.cmp.csi >= L.csi_target && ev.max_spread <= L.spread_tol;
    log(prefix(s) + " round=" + std::to_string(round) + " csi=" + fmt(ev.cmp.csi) +
        " hits=" + std::to_string(ev.cmp.hits) + " misses=" + std::to_string(ev.cmp.misses) +
        " false_alarms=" + std::to_string(ev.cmp.false_alarms) +
        " max_spread=" + fmt(ev.max_spread));
    for (const auto& e : ev.spreads)
      log("  feature " + e.feature_id + " spread=" + fmt(e.spread) + " min=" + fmt(e.min) +
          " max=" + fmt(e.max) + " mean=" + fmt(e.mean));
    if (met) {
      report_.criteria_met = true;
      return;
    }
    if (round >= L.max_rounds) return;

    // correction round
    const auto observed = mask_from_grid(read_grid(cfg_.resolve(*st.get("observed"))));
    const auto simulated = wet_mask(*flow_, wet_threshold, sim_h_dry_);
    ElevationGrid surface = grid_;
    for (int j = 0; j < grid_.rows(); ++j)
      for (int i = 0; i < grid_.cols(); ++i)
        if (grid_.valid(i, j)) surface(i, j) = grid_(i, j) + flow_->h(i, j);
    std::vector<CoastlineCheck> checks;
    for (std::size_t c = 0; c < coastlines_.size(); ++c) checks.push_back({&coastlines_[c], ev.spreads[c]});
    CorrectionParams cp;
    cp.h_dry = sim_h_dry_;
    cp.spread_tolerance = L.spread_tol;
    cp.clearance = L.clearance.value_or(sim_h_dry_);
    const auto corrections = propose_corrections(grid_, checks, simulated, observed, surface, cp);
    if (corrections.empty()) {
      log("round " + std::to_string(round + 1) + " no corrections proposed");
      return;
    }
    SolverParams sp;
    sp.alpha = L.alpha;
    sp.tol = L.tol;
    sp.max_iter = L.max_iter;
    auto r = relax_with(corrections, L.region, L.radius, sp);
    applied_.append(corrections);
    persist(std::move(r.grid));
    log("round " + std::to_string(round + 1) + " corrections=" + std::to_string(corrections.size()) +
        " region=" + L.region + " iterations=" + std::to_string(r.iterations) +
        " residual=" + fmt(r.laplace_residual) + " -> " + grid_name(k_));
    do_simulate(*sim_spec_, "round " + std::to_string(round + 1) + " simulate");
  }
}

}  // namespace

PipelineReport run_pipeline(const PipelineConfig& config, const fs::path& workdir) {
  return Runner(config, workdir).run();
}

}  // namespace demforge
