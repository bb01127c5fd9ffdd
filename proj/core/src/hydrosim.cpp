#include "demforge/hydrosim.hpp"

#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace demforge {

// ---------------------------------------------------------------------------
// Hydrograph

Hydrograph::Hydrograph() : samples_{{0.0, 0.0}} {}

Hydrograph::Hydrograph(std::vector<HydrographSample> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) throw std::invalid_argument("hydrograph needs at least one sample");
  for (std::size_t k = 0; k < samples_.size(); ++k) {
    const auto& s = samples_[k];
    if (!std::isfinite(s.t) || !std::isfinite(s.q) || s.q < 0.0)
      throw std::invalid_argument("hydrograph samples need finite t and Q >= 0");
    if (k && !(s.t > samples_[k - 1].t))
      throw std::invalid_argument("hydrograph times must be strictly increasing");
  }
}

Hydrograph Hydrograph::constant(double q) { return Hydrograph({{0.0, q}}); }

double Hydrograph::discharge(double t) const {
  if (t <= samples_.front().t) return samples_.front().q;
  if (t >= samples_.back().t) return samples_.back().q;
  auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                             [](double v, const HydrographSample& s) { return v < s.t; });
  const auto& b = *it;
  const auto& a = *(it - 1);
  const double w = (t - a.t) / (b.t - a.t);
  return a.q + w * (b.q - a.q);
}

double Hydrograph::cumulative(double t) const {
  const auto& first = samples_.front();
  if (t <= first.t) return first.q * (t - first.t);
  double acc = 0.0;
  for (std::size_t k = 1; k < samples_.size(); ++k) {
    const auto& a = samples_[k - 1];
    const auto& b = samples_[k];
    if (t <= b.t) return acc + 0.5 * (a.q + discharge(t)) * (t - a.t);
    acc += 0.5 * (a.q + b.q) * (b.t - a.t);
  }
  return acc + samples_.back().q * (t - samples_.back().t);
}

double Hydrograph::volume(double t0, double t1) const { return cumulative(t1) - cumulative(t0); }

Hydrograph parse_hydrograph(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  std::vector<HydrographSample> samples;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = detail::trim(line);
    if (t.empty()) continue;
    if (!header) {
      if (t != "t_seconds,Q_m3s") throw ParseError(source, line_no, "expected header 't_seconds,Q_m3s'");
      header = true;
      continue;
    }
    auto parts = detail::split(t, ',');
    if (parts.size() != 2) throw ParseError(source, line_no, "expected 't,Q'");
    auto ts = detail::parse_double(parts[0]);
    auto qs = detail::parse_double(parts[1]);
    if (!ts || !qs) throw ParseError(source, line_no, "non-numeric sample");
    if (*qs < 0.0) throw ParseError(source, line_no, "negative discharge");
    if (!samples.empty() && !(*ts > samples.back().t))
      throw ParseError(source, line_no, "times must be strictly increasing");
    samples.push_back({*ts, *qs});
  }
  if (!header) throw ParseError(source, line_no + 1, "missing header");
  if (samples.empty()) throw ParseError(source, line_no + 1, "no samples");
  return Hydrograph(std::move(samples));
}

Hydrograph read_hydrograph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open hydrograph " + path.string());
  return parse_hydrograph(in, path.string());
}

std::vector<NodeIndex> parse_cells(std::istream& in, const std::string& source) {
  std::vector<NodeIndex> cells;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto parts = detail::split_ws(t);
    if (parts.size() != 2) throw ParseError(source, line_no, "expected 'i j'");
    auto i = detail::parse_int(parts[0]);
    auto j = detail::parse_int(parts[1]);
    if (!i || !j) throw ParseError(source, line_no, "non-integer cell index");
    cells.push_back({static_cast<int>(*i), static_cast<int>(*j)});
  }
  return cells;
}

std::vector<NodeIndex> read_cells(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open cell list " + path.string());
  return parse_cells(in, path.string());
}

// ---------------------------------------------------------------------------
// FlowState

FlowState FlowState::dry(const GridGeometry& geometry, double t) {
  return {ElevationGrid(geometry), ElevationGrid(geometry), ElevationGrid(geometry), t};
}

FlowState FlowState::at_rest(const ElevationGrid& bed, double surface, double t) {
  FlowState s = dry(bed.geometry(), t);
  for (std::size_t k = 0; k < bed.geometry().size(); ++k) {
    const double z = bed.values()[k];
    if (bed.is_nodata(z)) continue;
    s.h.values()[k] = std::max(0.0, surface - z);
  }
  return s;
}

double FlowState::volume() const {
  double sum = 0.0;
  for (double v : h.values()) sum += v;
  return sum * h.dx() * h.dx();
}

void SimParams::validate() const {
  if (!(cfl > 0.0) || cfl > 0.5) throw std::invalid_argument("cfl must lie in (0, 0.5]");
  if (!(h_dry > 0.0)) throw std::invalid_argument("h_dry must be positive");
  if (!(manning_n >= 0.0)) throw std::invalid_argument("manning_n must be non-negative");
  if (!(gravity > 0.0)) throw std::invalid_argument("gravity must be positive");
  if (!(max_dt > 0.0)) throw std::invalid_argument("max_dt must be positive");
  if (!(min_dt > 0.0)) throw std::invalid_argument("min_dt must be positive");
}

// ---------------------------------------------------------------------------
// Solver

ShallowWaterSolver::ShallowWaterSolver(ElevationGrid bed, SimParams params, Hydrograph hydrograph,
                                       std::optional<FlowState> initial)
    : bed_(std::move(bed)),
      params_(std::move(params)),
      hydrograph_(std::move(hydrograph)),
      state_(initial ? std::move(*initial) : FlowState::dry(bed_.geometry())) {
  params_.validate();
  const auto& g = bed_.geometry();
  auto same = [&](const ElevationGrid& f) {
    return f.cols() == g.n_cols && f.rows() == g.n_rows;
  };
  if (!same(state_.h) || !same(state_.qu) || !same(state_.qv))
    throw std::invalid_argument("flow state dimensions do not match the bed");

  active_.resize(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    active_[k] = bed_.is_nodata(bed_.values()[k]) ? 0 : 1;
    double& h = state_.h.values()[k];
    if (!active_[k] || state_.h.is_nodata(h)) h = 0.0;
    if (h < 0.0) throw std::invalid_argument("initial depth must be non-negative");
    if (!active_[k] || h < params_.h_dry) {
      state_.qu.values()[k] = 0.0;
      state_.qv.values()[k] = 0.0;
    }
  }
  for (const auto& c : params_.inflow_cells) {
    if (!g.in_bounds(c))
      throw std::invalid_argument("inflow cell (" + std::to_string(c.i) + ", " +
                                  std::to_string(c.j) + ") outside grid");
    if (!active_[g.index(c)]) throw std::invalid_argument("inflow cell lies on nodata bed");
  }
  fx_.resize(static_cast<std::size_t>(g.n_cols + 1) * static_cast<std::size_t>(g.n_rows));
  fy_.resize(static_cast<std::size_t>(g.n_cols) * static_cast<std::size_t>(g.n_rows + 1));
  initial_volume_ = state_.volume();
}

double ShallowWaterSolver::mass_balance_error() const {
  if (inflow_volume_ <= 0.0) return 0.0;
  return (inflow_volume_ - stored_volume() - outflow_volume_) / inflow_volume_;
}

ShallowWaterSolver::CellState ShallowWaterSolver::cell(std::size_t k, bool x_normal) const {
  const double h = state_.h.values()[k];
  const double z = bed_.values()[k];
  if (h < params_.h_dry) return {h, 0.0, 0.0, z};
  const double u = state_.qu.values()[k] / h;
  const double v = state_.qv.values()[k] / h;
  return x_normal ? CellState{h, u, v, z} : CellState{h, v, u, z};
}

ShallowWaterSolver::Face ShallowWaterSolver::interface_flux(const CellState& left,
                                                            const CellState& right,
                                                            double& max_speed) const {
  const double g = params_.gravity;
  const double zs = std::max(left.z, right.z);
  const double hl = std::max(0.0, left.h + left.z - zs);
  const double hr = std::max(0.0, right.h + right.z - zs);

  Face f;
  double flux_mass = 0.0;
  double flux_mom = 0.0;
  if (hl > 0.0 || hr > 0.0) {
    const double cl = std::sqrt(g * hl);
    const double cr = std::sqrt(g * hr);
    const double ul = hl > 0.0 ? left.un : 0.0;
    const double ur = hr > 0.0 ? right.un : 0.0;
    double sl, sr;
    if (hr <= 0.0) {
      sl = ul - cl;
      sr = ul + 2.0 * cl;
    } else if (hl <= 0.0) {
      sl = ur - 2.0 * cr;
      sr = ur + cr;
    } else {
      sl = std::min(ul - cl, ur - cr);
      sr = std::max(ul + cl, ur + cr);
    }
    max_speed = std::max({max_speed, std::abs(sl), std::abs(sr)});

    const double ml = hl * ul;
    const double mr = hr * ur;
    const double pl = ml * ul + 0.5 * g * hl * hl;
    const double pr = mr * ur + 0.5 * g * hr * hr;
    if (sl >= 0.0) {
      flux_mass = ml;
      flux_mom = pl;
    } else if (sr <= 0.0) {
      flux_mass = mr;
      flux_mom = pr;
    } else {
      const double inv = 1.0 / (sr - sl);
      flux_mass = ((sr * ml - sl * mr) + sl * sr * (hr - hl)) * inv;
      flux_mom = ((sr * pl - sl * pr) + sl * sr * (mr - ml)) * inv;
    }
  }
  f.mass = flux_mass;
  f.mom_left = flux_mom + 0.5 * g * (left.h * left.h - hl * hl);
  f.mom_right = flux_mom + 0.5 * g * (right.h * right.h - hr * hr);
  f.tangential = flux_mass > 0.0 ? flux_mass * left.ut : flux_mass * right.ut;
  return f;
}

double ShallowWaterSolver::step(double t_limit) {
  const auto& g = bed_.geometry();
  const int nc = g.n_cols;
  const int nr = g.n_rows;
  double max_speed = 0.0;

  auto wall_ghost = [](CellState c) {
    c.un = -c.un;
    return c;
  };

  // x-normal faces: face (i, j) sits west of cell (i, j); i = nc is the east edge.
  for (int j = 0; j < nr; ++j) {
    for (int i = 0; i <= nc; ++i) {
      Face& face = fx_[static_cast<std::size_t>(j) * static_cast<std::size_t>(nc + 1) +
                       static_cast<std::size_t>(i)];
      const bool has_l = i > 0 && active_[g.index(i - 1, j)];
      const bool has_r = i < nc && active_[g.index(i, j)];
      if (!has_l && !has_r) {
        face = Face{};
        continue;
      }
      if (has_l && has_r) {
        face = interface_flux(cell(g.index(i - 1, j), true), cell(g.index(i, j), true), max_speed);
        continue;
      }
      const bool edge = i == 0 || i == nc;
      const Side side = i == 0 ? Side::west : Side::east;
      const bool open = edge && params_.boundary(side) == Boundary::open;
      const CellState inner = cell(g.index(has_l ? i - 1 : i, j), true);
      const CellState ghost = open ? inner : wall_ghost(inner);
      face = has_l ? interface_flux(inner, ghost, max_speed)
                   : interface_flux(ghost, inner, max_speed);
      if (!open) face.mass = face.tangential = 0.0;
    }
  }
  // y-normal faces: face (i, j) sits south of cell (i, j); j = nr is the north edge.
  for (int j = 0; j <= nr; ++j) {
    for (int i = 0; i < nc; ++i) {
      Face& face = fy_[static_cast<std::size_t>(j) * static_cast<std::size_t>(nc) +
                       static_cast<std::size_t>(i)];
      const bool has_s = j > 0 && active_[g.index(i, j - 1)];
      const bool has_n = j < nr && active_[g.index(i, j)];
      if (!has_s && !has_n) {
        face = Face{};
        continue;
      }
      if (has_s && has_n) {
        face = interface_flux(cell(g.index(i, j - 1), false), cell(g.index(i, j), false),
                              max_speed);
        continue;
      }
      const bool edge = j == 0 || j == nr;
      const Side side = j == 0 ? Side::south : Side::north;
      const bool open = edge && params_.boundary(side) == Boundary::open;
      const CellState inner = cell(g.index(i, has_s ? j - 1 : j), false);
      const CellState ghost = open ? inner : wall_ghost(inner);
      face = has_s ? interface_flux(inner, ghost, max_speed)
                   : interface_flux(ghost, inner, max_speed);
      if (!open) face.mass = face.tangential = 0.0;
    }
  }

  const double remaining = t_limit - state_.t;
  double dt = max_speed > 0.0 ? params_.cfl * g.dx / max_speed : params_.max_dt;
  dt = std::min(dt, params_.max_dt);
  bool hits_limit = false;
  if (remaining <= dt) {
    dt = remaining;
    hits_limit = true;
  }
  if (!(dt > 0.0)) throw std::logic_error("step called at or past the time limit");
  if (dt < params_.min_dt && !hits_limit)
    throw std::runtime_error("time step underflow: dt = " + std::to_string(dt) + " s at t = " +
                             std::to_string(state_.t));

  const double k = dt / g.dx;
  auto& h = state_.h;
  auto& qu = state_.qu;
  auto& qv = state_.qv;

  for (int j = 0; j < nr; ++j) {
    for (int i = 0; i < nc; ++i) {
      if (!active_[g.index(i, j)]) continue;
      const auto row_x = static_cast<std::size_t>(j) * static_cast<std::size_t>(nc + 1);
      const Face& w = fx_[row_x + static_cast<std::size_t>(i)];
      const Face& e = fx_[row_x + static_cast<std::size_t>(i + 1)];
      const Face& s = fy_[static_cast<std::size_t>(j) * static_cast<std::size_t>(nc) +
                          static_cast<std::size_t>(i)];
      const Face& n = fy_[static_cast<std::size_t>(j + 1) * static_cast<std::size_t>(nc) +
                          static_cast<std::size_t>(i)];
      h(i, j) -= k * ((e.mass - w.mass) + (n.mass - s.mass));
      qu(i, j) -= k * ((e.mom_left - w.mom_right) + (n.tangential - s.tangential));
      qv(i, j) -= k * ((n.mom_left - s.mom_right) + (e.tangential - w.tangential));
    }
  }

  // Net boundary outflow through open edges.
  double out = 0.0;
  for (int j = 0; j < nr; ++j) {
    const auto row_x = static_cast<std::size_t>(j) * static_cast<std::size_t>(nc + 1);
    out += fx_[row_x + static_cast<std::size_t>(nc)].mass - fx_[row_x].mass;
  }
  for (int i = 0; i < nc; ++i)
    out += fy_[static_cast<std::size_t>(nr) * static_cast<std::size_t>(nc) +
               static_cast<std::size_t>(i)].mass -
           fy_[static_cast<std::size_t>(i)].mass;
  outflow_volume_ += out * dt * g.dx;

  const double inflow = hydrograph_.volume(state_.t, state_.t + dt);
  if (inflow > 0.0 && !params_.inflow_cells.empty()) {
    const double depth =
        inflow / (static_cast<double>(params_.inflow_cells.size()) * g.dx * g.dx);
    for (const auto& c : params_.inflow_cells) h(c) += depth;
    inflow_volume_ += inflow;
  }

  const double gn2 = params_.gravity * params_.manning_n * params_.manning_n;
  for (int j = 0; j < nr; ++j) {
    for (int i = 0; i < nc; ++i) {
      if (!active_[g.index(i, j)]) continue;
      double& d = h(i, j);
      if (d < 0.0) {
        if (d < -1e-10)
          throw std::runtime_error("negative depth " + std::to_string(d) + " at cell (" +
                                   std::to_string(i) + ", " + std::to_string(j) + ")");
        d = 0.0;
      }
      if (d < params_.h_dry) {
        qu(i, j) = 0.0;
        qv(i, j) = 0.0;
        continue;
      }
      if (gn2 > 0.0) {
        const double speed = std::hypot(qu(i, j), qv(i, j)) / d;
        const double factor = 1.0 + dt * gn2 * speed / std::pow(d, 4.0 / 3.0);
        qu(i, j) /= factor;
        qv(i, j) /= factor;
      }
    }
  }

  state_.t = hits_limit ? t_limit : state_.t + dt;
  ++steps_;
  return dt;
}

void ShallowWaterSolver::advance_to(double t) {
  while (state_.t < t) step(t);
}

FlowState step(const FlowState& state, const ElevationGrid& bed, const SimParams& params,
               const Hydrograph& hydrograph) {
  ShallowWaterSolver solver(bed, params, hydrograph, state);
  solver.step();
  return solver.state();
}

RunResult run(const ElevationGrid& bed, const SimParams& params, const Hydrograph& hydrograph,
              double t_end, double snapshot_every, std::optional<FlowState> initial) {
  if (!(t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
  if (!(snapshot_every > 0.0)) throw std::invalid_argument("snapshot interval must be positive");

  ShallowWaterSolver solver(bed, params, hydrograph, std::move(initial));
  RunResult result;
  const double t0 = solver.time();
  result.snapshots.push_back(solver.state());
  for (std::size_t k = 1;; ++k) {
    const double target = std::min(t0 + static_cast<double>(k) * snapshot_every, t_end);
    solver.advance_to(target);
    result.snapshots.push_back(solver.state());
    if (target >= t_end) break;
  }
  result.inflow_volume = solver.inflow_volume();
  result.outflow_volume = solver.outflow_volume();
  result.stored_volume = solver.stored_volume();
  result.mass_balance_error = solver.mass_balance_error();
  result.steps = solver.steps();
  return result;
}

Mask wet_mask(const FlowState& state, double threshold, double h_dry) {
  if (!(threshold >= h_dry))
    throw std::invalid_argument("wet threshold must be >= h_dry");
  Mask m(state.h.geometry());
  for (int j = 0; j < state.h.rows(); ++j)
    for (int i = 0; i < state.h.cols(); ++i) m.set(i, j, state.h(i, j) >= threshold);
  return m;
}

}  // namespace demforge
