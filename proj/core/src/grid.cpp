#include "demforge/grid.hpp"

#include "text_util.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace demforge {

ParseError::ParseError(std::string source, std::size_t line, const std::string& message)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + message),
      source_(std::move(source)),
      line_(line) {}

bool GridGeometry::contains(double px, double py) const noexcept {
  const double eps = 1e-9 * dx;
  return px >= x0 - eps && px <= x_max() + eps && py >= y0 - eps && py <= y_max() + eps;
}

NodeIndex GridGeometry::nearest_node(double px, double py) const noexcept {
  return {static_cast<int>(std::floor((px - x0) / dx + 0.5)),
          static_cast<int>(std::floor((py - y0) / dx + 0.5))};
}

void GridGeometry::validate() const {
  if (!(dx > 0.0) || !std::isfinite(dx))
    throw std::invalid_argument("grid step must be positive, got " + std::to_string(dx));
  if (n_cols < 2 || n_rows < 2)
    throw std::invalid_argument("grid must be at least 2x2, got " + std::to_string(n_cols) +
                                "x" + std::to_string(n_rows));
  if (!std::isfinite(x0) || !std::isfinite(y0))
    throw std::invalid_argument("grid origin must be finite");
}

ElevationGrid::ElevationGrid(GridGeometry geometry, double fill, double nodata)
    : geometry_(geometry), nodata_(nodata) {
  geometry_.validate();
  values_.assign(geometry_.size(), fill);
}

ElevationGrid::ElevationGrid(GridGeometry geometry, std::vector<double> values, double nodata)
    : geometry_(geometry), values_(std::move(values)), nodata_(nodata) {
  geometry_.validate();
  if (values_.size() != geometry_.size())
    throw std::invalid_argument("value count " + std::to_string(values_.size()) +
                                " does not match grid size " +
                                std::to_string(geometry_.size()));
}

double ElevationGrid::at(int i, int j) const {
  if (!geometry_.in_bounds(i, j))
    throw std::out_of_range("node (" + std::to_string(i) + ", " + std::to_string(j) +
                            ") outside grid");
  return (*this)(i, j);
}

bool ElevationGrid::is_nodata(double v) const noexcept {
  return v == nodata_ || std::isnan(v);
}

std::size_t ElevationGrid::count_valid() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(values_.begin(), values_.end(), [this](double v) { return !is_nodata(v); }));
}

std::size_t Mask::count() const noexcept {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

Mask mask_from_grid(const ElevationGrid& grid) {
  Mask m(grid.geometry());
  for (int j = 0; j < grid.rows(); ++j)
    for (int i = 0; i < grid.cols(); ++i) m.set(i, j, grid.valid(i, j) && grid(i, j) != 0.0);
  return m;
}

ElevationGrid grid_from_mask(const Mask& mask) {
  ElevationGrid g(mask.geometry());
  for (int j = 0; j < mask.rows(); ++j)
    for (int i = 0; i < mask.cols(); ++i) g(i, j) = mask(i, j) ? 1.0 : 0.0;
  return g;
}

// ---------------------------------------------------------------------------
// ASCII grid

namespace {

constexpr std::array<const char*, 6> kHeaderKeys = {
    "ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "NODATA_value"};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

ElevationGrid parse_grid(std::istream& in, const std::string& source) {
  std::array<double, kHeaderKeys.size()> header{};
  std::string line;
  std::size_t line_no = 0;

  for (std::size_t k = 0; k < kHeaderKeys.size(); ++k) {
    if (!std::getline(in, line)) throw ParseError(source, line_no + 1, "truncated header");
    ++line_no;
    auto tokens = detail::split_ws(line);
    if (tokens.size() != 2 || !iequals(tokens[0], kHeaderKeys[k]))
      throw ParseError(source, line_no,
                       std::string("expected '") + kHeaderKeys[k] + " <value>'");
    auto v = detail::parse_double(tokens[1]);
    if (!v) throw ParseError(source, line_no, "non-numeric header value '" +
                                                  std::string(tokens[1]) + "'");
    header[k] = *v;
  }

  GridGeometry g;
  if (header[0] != std::floor(header[0]) || header[1] != std::floor(header[1]) ||
      header[0] < 2 || header[1] < 2 || header[0] > std::numeric_limits<int>::max() ||
      header[1] > std::numeric_limits<int>::max())
    throw ParseError(source, 1, "ncols and nrows must be integers >= 2");
  g.n_cols = static_cast<int>(header[0]);
  g.n_rows = static_cast<int>(header[1]);
  g.x0 = header[2];
  g.y0 = header[3];
  g.dx = header[4];
  if (!(g.dx > 0.0)) throw ParseError(source, 5, "cellsize must be positive");
  const double nodata = header[5];

  std::vector<double> values(g.size());
  for (int row = 0; row < g.n_rows; ++row) {
    do {
      if (!std::getline(in, line))
        throw ParseError(source, line_no + 1,
                         "expected " + std::to_string(g.n_rows) + " data rows, got " +
                             std::to_string(row));
      ++line_no;
    } while (detail::is_blank(line));
    auto tokens = detail::split_ws(line);
    if (tokens.size() != static_cast<std::size_t>(g.n_cols))
      throw ParseError(source, line_no,
                       "row has " + std::to_string(tokens.size()) + " values, expected " +
                           std::to_string(g.n_cols));
    const int j = g.n_rows - 1 - row;
    for (int i = 0; i < g.n_cols; ++i) {
      auto v = detail::parse_double(tokens[static_cast<std::size_t>(i)]);
      if (!v)
        throw ParseError(source, line_no,
                         "non-numeric cell '" + std::string(tokens[static_cast<std::size_t>(i)]) +
                             "'");
      values[g.index(i, j)] = *v;
    }
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!detail::is_blank(line)) throw ParseError(source, line_no, "unexpected trailing data");
  }
  return ElevationGrid(g, std::move(values), nodata);
}

ElevationGrid read_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grid file " + path.string());
  return parse_grid(in, path.string());
}

void format_grid(std::ostream& out, const ElevationGrid& grid) {
  const auto& g = grid.geometry();
  out << "ncols " << g.n_cols << '\n'
      << "nrows " << g.n_rows << '\n'
      << "xllcorner " << detail::format_shortest(g.x0) << '\n'
      << "yllcorner " << detail::format_shortest(g.y0) << '\n'
      << "cellsize " << detail::format_shortest(g.dx) << '\n'
      << "NODATA_value " << detail::format_shortest(grid.nodata()) << '\n';
  std::string row;
  for (int j = g.n_rows - 1; j >= 0; --j) {
    row.clear();
    for (int i = 0; i < g.n_cols; ++i) {
      if (i) row.push_back(' ');
      const double v = grid(i, j);
      detail::append_fixed6(row, grid.is_nodata(v) ? grid.nodata() : v);
    }
    row.push_back('\n');
    out << row;
  }
}

void write_grid(const ElevationGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write grid file " + path.string());
  format_grid(out, grid);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Finite differences

namespace {

enum class Axis { x, y };

// Reads a 1D line of the grid along `axis` through node (i, j).
struct Line {
  const ElevationGrid& g;
  Axis axis;
  int i, j;
  int length() const { return axis == Axis::x ? g.cols() : g.rows(); }
  int pos() const { return axis == Axis::x ? i : j; }
  double at(int k) const { return axis == Axis::x ? g(k, j) : g(i, k); }
  bool valid(int k) const { return axis == Axis::x ? g.valid(k, j) : g.valid(i, k); }
};

template <std::size_t N>
bool all_valid(const Line& line, const std::array<int, N>& ks) {
  return std::all_of(ks.begin(), ks.end(), [&](int k) { return line.valid(k); });
}

double first_derivative(const Line& l, double h, double nodata) {
  const int n = l.length();
  const int k = l.pos();
  if (k == 0) {
    if (!all_valid(l, std::array{0, 1, 2})) return nodata;
    return (-3.0 * l.at(0) + 4.0 * l.at(1) - l.at(2)) / (2.0 * h);
  }
  if (k == n - 1) {
    if (!all_valid(l, std::array{n - 1, n - 2, n - 3})) return nodata;
    return (3.0 * l.at(n - 1) - 4.0 * l.at(n - 2) + l.at(n - 3)) / (2.0 * h);
  }
  if (!all_valid(l, std::array{k - 1, k + 1})) return nodata;
  return (l.at(k + 1) - l.at(k - 1)) / (2.0 * h);
}

double second_derivative(const Line& l, double h, double nodata) {
  const int n = l.length();
  const int k = l.pos();
  const double h2 = h * h;
  if (k == 0 || k == n - 1) {
    const int s = k == 0 ? 1 : -1;
    if (n >= 4) {
      if (!all_valid(l, std::array{k, k + s, k + 2 * s, k + 3 * s})) return nodata;
      return (2.0 * l.at(k) - 5.0 * l.at(k + s) + 4.0 * l.at(k + 2 * s) - l.at(k + 3 * s)) / h2;
    }
    if (!all_valid(l, std::array{k, k + s, k + 2 * s})) return nodata;
    return (l.at(k) - 2.0 * l.at(k + s) + l.at(k + 2 * s)) / h2;
  }
  if (!all_valid(l, std::array{k - 1, k, k + 1})) return nodata;
  return (l.at(k + 1) - 2.0 * l.at(k) + l.at(k - 1)) / h2;
}

ElevationGrid differentiate(const ElevationGrid& g, Axis axis, int order) {
  ElevationGrid out(g.geometry(), 0.0, g.nodata());
  for (int j = 0; j < g.rows(); ++j)
    for (int i = 0; i < g.cols(); ++i) {
      if (!g.valid(i, j)) {
        out(i, j) = g.nodata();
        continue;
      }
      Line line{g, axis, i, j};
      out(i, j) = order == 1 ? first_derivative(line, g.dx(), g.nodata())
                             : second_derivative(line, g.dx(), g.nodata());
    }
  return out;
}

}  // namespace

DerivativeField derivatives(const ElevationGrid& grid) {
  if (grid.cols() < 3 || grid.rows() < 3)
    throw std::invalid_argument("derivatives need a grid of at least 3x3");

  DerivativeField d{
      differentiate(grid, Axis::x, 1),
      differentiate(grid, Axis::y, 1),
      differentiate(grid, Axis::x, 2),
      differentiate(grid, Axis::y, 2),
      ElevationGrid{},
      ElevationGrid(grid.geometry(), 0.0, grid.nodata()),
      ElevationGrid(grid.geometry(), 0.0, grid.nodata()),
  };
  // Mixed derivative as D_x(D_y b); in the interior this is the 4-corner cross stencil.
  d.b_xy = differentiate(d.b_y, Axis::x, 1);

  for (std::size_t k = 0; k < grid.geometry().size(); ++k) {
    const double bx = d.b_x.values()[k];
    const double by = d.b_y.values()[k];
    if (d.b_x.is_nodata(bx) || d.b_y.is_nodata(by)) {
      d.p.values()[k] = grid.nodata();
      d.q.values()[k] = grid.nodata();
      continue;
    }
    const double p = bx * bx + by * by;
    d.p.values()[k] = p;
    d.q.values()[k] = 1.0 + p;
  }
  return d;
}

double sample_bilinear(const ElevationGrid& grid, double x, double y) {
  const auto& g = grid.geometry();
  if (!g.contains(x, y))
    throw std::out_of_range("point (" + std::to_string(x) + ", " + std::to_string(y) +
                            ") outside grid extent");
  auto fractional = [](double f, int n) {
    const double r = std::round(f);
    if (std::abs(f - r) < 1e-9) f = r;
    return std::clamp(f, 0.0, static_cast<double>(n - 1));
  };
  const double fi = fractional((x - g.x0) / g.dx, g.n_cols);
  const double fj = fractional((y - g.y0) / g.dx, g.n_rows);
  const int i0 = std::min(static_cast<int>(fi), g.n_cols - 2);
  const int j0 = std::min(static_cast<int>(fj), g.n_rows - 2);
  const double tx = fi - i0;
  const double ty = fj - j0;

  const std::array<double, 4> w = {(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
  const std::array<NodeIndex, 4> nodes = {
      NodeIndex{i0, j0}, NodeIndex{i0 + 1, j0}, NodeIndex{i0, j0 + 1}, NodeIndex{i0 + 1, j0 + 1}};
  double sum = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    if (w[k] == 0.0) continue;
    if (!grid.valid(nodes[k]))
      throw std::domain_error("bilinear sample touches nodata node (" +
                              std::to_string(nodes[k].i) + ", " + std::to_string(nodes[k].j) +
                              ")");
    sum += w[k] * grid(nodes[k]);
  }
  return sum;
}

// ---------------------------------------------------------------------------
// PGM preview

void format_pgm(std::ostream& out, const ElevationGrid& grid) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : grid.values()) {
    if (grid.is_nodata(v) || !std::isfinite(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double range = hi > lo ? hi - lo : 0.0;
  out << "P2\n" << grid.cols() << ' ' << grid.rows() << "\n255\n";
  for (int j = grid.rows() - 1; j >= 0; --j) {
    for (int i = 0; i < grid.cols(); ++i) {
      const double v = grid(i, j);
      int level = 0;
      if (!grid.is_nodata(v) && std::isfinite(v) && range > 0.0)
        level = static_cast<int>(std::lround((v - lo) / range * 255.0));
      out << (i ? " " : "") << level;
    }
    out << '\n';
  }
}

void write_pgm(const ElevationGrid& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  format_pgm(out, grid);
}

}  // namespace demforge
