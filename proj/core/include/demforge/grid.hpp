#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace demforge {

/// Parse failure in one of the text formats. Carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string source, std::size_t line, const std::string& message);

  const std::string& source() const noexcept { return source_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string source_;
  std::size_t line_;
};

struct NodeIndex {
  int i = 0;  // column, grows eastward
  int j = 0;  // row, grows northward

  auto operator<=>(const NodeIndex&) const = default;
};

/// Node-registered raster geometry: node (i, j) sits at (x0 + i*dx, y0 + j*dx).
struct GridGeometry {
  int n_cols = 0;
  int n_rows = 0;
  double x0 = 0.0;
  double y0 = 0.0;
  double dx = 1.0;

  double x(int i) const noexcept { return x0 + i * dx; }
  double y(int j) const noexcept { return y0 + j * dx; }
  double x_max() const noexcept { return x(n_cols - 1); }
  double y_max() const noexcept { return y(n_rows - 1); }

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(n_cols) * static_cast<std::size_t>(n_rows);
  }
  std::size_t index(int i, int j) const noexcept {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(n_cols) +
           static_cast<std::size_t>(i);
  }
  std::size_t index(NodeIndex n) const noexcept { return index(n.i, n.j); }
  NodeIndex node(std::size_t k) const noexcept {
    return {static_cast<int>(k % static_cast<std::size_t>(n_cols)),
            static_cast<int>(k / static_cast<std::size_t>(n_cols))};
  }
  bool in_bounds(int i, int j) const noexcept {
    return i >= 0 && j >= 0 && i < n_cols && j < n_rows;
  }
  bool in_bounds(NodeIndex n) const noexcept { return in_bounds(n.i, n.j); }

  /// Inside the rectangle spanned by the outermost nodes (small tolerance).
  bool contains(double px, double py) const noexcept;

  /// Node whose Voronoi cell holds (px, py). May be out of bounds.
  NodeIndex nearest_node(double px, double py) const noexcept;

  /// Throws std::invalid_argument unless dx > 0 and both dimensions are >= 2.
  void validate() const;

  bool operator==(const GridGeometry&) const = default;
};

inline constexpr double kDefaultNodata = -9999.0;

/// Row-major raster of heights (or any scalar field) with a nodata sentinel.
class ElevationGrid {
 public:
  ElevationGrid() = default;
  explicit ElevationGrid(GridGeometry geometry, double fill = 0.0,
                         double nodata = kDefaultNodata);
  ElevationGrid(GridGeometry geometry, std::vector<double> values,
                double nodata = kDefaultNodata);

  template <typename F>
  static ElevationGrid from_function(const GridGeometry& geometry, F&& f) {
    ElevationGrid g(geometry);
    for (int j = 0; j < geometry.n_rows; ++j)
      for (int i = 0; i < geometry.n_cols; ++i) g(i, j) = f(geometry.x(i), geometry.y(j));
    return g;
  }

  const GridGeometry& geometry() const noexcept { return geometry_; }
  int cols() const noexcept { return geometry_.n_cols; }
  int rows() const noexcept { return geometry_.n_rows; }
  double dx() const noexcept { return geometry_.dx; }
  double nodata() const noexcept { return nodata_; }

  double operator()(int i, int j) const noexcept { return values_[geometry_.index(i, j)]; }
  double& operator()(int i, int j) noexcept { return values_[geometry_.index(i, j)]; }
  double operator()(NodeIndex n) const noexcept { return (*this)(n.i, n.j); }
  double& operator()(NodeIndex n) noexcept { return (*this)(n.i, n.j); }

  /// Bounds-checked access; throws std::out_of_range.
  double at(int i, int j) const;

  bool is_nodata(double v) const noexcept;
  bool valid(int i, int j) const noexcept { return !is_nodata((*this)(i, j)); }
  bool valid(NodeIndex n) const noexcept { return valid(n.i, n.j); }
  void set_nodata(int i, int j) noexcept { (*this)(i, j) = nodata_; }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }

  std::size_t count_valid() const noexcept;

  bool operator==(const ElevationGrid&) const = default;

 private:
  GridGeometry geometry_;
  std::vector<double> values_;
  double nodata_ = kDefaultNodata;
};

/// Boolean raster sharing a grid geometry (wet masks, active-node masks).
class Mask {
 public:
  Mask() = default;
  explicit Mask(GridGeometry geometry, bool fill = false)
      : geometry_(geometry), cells_(geometry.size(), fill ? 1 : 0) {}

  const GridGeometry& geometry() const noexcept { return geometry_; }
  int cols() const noexcept { return geometry_.n_cols; }
  int rows() const noexcept { return geometry_.n_rows; }

  bool operator()(int i, int j) const noexcept { return cells_[geometry_.index(i, j)] != 0; }
  bool operator()(NodeIndex n) const noexcept { return (*this)(n.i, n.j); }
  void set(int i, int j, bool v) noexcept { cells_[geometry_.index(i, j)] = v ? 1 : 0; }
  void set(NodeIndex n, bool v) noexcept { set(n.i, n.j, v); }

  std::size_t count() const noexcept;
  bool same_shape(const Mask& other) const noexcept {
    return geometry_.n_cols == other.geometry_.n_cols &&
           geometry_.n_rows == other.geometry_.n_rows;
  }

  bool operator==(const Mask&) const = default;

 private:
  GridGeometry geometry_;
  std::vector<std::uint8_t> cells_;
};

/// Mask grid stored as 0/1 heights; any nonzero valid cell is true.
Mask mask_from_grid(const ElevationGrid& grid);
ElevationGrid grid_from_mask(const Mask& mask);

/// First and second partial derivatives of a height field plus the
/// auxiliary quantities p = b_x^2 + b_y^2 and q = 1 + p.
struct DerivativeField {
  ElevationGrid b_x;
  ElevationGrid b_y;
  ElevationGrid b_xx;
  ElevationGrid b_yy;
  ElevationGrid b_xy;
  ElevationGrid p;
  ElevationGrid q;
};

// ASCII grid I/O. Header keys are fixed; rows are written north first and
// cells are formatted with exactly six decimals.
ElevationGrid parse_grid(std::istream& in, const std::string& source = "<stream>");
ElevationGrid read_grid(const std::filesystem::path& path);
void format_grid(std::ostream& out, const ElevationGrid& grid);
void write_grid(const ElevationGrid& grid, const std::filesystem::path& path);

/// Central differences inside, one-sided second-order stencils on the edges.
/// Stencils touching nodata yield nodata. Throws std::invalid_argument for
/// grids smaller than 3x3.
DerivativeField derivatives(const ElevationGrid& grid);

/// Bilinear interpolation of the enclosing nodes. Throws std::out_of_range
/// outside the node extent and std::domain_error when a weighted node is nodata.
double sample_bilinear(const ElevationGrid& grid, double x, double y);

// Portable graymap preview (ASCII P2), min-max scaled to 0..255, north row
// first. Nodata cells map to 0.
void format_pgm(std::ostream& out, const ElevationGrid& grid);
void write_pgm(const ElevationGrid& grid, const std::filesystem::path& path);

}  // namespace demforge
