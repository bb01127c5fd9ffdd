#include "demforge/features.hpp"

#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace demforge {

void ChannelSection::validate() const {
  if (!(bed_width > 0.0) || !(top_width >= bed_width) || !(depth_below_bank > 0.0) ||
      !std::isfinite(top_width) || !std::isfinite(depth_below_bank))
    throw std::invalid_argument("invalid channel section: need top_width >= bed_width > 0 "
                                "and depth_below_bank > 0");
}

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::isoline: return "isoline";
    case FeatureKind::depth_curve: return "depth_curve";
    case FeatureKind::channel: return "channel";
    case FeatureKind::points: return "points";
  }
  return "unknown";
}

namespace {

std::optional<FeatureKind> kind_from_string(std::string_view s) {
  for (auto k : {FeatureKind::isoline, FeatureKind::depth_curve, FeatureKind::channel,
                 FeatureKind::points})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

VectorFeature parse_feature_line(std::string_view line, const std::string& source,
                                 std::size_t line_no) {
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError(source, line_no, msg);
  };
  auto number = [&](std::string_view key, std::string_view text) {
    auto v = detail::parse_double(text);
    if (!v || !std::isfinite(*v))
      throw fail("bad " + std::string(key) + " value '" + std::string(text) + "'");
    return *v;
  };

  VectorFeature f;
  bool have_type = false;
  std::optional<std::string_view> coords;

  for (auto raw : detail::split(line, ';')) {
    auto token = detail::trim(raw);
    if (token.empty()) continue;
    const auto eq = token.find('=');
    if (eq == std::string_view::npos) {
      if (coords) throw fail("more than one coordinate list");
      coords = token;
      continue;
    }
    const auto key = detail::trim(token.substr(0, eq));
    const auto value = detail::trim(token.substr(eq + 1));
    if (key == "TYPE") {
      auto k = kind_from_string(value);
      if (!k) throw fail("unknown feature TYPE '" + std::string(value) + "'");
      f.kind = *k;
      have_type = true;
    } else if (key == "LEVEL") {
      f.level = number(key, value);
    } else if (key == "DEPTH") {
      f.depth = number(key, value);
    } else if (key == "SURFACE") {
      f.surface = number(key, value);
    } else if (key == "SECTION") {
      auto parts = detail::split(value, ',');
      if (parts.size() != 3) throw fail("SECTION needs bw,tw,d");
      f.section = ChannelSection{number("SECTION", parts[0]), number("SECTION", parts[1]),
                                 number("SECTION", parts[2])};
    } else if (key == "T") {
      if (!value.empty()) f.timestamp = std::string(value);
    } else if (key == "ID") {
      f.id = std::string(value);
    } else {
      throw fail("unknown key '" + std::string(key) + "'");
    }
  }
  if (!have_type) throw fail("missing TYPE");
  if (!coords) throw fail("missing coordinate list");

  for (auto vertex_text : detail::split(*coords, ',')) {
    auto parts = detail::split_ws(vertex_text);
    if (parts.empty()) continue;
    if (f.kind == FeatureKind::points) {
      if (parts.size() != 3) throw fail("points need 'x y z' triples");
      f.points.push_back({number("x", parts[0]), number("y", parts[1]), number("z", parts[2])});
    } else {
      if (parts.size() != 2) throw fail("vertices need 'x y' pairs");
      f.vertices.push_back({number("x", parts[0]), number("y", parts[1])});
    }
  }
  if (f.kind == FeatureKind::points ? f.points.empty() : f.vertices.empty())
    throw fail("feature has no coordinates");
  if (f.id.empty()) f.id = std::string(to_string(f.kind)) + "@" + std::to_string(line_no);
  return f;
}

}  // namespace

std::vector<VectorFeature> parse_features(std::istream& in, const std::string& source) {
  std::vector<VectorFeature> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto t = detail::trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.push_back(parse_feature_line(t, source, line_no));
  }
  return out;
}

std::vector<VectorFeature> read_features(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature file " + path.string());
  return parse_features(in, path.string());
}

std::string format_feature(const VectorFeature& f) {
  using detail::format_shortest;
  std::string s = "TYPE=" + std::string(to_string(f.kind));
  if (!f.id.empty()) s += ";ID=" + f.id;
  if (f.level) s += ";LEVEL=" + format_shortest(*f.level);
  if (f.depth) s += ";DEPTH=" + format_shortest(*f.depth);
  if (f.surface) s += ";SURFACE=" + format_shortest(*f.surface);
  if (f.section)
    s += ";SECTION=" + format_shortest(f.section->bed_width) + "," +
         format_shortest(f.section->top_width) + "," +
         format_shortest(f.section->depth_below_bank);
  if (f.timestamp) s += ";T=" + *f.timestamp;
  s += ';';
  bool first = true;
  if (f.kind == FeatureKind::points) {
    for (const auto& p : f.points) {
      s += (first ? "" : ",") + format_shortest(p.x) + " " + format_shortest(p.y) + " " +
           format_shortest(p.z);
      first = false;
    }
  } else {
    for (const auto& p : f.vertices) {
      s += (first ? "" : ",") + format_shortest(p.x) + " " + format_shortest(p.y);
      first = false;
    }
  }
  return s;
}

void write_features(std::span<const VectorFeature> features, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write feature file " + path.string());
  for (const auto& f : features) out << format_feature(f) << '\n';
}

// ---------------------------------------------------------------------------

SegmentProjection project_onto_segment(Point2 p, Point2 a, Point2 b) {
  const double ex = b.x - a.x;
  const double ey = b.y - a.y;
  const double len2 = ex * ex + ey * ey;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p.x - a.x) * ex + (p.y - a.y) * ey) / len2, 0.0, 1.0);
  const Point2 c{a.x + t * ex, a.y + t * ey};
  return {std::hypot(p.x - c.x, p.y - c.y), c, t};
}

namespace {

// Cells whose interior the segment passes through, in order. The segment is
// split at every crossing of a cell boundary line; the midpoint of each piece
// identifies one cell.
void trace_segment(const GridGeometry& g, Point2 a, Point2 b, std::vector<NodeIndex>& out) {
  auto push = [&](double px, double py) {
    const NodeIndex n = g.nearest_node(px, py);
    if (!g.in_bounds(n)) return;
    if (out.empty() || out.back() != n) out.push_back(n);
  };

  std::vector<double> ts = {0.0, 1.0};
  auto crossings = [&](double p0, double p1, double origin) {
    if (p0 == p1) return;
    // Boundary lines sit at origin + (k + 0.5) * dx.
    const double f0 = (p0 - origin) / g.dx - 0.5;
    const double f1 = (p1 - origin) / g.dx - 0.5;
    const double lo = std::min(f0, f1);
    const double hi = std::max(f0, f1);
    for (double k = std::ceil(lo); k <= hi; k += 1.0) {
      const double t = (k - f0) / (f1 - f0);
      if (t > 0.0 && t < 1.0) ts.push_back(t);
    }
  };
  crossings(a.x, b.x, g.x0);
  crossings(a.y, b.y, g.y0);
  std::sort(ts.begin(), ts.end());

  if (a == b) {
    push(a.x, a.y);
    return;
  }
  for (std::size_t k = 1; k < ts.size(); ++k) {
    if (ts[k] - ts[k - 1] <= 1e-12) continue;
    const double tm = 0.5 * (ts[k] + ts[k - 1]);
    push(a.x + tm * (b.x - a.x), a.y + tm * (b.y - a.y));
  }
}

}  // namespace

std::vector<NodeIndex> trace_cells(const GridGeometry& geometry, std::span<const Point2> path) {
  std::vector<NodeIndex> out;
  if (path.size() == 1) {
    trace_segment(geometry, path[0], path[0], out);
    return out;
  }
  for (std::size_t k = 1; k < path.size(); ++k) trace_segment(geometry, path[k - 1], path[k], out);
  return out;
}

std::vector<NodeIndex> rasterize_polyline(const GridGeometry& geometry,
                                          std::span<const Point2> path) {
  std::vector<NodeIndex> out;
  std::set<NodeIndex> seen;
  for (const auto& n : trace_cells(geometry, path))
    if (seen.insert(n).second) out.push_back(n);
  return out;
}

}  // namespace demforge
