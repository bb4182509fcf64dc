#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mapd {

using CellId = int;

// Compass orientations. North is decreasing row (raster convention).
enum class Orientation : std::uint8_t { North = 0, East = 1, South = 2, West = 3 };

inline constexpr std::array<Orientation, 4> kOrientations{
    Orientation::North, Orientation::East, Orientation::South, Orientation::West};

constexpr int dx(Orientation o) {
  switch (o) {
    case Orientation::East: return 1;
    case Orientation::West: return -1;
    default: return 0;
  }
}

constexpr int dy(Orientation o) {
  switch (o) {
    case Orientation::North: return -1;
    case Orientation::South: return 1;
    default: return 0;
  }
}

constexpr Orientation opposite(Orientation o) {
  return static_cast<Orientation>((static_cast<int>(o) + 2) % 4);
}

// Number of quarter turns (0, 1 or 2) between two orientations.
constexpr int quarter_turns(Orientation a, Orientation b) {
  const int d = (static_cast<int>(b) - static_cast<int>(a) + 4) % 4;
  return d == 3 ? 1 : d;
}

constexpr bool orthogonal(Orientation a, Orientation b) { return quarter_turns(a, b) == 1; }

constexpr char to_char(Orientation o) {
  constexpr std::array<char, 4> glyphs{'N', 'E', 'S', 'W'};
  return glyphs[static_cast<int>(o)];
}

inline Orientation orientation_from_char(char c) {
  switch (c) {
    case 'N': case 'n': return Orientation::North;
    case 'E': case 'e': return Orientation::East;
    case 'S': case 's': return Orientation::South;
    case 'W': case 'w': return Orientation::West;
    default: throw std::invalid_argument(std::string("unknown orientation '") + c + "'");
  }
}

enum class EndpointKind : std::uint8_t { None, Task, NonTask };

struct Coord {
  int x = 0;
  int y = 0;
  friend bool operator==(const Coord&, const Coord&) = default;
};

class MapParseError : public std::runtime_error {
 public:
  MapParseError(int line, int column, const std::string& what)
      : std::runtime_error("map:" + std::to_string(line) + ":" + std::to_string(column) + ": " + what),
        line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

// 4-neighbor grid with square cells of side cell_size meters.
class GridMap {
 public:
  GridMap() = default;
  GridMap(int width, int height, double cell_size)
      : width_(width), height_(height), cell_size_(cell_size),
        blocked_(static_cast<std::size_t>(width) * height, false),
        kind_(static_cast<std::size_t>(width) * height, EndpointKind::None) {
    if (width <= 0 || height <= 0) throw std::domain_error("grid dimensions must be positive");
    if (!(cell_size > 0.0)) throw std::domain_error("cell size must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int num_cells() const { return width_ * height_; }
  double cell_size() const { return cell_size_; }

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  bool valid(CellId c) const { return c >= 0 && c < num_cells(); }
  CellId id(int x, int y) const { return y * width_ + x; }
  CellId id(Coord c) const { return id(c.x, c.y); }
  Coord coord(CellId c) const { return {c % width_, c / width_}; }

  bool blocked(CellId c) const { return blocked_[c]; }
  bool traversable(CellId c) const { return valid(c) && !blocked_[c]; }
  EndpointKind kind(CellId c) const { return kind_[c]; }
  bool is_endpoint(CellId c) const { return kind_[c] != EndpointKind::None; }

  void set_blocked(CellId c, bool b) {
    if (b && kind_[c] != EndpointKind::None) throw std::domain_error("endpoints cannot be blocked");
    blocked_[c] = b;
  }
  void set_kind(CellId c, EndpointKind k) {
    if (k != EndpointKind::None && blocked_[c]) throw std::domain_error("endpoints cannot be blocked");
    kind_[c] = k;
  }

  // Cell reached by one step in direction o, if in bounds and unblocked.
  std::optional<CellId> step(CellId c, Orientation o) const {
    const Coord p = coord(c);
    const int nx = p.x + dx(o);
    const int ny = p.y + dy(o);
    if (!in_bounds(nx, ny)) return std::nullopt;
    const CellId n = id(nx, ny);
    if (blocked_[n]) return std::nullopt;
    return n;
  }

  std::vector<CellId> cells_of_kind(EndpointKind k) const {
    std::vector<CellId> out;
    for (CellId c = 0; c < num_cells(); ++c)
      if (!blocked_[c] && kind_[c] == k) out.push_back(c);
    return out;
  }
  std::vector<CellId> task_endpoints() const { return cells_of_kind(EndpointKind::Task); }
  std::vector<CellId> non_task_endpoints() const { return cells_of_kind(EndpointKind::NonTask); }
  std::vector<CellId> endpoints() const {
    std::vector<CellId> out;
    for (CellId c = 0; c < num_cells(); ++c)
      if (!blocked_[c] && kind_[c] != EndpointKind::None) out.push_back(c);
    return out;
  }

  friend bool operator==(const GridMap&, const GridMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  double cell_size_ = 1.0;
  std::vector<bool> blocked_;
  std::vector<EndpointKind> kind_;
};

struct Configuration {
  CellId cell = 0;
  Orientation orientation = Orientation::North;
  friend bool operator==(const Configuration&, const Configuration&) = default;
};

// Free agents move through every unblocked cell; task agents only through
// non-endpoints plus the pickup and delivery cells of their own task.
struct TraversalPolicy {
  enum class Mode : std::uint8_t { Free, Task };
  Mode mode = Mode::Free;
  CellId pickup = -1;
  CellId delivery = -1;

  static TraversalPolicy free_mode() { return {}; }
  static TraversalPolicy task_mode(CellId pickup, CellId delivery) {
    return {Mode::Task, pickup, delivery};
  }

  bool admits(const GridMap& map, CellId c) const {
    if (!map.traversable(c)) return false;
    if (mode == Mode::Free) return true;
    return !map.is_endpoint(c) || c == pickup || c == delivery;
  }
};

inline void require_open_cell(const GridMap& map, CellId cell) {
  if (!map.valid(cell)) throw std::domain_error("cell " + std::to_string(cell) + " out of bounds");
  if (map.blocked(cell)) throw std::domain_error("cell " + std::to_string(cell) + " is blocked");
}

inline std::vector<CellId> neighbors(const GridMap& map, CellId cell, const TraversalPolicy& policy) {
  require_open_cell(map, cell);
  std::vector<CellId> out;
  out.reserve(4);
  for (Orientation o : kOrientations) {
    if (auto n = map.step(cell, o); n && policy.admits(map, *n)) out.push_back(*n);
  }
  return out;
}

struct WellFormedReport {
  enum class Violation : std::uint8_t { None, InfiniteTasks, TooFewParkingCells, EndpointsDisconnected };
  Violation violation = Violation::None;
  std::string detail;

  bool well_formed() const { return violation == Violation::None; }
  explicit operator bool() const { return well_formed(); }
};

// Pairwise endpoint connectivity through non-endpoints: endpoints a and b are
// joined iff they are 4-adjacent or both touch the same connected component
// of non-endpoint cells.
inline WellFormedReport validate_well_formed(const GridMap& map, std::size_t num_agents,
                                             std::optional<std::size_t> num_tasks) {
  using V = WellFormedReport::Violation;
  if (!num_tasks) return {V::InfiniteTasks, "task stream is unbounded"};

  const auto parking = map.non_task_endpoints();
  if (parking.size() < num_agents) {
    return {V::TooFewParkingCells, std::to_string(parking.size()) + " non-task endpoints for " +
                                       std::to_string(num_agents) + " agents"};
  }

  const int n = map.num_cells();
  std::vector<int> component(n, -1);
  int num_components = 0;
  for (CellId s = 0; s < n; ++s) {
    if (map.blocked(s) || map.is_endpoint(s) || component[s] >= 0) continue;
    std::queue<CellId> open;
    open.push(s);
    component[s] = num_components;
    while (!open.empty()) {
      const CellId c = open.front();
      open.pop();
      for (Orientation o : kOrientations) {
        auto nb = map.step(c, o);
        if (nb && !map.is_endpoint(*nb) && component[*nb] < 0) {
          component[*nb] = num_components;
          open.push(*nb);
        }
      }
    }
    ++num_components;
  }

  const auto ends = map.endpoints();
  std::vector<std::vector<int>> touches(ends.size());
  for (std::size_t i = 0; i < ends.size(); ++i) {
    for (Orientation o : kOrientations) {
      auto nb = map.step(ends[i], o);
      if (nb && !map.is_endpoint(*nb)) touches[i].push_back(component[*nb]);
    }
    std::sort(touches[i].begin(), touches[i].end());
    touches[i].erase(std::unique(touches[i].begin(), touches[i].end()), touches[i].end());
  }

  auto adjacent = [&](CellId a, CellId b) {
    const Coord pa = map.coord(a), pb = map.coord(b);
    return std::abs(pa.x - pb.x) + std::abs(pa.y - pb.y) == 1;
  };
  for (std::size_t i = 0; i < ends.size(); ++i) {
    for (std::size_t j = i + 1; j < ends.size(); ++j) {
      if (adjacent(ends[i], ends[j])) continue;
      std::vector<int> shared;
      std::set_intersection(touches[i].begin(), touches[i].end(), touches[j].begin(), touches[j].end(),
                            std::back_inserter(shared));
      if (shared.empty()) {
        const Coord a = map.coord(ends[i]), b = map.coord(ends[j]);
        return {V::EndpointsDisconnected, "no endpoint-free path between (" + std::to_string(a.x) + "," +
                                              std::to_string(a.y) + ") and (" + std::to_string(b.x) + "," +
                                              std::to_string(b.y) + ")"};
      }
    }
  }
  return {};
}

inline char glyph(const GridMap& map, CellId c) {
  if (map.blocked(c)) return '@';
  switch (map.kind(c)) {
    case EndpointKind::Task: return 'e';
    case EndpointKind::NonTask: return 's';
    default: return '.';
  }
}

// Map file: header `width height cell_size`, then one row of glyphs per line.
//   .  non-endpoint   @  blocked   e  task endpoint   s  non-task endpoint
inline GridMap load_map(std::string_view text) {
  std::vector<std::string> lines;
  {
    std::string current;
    for (char ch : text) {
      if (ch == '\n') {
        if (!current.empty() && current.back() == '\r') current.pop_back();
        lines.push_back(std::move(current));
        current.clear();
      } else {
        current.push_back(ch);
      }
    }
    if (!current.empty()) lines.push_back(std::move(current));
  }
  std::size_t line_no = 0;
  while (line_no < lines.size() && (lines[line_no].empty() || lines[line_no][0] == '#')) ++line_no;
  if (line_no >= lines.size()) throw MapParseError(1, 1, "missing header");

  int width = 0, height = 0;
  double cell = 0.0;
  {
    std::istringstream header(lines[line_no]);
    if (!(header >> width >> height >> cell)) {
      throw MapParseError(static_cast<int>(line_no) + 1, 1, "header must be `width height cell_size`");
    }
    if (width <= 0 || height <= 0 || !(cell > 0.0)) {
      throw MapParseError(static_cast<int>(line_no) + 1, 1, "non-positive header value");
    }
  }
  ++line_no;

  GridMap map(width, height, cell);
  for (int y = 0; y < height; ++y, ++line_no) {
    if (line_no >= lines.size()) throw MapParseError(static_cast<int>(line_no) + 1, 1, "missing grid row");
    const std::string& row = lines[line_no];
    if (static_cast<int>(row.size()) != width) {
      throw MapParseError(static_cast<int>(line_no) + 1, static_cast<int>(std::min<std::size_t>(row.size(), width)) + 1,
                          "row has " + std::to_string(row.size()) + " cells, expected " + std::to_string(width));
    }
    for (int x = 0; x < width; ++x) {
      const CellId c = map.id(x, y);
      switch (row[x]) {
        case '.': break;
        case '@': map.set_blocked(c, true); break;
        case 'e': map.set_kind(c, EndpointKind::Task); break;
        case 's': map.set_kind(c, EndpointKind::NonTask); break;
        default:
          throw MapParseError(static_cast<int>(line_no) + 1, x + 1, std::string("unknown glyph '") + row[x] + "'");
      }
    }
  }
  for (; line_no < lines.size(); ++line_no) {
    if (!lines[line_no].empty()) throw MapParseError(static_cast<int>(line_no) + 1, 1, "trailing content after grid");
  }
  return map;
}

inline std::string serialize_map(const GridMap& map) {
  std::ostringstream out;
  out.precision(17);
  out << map.width() << ' ' << map.height() << ' ' << map.cell_size() << '\n';
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) out << glyph(map, map.id(x, y));
    out << '\n';
  }
  return out.str();
}

}  // namespace mapd
