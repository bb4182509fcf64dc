#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mapd/kinematics.hpp"

namespace mapd {

using AgentId = int;

// Maximal span during which `owner` rests on a cell, from the instant its
// center reaches the cell center (or its path starts) to the instant it leaves.
struct ReservedInterval {
  double lb = 0.0;
  double ub = kInf;
  AgentId owner = -1;
  OptionalTimedConfiguration arr_cfg;  // empty when the owner starts here
  OptionalTimedConfiguration dep_cfg;  // empty iff ub is infinite
  friend bool operator==(const ReservedInterval&, const ReservedInterval&) = default;
};

struct SafeInterval {
  double lb = 0.0;
  double ub = kInf;
  OptionalTimedConfiguration dep_cfg_at_lb;
  OptionalTimedConfiguration arr_cfg_at_ub;
  friend bool operator==(const SafeInterval&, const SafeInterval&) = default;
};

class ReservationConflict : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline bool intervals_overlap(double a_lb, double a_ub, double b_lb, double b_ub) {
  const double lo = std::max(a_lb, b_lb);
  const double hi = std::min(a_ub, b_ub);
  if (hi - lo > kTimeEps) return true;
  auto point_inside = [](double p_lb, double p_ub, double lb, double ub) {
    return p_ub - p_lb <= kTimeEps && p_lb > lb + kTimeEps && p_lb < ub - kTimeEps;
  };
  return point_inside(a_lb, a_ub, b_lb, b_ub) || point_inside(b_lb, b_ub, a_lb, a_ub);
}

// Per-cell reserved intervals ordered by lower bound.
class ReservationTable {
 public:
  ReservationTable() = default;
  ReservationTable(int num_cells, double cell_size) : cells_(num_cells), cell_size_(cell_size) {}

  int num_cells() const { return static_cast<int>(cells_.size()); }
  double cell_size() const { return cell_size_; }

  const std::vector<ReservedInterval>& reserved(CellId cell) const { return cells_.at(cell); }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& c : cells_) n += c.size();
    return n;
  }

  void insert(CellId cell, const ReservedInterval& interval) {
    if (interval.ub < interval.lb - kTimeEps) throw std::domain_error("reserved interval with ub < lb");
    auto& list = cells_.at(cell);
    auto pos = std::lower_bound(list.begin(), list.end(), interval.lb,
                                [](const ReservedInterval& r, double lb) { return r.lb < lb; });
    auto conflict = [&](const ReservedInterval& r) {
      return intervals_overlap(r.lb, r.ub, interval.lb, interval.ub);
    };
    if (pos != list.begin() && conflict(*std::prev(pos))) throw_conflict(cell, *std::prev(pos), interval);
    for (auto it = pos; it != list.end() && it->lb <= interval.ub + kTimeEps; ++it) {
      if (conflict(*it)) throw_conflict(cell, *it, interval);
    }
    list.insert(pos, interval);
    auto& owned = cells_by_owner_[interval.owner];
    if (std::find(owned.begin(), owned.end(), cell) == owned.end()) owned.push_back(cell);
  }

  // Complement of the reserved intervals with respect to [0, inf].
  // dep_cfg_at_lb is dropped for safe intervals starting at or before
  // `current_t`.
  std::vector<SafeInterval> safe_intervals(CellId cell, double current_t) const {
    const auto& list = cells_.at(cell);
    std::vector<SafeInterval> out;
    out.reserve(list.size() + 1);
    double lb = 0.0;
    OptionalTimedConfiguration dep;
    for (const auto& r : list) {
      if (r.lb >= lb - kTimeEps) {
        out.push_back({lb, std::max(lb, r.lb), lb <= current_t ? std::nullopt : dep, r.arr_cfg});
      }
      lb = r.ub;
      dep = r.dep_cfg;
      if (std::isinf(lb)) return out;
    }
    out.push_back({lb, kInf, lb <= current_t ? std::nullopt : dep, std::nullopt});
    return out;
  }

  // Registers the occupancy spans of `path`.
  void reserve_path(const TimedPath& path, AgentId owner, double radius) {
    CellId cell = path.start().cell;
    double span_lb = path.start_time();
    OptionalTimedConfiguration arrived;
    std::vector<std::pair<CellId, ReservedInterval>> spans;
    for (const Segment& s : path.segments()) {
      if (s.kind != Segment::Kind::Move) continue;
      const double v = cell_size_ / s.duration();
      spans.push_back({cell, {span_lb, s.start, owner, arrived, TimedConfiguration{{s.from, s.orientation}, radius, v}}});
      arrived = TimedConfiguration{{s.to, s.orientation}, radius, v};
      cell = s.to;
      span_lb = s.end;
    }
    spans.push_back({cell, {span_lb, kInf, owner, arrived, std::nullopt}});

    // All-or-nothing: roll back partial insertions on conflict.
    std::size_t done = 0;
    try {
      for (; done < spans.size(); ++done) insert(spans[done].first, spans[done].second);
    } catch (...) {
      for (std::size_t k = 0; k < done; ++k) erase_exact(spans[k].first, spans[k].second);
      throw;
    }
  }

  void release_agent(AgentId owner) {
    auto it = cells_by_owner_.find(owner);
    if (it == cells_by_owner_.end()) return;
    for (CellId cell : it->second) {
      auto& list = cells_[cell];
      std::erase_if(list, [owner](const ReservedInterval& r) { return r.owner == owner; });
    }
    cells_by_owner_.erase(it);
  }

  // Drops intervals that ended before current_t - max_offset.
  std::size_t garbage_collect(double current_t, double max_offset) {
    const double cutoff = current_t - max_offset;
    std::size_t removed = 0;
    for (auto& list : cells_) {
      removed += std::erase_if(list, [cutoff](const ReservedInterval& r) { return r.ub < cutoff; });
    }
    for (auto& [owner, owned] : cells_by_owner_) {
      std::erase_if(owned, [&](CellId c) {
        const auto& list = cells_[c];
        return std::none_of(list.begin(), list.end(), [o = owner](const ReservedInterval& r) { return r.owner == o; });
      });
    }
    return removed;
  }

  std::string dump(CellId cell) const {
    std::string out = "cell " + std::to_string(cell) + "\n";
    for (const auto& r : cells_.at(cell)) {
      out += "  [" + format_time(r.lb) + ", " + format_time(r.ub) + "] owner=" + std::to_string(r.owner) +
             " arr=" + format_cfg(r.arr_cfg) + " dep=" + format_cfg(r.dep_cfg) + "\n";
    }
    return out;
  }

  static std::string format_time(double t) {
    if (std::isinf(t)) return "inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9f", t);
    return buf;
  }

  static std::string format_cfg(const OptionalTimedConfiguration& c) {
    if (!c) return "-";
    char buf[96];
    std::snprintf(buf, sizeof(buf), "(%d,%c,R=%.9f,v=%.9f)", c->cfg.cell, to_char(c->cfg.orientation), c->radius,
                  c->v_trans);
    return buf;
  }

 private:
  void erase_exact(CellId cell, const ReservedInterval& r) {
    auto& list = cells_[cell];
    auto it = std::find(list.begin(), list.end(), r);
    if (it != list.end()) list.erase(it);
  }

  [[noreturn]] static void throw_conflict(CellId cell, const ReservedInterval& existing, const ReservedInterval& added) {
    throw ReservationConflict("reservation conflict at cell " + std::to_string(cell) + ": owner " +
                              std::to_string(added.owner) + " [" + format_time(added.lb) + ", " +
                              format_time(added.ub) + "] overlaps owner " + std::to_string(existing.owner) + " [" +
                              format_time(existing.lb) + ", " + format_time(existing.ub) + "]");
  }

  std::vector<std::vector<ReservedInterval>> cells_;
  std::unordered_map<AgentId, std::vector<CellId>> cells_by_owner_;
  double cell_size_ = 1.0;
};

inline std::vector<SafeInterval> get_safe_intervals(const ReservationTable& table, CellId cell, double current_t) {
  return table.safe_intervals(cell, current_t);
}

// Largest offset any pair of agents can require: two opposite moves at the
// slowest velocity, which also bounds the anti-overtaking terms.
inline double max_offset(double cell_size, double v_min) { return 2.0 * cell_size / v_min; }

}  // namespace mapd
