#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "uamflow/controller.hpp"
#include "uamflow/errors.hpp"
#include "uamflow/predictor.hpp"
#include "uamflow/sim/traffic.hpp"
#include "uamflow/trajdata.hpp"

namespace uamflow::sim {

using controller::LaneGeometry;
using controller::SeparationStandard;
using controller::UamState;
using geo::Units;

enum class Mode { baseline, adjusted };

inline std::string to_string(Mode m) { return m == Mode::baseline ? "baseline" : "adjusted"; }

inline Mode parse_mode(const std::string& s) {
  if (s == "baseline") return Mode::baseline;
  if (s == "adjusted" || s == "speed-adjusted") return Mode::adjusted;
  throw ConfigError("unknown mode '" + s + "' (expected baseline or adjusted)");
}

/// Proximity that triggers conflict analysis. Both bounds are strict.
struct EncounterCriteria {
  double horizontal = 2.0 * Units::nautical_mile;  // 3,704 m
  double vertical = 1200.0 * Units::foot;          // 365.76 m

  bool contains(double horz, double vert) const { return horz < horizontal && vert < vertical; }
};

struct LaneSpec {
  std::string id;
  GeoPoint start, end;
  std::vector<double> altitudes_ft{1500.0, 2000.0, 2500.0, 3000.0};

  LaneGeometry geometry(double altitude_ft) const { return {start, end, altitude_ft * Units::foot}; }
};

enum class TrafficSource { synthetic, replay };

struct Scenario {
  GeoPoint origin{126.7958, 37.5583, 0.0};
  int duration_s = 2 * 86400;
  int uam_interval_s = 10;
  bool drain = true;          // keep stepping after the last spawn until every UAM lands
  int drain_limit_s = 3600;
  std::uint64_t seed = 0;
  std::vector<LaneSpec> lanes;
  TrafficSource source = TrafficSource::synthetic;
  std::string replay_csv;
  std::optional<double> replay_start;  // replay time mapped to tick 0
  GeneratorConfig generator = default_generator();
  SeparationStandard separation;
  EncounterCriteria encounter;
  int cpa_window_s = controller::kHorizon;
  int samples = predictor::kDefaultSamples;
  predictor::SanityBox sanity;

  void validate() const {
    if (duration_s < 1 || uam_interval_s < 1 || drain_limit_s < 0 || cpa_window_s < 1 || samples < 1) {
      throw ConfigError("scenario: durations, interval, CPA window and sample count must be positive");
    }
    if (lanes.empty()) throw ConfigError("scenario: no lanes configured");
    for (const auto& l : lanes) {
      if (l.altitudes_ft.empty()) throw ConfigError("scenario: lane '" + l.id + "' has no altitudes");
      for (double a : l.altitudes_ft) l.geometry(a);
    }
    separation.validate();
    if (!(encounter.horizontal > 0.0) || !(encounter.vertical > 0.0)) {
      throw ConfigError("scenario: encounter thresholds must be positive");
    }
    if (source == TrafficSource::replay && replay_csv.empty()) throw ConfigError("scenario: replay needs a CSV path");
  }
};

/// The reference geometry: a 14 km lane heading 050 deg that crosses the
/// north-west corridor at right angles 10 km from the runway, at the four
/// standard altitudes.
inline LaneSpec default_lane(const GeoPoint& origin) {
  return {"W14", geo::from_enu({-11790.0, 3159.0, 0.0}, origin), geo::from_enu({-1066.0, 12161.0, 0.0}, origin)};
}

// ---------------------------------------------------------------------------
// Results

struct CpaRecord {
  std::string intruder;
  Kind intruder_kind = Kind::arrival;
  int tick = 0;
  double range_m = 0.0;
  double vertical_m = 0.0;
  double bearing_deg = 0.0;
  bool vert_clear = false;
};

struct FlightRecord {
  std::string id;
  int spawn_tick = 0;
  bool completed = false;
  double planned_time = 0.0;
  double actual_time = 0.0;
  double delay_proportion = 0.0;
  // Closest horizontal distance while vertically closer than the minimum;
  // +inf if that never happened.
  double min_separation = std::numeric_limits<double>::infinity();
  int los_ticks = 0;
  int los_intruders = 0;
  std::vector<CpaRecord> cpa;
};

struct SimResult {
  std::string lane;
  double altitude_ft = 0.0;
  Mode mode = Mode::baseline;
  std::uint64_t seed = 0;
  int ticks = 0;
  int spawned = 0, completed = 0, active = 0;
  long predictions = 0, missing_history = 0, clamped_points = 0, forced_brakes = 0;
  std::vector<FlightRecord> flights;

  int los_events() const {
    int n = 0;
    for (const auto& f : flights) n += f.los_intruders;
    return n;
  }
};

// ---------------------------------------------------------------------------
// Encounters

struct Snapshot {
  std::vector<GeoPoint> uams;
  std::vector<GeoPoint> aircraft;
};

/// Every (uam, aircraft) index pair inside the encounter envelope.
inline std::vector<std::pair<std::size_t, std::size_t>> encounter_pairs(const Snapshot& w,
                                                                        const EncounterCriteria& c = {}) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < w.uams.size(); ++i)
    for (std::size_t j = 0; j < w.aircraft.size(); ++j) {
      const double v = std::abs(w.uams[i].alt - w.aircraft[j].alt);
      if (v >= c.vertical) continue;
      if (c.contains(geo::geodesic_distance(w.uams[i], w.aircraft[j]), v)) out.emplace_back(i, j);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Traffic

/// 1 Hz conventional traffic for a scenario, with times in simulation
/// seconds.
inline std::vector<Trajectory> build_traffic(const Scenario& sc) {
  if (sc.source == TrafficSource::synthetic) {
    const int span = sc.duration_s + (sc.drain ? sc.drain_limit_s : 0);
    return generate_traffic(sc.generator, sc.origin, span, sc.seed);
  }
  auto raw = trajdata::read_csv_file(sc.replay_csv);
  std::vector<Trajectory> out;
  double t0 = std::numeric_limits<double>::infinity();
  for (const auto& r : raw) {
    if (r.points.size() < 2) continue;
    out.push_back(trajdata::resample_1hz(r));
    t0 = std::min(t0, out.back().points.front().t);
  }
  if (out.empty()) throw MalformedInput("replay: no usable trajectories");
  const double shift = std::floor(sc.replay_start.value_or(t0));
  for (auto& tr : out)
    for (auto& p : tr.points) p.t -= shift;
  std::stable_sort(out.begin(), out.end(), [](const Trajectory& a, const Trajectory& b) {
    return a.points.front().t != b.points.front().t ? a.points.front().t < b.points.front().t : a.id < b.id;
  });
  return out;
}

namespace detail {

// Active conventional aircraft at a tick; flights must be sorted by start.
class TrafficCursor {
 public:
  struct Active {
    const Trajectory* traj;
    std::size_t index;
  };

  explicit TrafficCursor(const std::vector<Trajectory>& flights) : flights_(flights) {}

  const std::vector<Active>& at(int tick) {
    const double t = tick;
    while (next_ < flights_.size() && flights_[next_].points.front().t <= t) live_.push_back(&flights_[next_++]);
    std::erase_if(live_, [&](const Trajectory* tr) { return tr->points.back().t < t; });
    active_.clear();
    for (const auto* tr : live_) {
      const double off = t - tr->points.front().t;
      active_.push_back({tr, static_cast<std::size_t>(off)});
    }
    return active_;
  }

 private:
  const std::vector<Trajectory>& flights_;
  std::size_t next_ = 0;
  std::vector<const Trajectory*> live_;
  std::vector<Active> active_;
};

struct CpaTrack {
  int first_tick = 0;
  bool done = false;
  double best_close = std::numeric_limits<double>::infinity();
  double best_any = std::numeric_limits<double>::infinity();
  CpaRecord close, any;
};

struct Uam {
  FlightRecord rec;
  UamState state;
  double delay = 0.0;
  std::map<std::string, CpaTrack> tracks;
  std::map<std::string, bool> in_los;
};

// One CPA record per encountered intruder, in order of first encounter.
inline void close_tracks(Uam& u) {
  std::vector<std::pair<int, CpaRecord>> recs;
  for (const auto& [id, tr] : u.tracks) {
    CpaRecord r = std::isfinite(tr.best_close) ? tr.close : tr.any;
    r.vert_clear = !std::isfinite(tr.best_close);
    recs.emplace_back(tr.first_tick, std::move(r));
  }
  std::stable_sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [t, r] : recs) u.rec.cpa.push_back(std::move(r));
}

// Time within one tick needed to cover `r` meters from speed v at rate a.
inline double time_to_cover(double v, double a, double r, double vmax) {
  if (a > 0.0) {
    const double tc = (vmax - v) / a;
    const double dc = v * tc + 0.5 * a * tc * tc;
    if (r > dc) return tc + (r - dc) / vmax;
  }
  const double disc = std::max(0.0, v * v + 2.0 * a * r);
  return 2.0 * r / (v + std::sqrt(disc));
}

}  // namespace detail

/// Simulates one lane at one altitude. `pred` is required in adjusted mode.
inline SimResult run(const Scenario& sc, const std::vector<Trajectory>& traffic, const LaneSpec& lane_spec,
                     double altitude_ft, Mode mode, const predictor::Predictor* pred) {
  sc.validate();
  if (mode == Mode::adjusted && !pred) throw ConfigError("adjusted mode needs a predictor");
  if (!std::is_sorted(traffic.begin(), traffic.end(), [](const Trajectory& a, const Trajectory& b) {
        return a.points.front().t < b.points.front().t;
      })) {
    throw ConfigError("traffic must be sorted by start time");
  }
  for (const auto& tr : traffic)
    if (tr.points.empty()) throw MalformedInput("traffic: empty trajectory '" + tr.id + "'");
  const LaneGeometry lane = lane_spec.geometry(altitude_ft);
  const double vmax = controller::kVmax;
  const double planned = lane.length() / vmax;
  const double course = lane.course_deg();

  SimResult res;
  res.lane = lane_spec.id;
  res.altitude_ft = altitude_ft;
  res.mode = mode;
  res.seed = sc.seed;

  detail::TrafficCursor cursor(traffic);
  std::vector<detail::Uam> live;
  std::vector<FlightRecord> done;
  const int last_tick = sc.duration_s + (sc.drain ? sc.drain_limit_s : 0);
  int tick = 0;
  for (; tick < last_tick; ++tick) {
    if (tick >= sc.duration_s && live.empty()) break;
    if (tick < sc.duration_s && tick % sc.uam_interval_s == 0) {
      detail::Uam u;
      u.rec.id = lane_spec.id + "-" + std::to_string(static_cast<int>(altitude_ft)) + "-" + std::to_string(res.spawned);
      u.rec.spawn_tick = tick;
      u.rec.planned_time = planned;
      u.state = {0.0, vmax, 0.0};
      live.push_back(std::move(u));
      ++res.spawned;
    }
    const auto& active = cursor.at(tick);

    // Separation bookkeeping and encounter detection on the frozen snapshot.
    Snapshot snap;
    for (const auto& u : live) snap.uams.push_back(lane.geo_at(u.state.along));
    for (const auto& a : active) snap.aircraft.push_back(a.traj->points[a.index].pos);
    std::vector<std::vector<std::size_t>> encounters(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      auto& u = live[i];
      const EnuPoint own = lane.enu_at(u.state.along);
      for (std::size_t j = 0; j < active.size(); ++j) {
        const double h = geo::geodesic_distance(snap.uams[i], snap.aircraft[j]);
        const double v = std::abs(snap.uams[i].alt - snap.aircraft[j].alt);
        const std::string& id = active[j].traj->id;
        if (v < sc.separation.vertical) u.rec.min_separation = std::min(u.rec.min_separation, h);
        if (h <= sc.separation.horizontal && v <= sc.separation.vertical) {
          ++u.rec.los_ticks;
          if (!u.in_los[id]) {
            u.in_los[id] = true;
            ++u.rec.los_intruders;
          }
        }
        const bool enc = sc.encounter.contains(h, v);
        if (enc) encounters[i].push_back(j);
        auto it = u.tracks.find(id);
        if (enc && it == u.tracks.end()) {
          it = u.tracks.emplace(id, detail::CpaTrack{tick}).first;
        }
        if (it == u.tracks.end() || it->second.done) continue;
        auto& tr = it->second;
        if (tick - tr.first_tick >= sc.cpa_window_s) {
          tr.done = true;
          continue;
        }
        const EnuPoint other = geo::to_enu(snap.aircraft[j], lane.start());
        CpaRecord r{id, active[j].traj->kind, tick, h, v,
                    h > 0.0 && (own.east != other.east || own.north != other.north)
                        ? geo::relative_bearing(own, course, other)
                        : 0.0,
                    false};
        if (v < sc.separation.vertical && h < tr.best_close) {
          tr.best_close = h;
          tr.close = r;
        }
        if (h < tr.best_any) {
          tr.best_any = h;
          tr.any = r;
        }
      }
    }

    // Rate decisions.
    if (mode == Mode::adjusted) {
      std::map<std::size_t, std::optional<controller::Forecast>> cache;
      auto forecast = [&](std::size_t j) -> const controller::Forecast* {
        auto it = cache.find(j);
        if (it == cache.end()) {
          std::optional<controller::Forecast> f;
          try {
            predictor::PredictionSet ps = pred->predict(*active[j].traj, active[j].index);
            res.clamped_points += ps.clamped;
            f = controller::make_forecast(ps);
            ++res.predictions;
          } catch (const InsufficientHistory&) {
            ++res.missing_history;
          }
          it = cache.emplace(j, std::move(f)).first;
        }
        return it->second ? &*it->second : nullptr;
      };
      for (std::size_t i = 0; i < live.size(); ++i) {
        std::vector<controller::Intruder> in;
        for (std::size_t j : encounters[i]) in.push_back({forecast(j)});
        const controller::Decision d = controller::select_rate(lane, live[i].state, in, sc.separation);
        res.forced_brakes += d.forced_brake;
        live[i].state.a = d.rate;
      }
    } else {
      for (auto& u : live) u.state.a = 0.0;
    }

    // Advance, retiring UAMs that reach the lane end within this tick.
    std::vector<detail::Uam> next;
    next.reserve(live.size());
    for (auto& u : live) {
      const double r = lane.length() - u.state.along;
      const double d = controller::travel(u.state.v, u.state.a, 1.0);
      if (d >= r) {
        const double tf = detail::time_to_cover(u.state.v, u.state.a, r, vmax);
        u.delay += tf - r / vmax;
        u.rec.completed = true;
        u.rec.actual_time = planned + u.delay;
        u.rec.delay_proportion = u.delay / planned;
        detail::close_tracks(u);
        done.push_back(std::move(u.rec));
        continue;
      }
      u.delay += 1.0 - d / vmax;
      u.state = controller::step(u.state);
      next.push_back(std::move(u));
    }
    live = std::move(next);
  }
  res.ticks = tick;
  res.completed = static_cast<int>(done.size());
  res.active = static_cast<int>(live.size());
  for (auto& u : live) {
    u.rec.actual_time = std::numeric_limits<double>::quiet_NaN();
    detail::close_tracks(u);
    done.push_back(std::move(u.rec));
  }
  std::sort(done.begin(), done.end(), [](const FlightRecord& a, const FlightRecord& b) {
    return a.spawn_tick < b.spawn_tick;
  });
  res.flights = std::move(done);
  if (res.spawned != res.completed + res.active) throw InvariantViolation("flight conservation violated");
  return res;
}

}  // namespace uamflow::sim
