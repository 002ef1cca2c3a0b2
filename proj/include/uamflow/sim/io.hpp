#pragma once

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <nlohmann/json.hpp>
#include <string>

#include "uamflow/sim/sim.hpp"

namespace uamflow::sim {

using nlohmann::json;

namespace detail {

inline void allow_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    bool ok = false;
    for (const char* a : keys) ok |= k == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

inline GeoPoint lane_point(const json& lane, const char* name, const GeoPoint& origin) {
  const std::string enu = std::string(name) + "_enu_m";
  if (lane.contains(name)) {
    const auto& p = lane.at(name);
    return {p.at("lon").get<double>(), p.at("lat").get<double>(), 0.0};
  }
  if (lane.contains(enu)) {
    const auto& p = lane.at(enu);
    if (!p.is_array() || p.size() != 2) throw ConfigError("lane: " + enu + " must be [east, north]");
    return geo::from_enu({p[0].get<double>(), p[1].get<double>(), 0.0}, origin);
  }
  throw ConfigError(std::string("lane: missing '") + name + "' or '" + enu + "'");
}

// Non-finite doubles are written as null.
inline json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double number_or(const json& j, const char* key, double missing) {
  if (!j.contains(key) || j.at(key).is_null()) return missing;
  return j.at(key).get<double>();
}

}  // namespace detail

inline Scenario scenario_from_json(const json& j) {
  try {
    detail::allow_keys(j,
                       {"origin", "duration_s", "uam_interval_s", "drain", "drain_limit_s", "seed", "lanes", "traffic",
                        "separation", "encounter", "cpa_window_s", "predictor", "description"},
                       "scenario");
    Scenario sc;
    if (j.contains("origin")) sc.origin = trajdata::geo_from_json(j.at("origin"));
    geo::check_origin(sc.origin);
    sc.duration_s = j.value("duration_s", sc.duration_s);
    sc.uam_interval_s = j.value("uam_interval_s", sc.uam_interval_s);
    sc.drain = j.value("drain", sc.drain);
    sc.drain_limit_s = j.value("drain_limit_s", sc.drain_limit_s);
    sc.seed = j.value("seed", sc.seed);
    sc.cpa_window_s = j.value("cpa_window_s", sc.cpa_window_s);
    if (j.contains("lanes")) {
      for (const auto& l : j.at("lanes")) {
        detail::allow_keys(l, {"id", "start", "end", "start_enu_m", "end_enu_m", "altitudes_ft"}, "lane");
        LaneSpec ls;
        ls.id = l.at("id").get<std::string>();
        ls.start = detail::lane_point(l, "start", sc.origin);
        ls.end = detail::lane_point(l, "end", sc.origin);
        if (l.contains("altitudes_ft")) ls.altitudes_ft = l.at("altitudes_ft").get<std::vector<double>>();
        sc.lanes.push_back(std::move(ls));
      }
    } else {
      sc.lanes.push_back(default_lane(sc.origin));
    }
    if (j.contains("traffic")) {
      const auto& t = j.at("traffic");
      detail::allow_keys(t, {"source", "csv", "start_time", "generator"}, "traffic");
      const std::string src = t.value("source", std::string("synthetic"));
      if (src == "synthetic") {
        sc.source = TrafficSource::synthetic;
        if (t.contains("generator")) sc.generator = generator_from_json(t.at("generator"));
      } else if (src == "replay") {
        sc.source = TrafficSource::replay;
        sc.replay_csv = t.at("csv").get<std::string>();
        if (t.contains("start_time")) sc.replay_start = t.at("start_time").get<double>();
      } else {
        throw ConfigError("traffic: unknown source '" + src + "' (expected synthetic or replay)");
      }
    }
    if (j.contains("separation")) {
      const auto& s = j.at("separation");
      detail::allow_keys(s, {"horizontal_m", "vertical_m"}, "separation");
      sc.separation.horizontal = s.value("horizontal_m", sc.separation.horizontal);
      sc.separation.vertical = s.value("vertical_m", sc.separation.vertical);
    }
    if (j.contains("encounter")) {
      const auto& e = j.at("encounter");
      detail::allow_keys(e, {"horizontal_m", "vertical_m"}, "encounter");
      sc.encounter.horizontal = e.value("horizontal_m", sc.encounter.horizontal);
      sc.encounter.vertical = e.value("vertical_m", sc.encounter.vertical);
    }
    if (j.contains("predictor")) {
      const auto& p = j.at("predictor");
      detail::allow_keys(p, {"samples", "sanity_half_width_m", "sanity_min_up_m", "sanity_max_up_m"}, "predictor");
      sc.samples = p.value("samples", sc.samples);
      sc.sanity.half_width = p.value("sanity_half_width_m", sc.sanity.half_width);
      sc.sanity.min_up = p.value("sanity_min_up_m", sc.sanity.min_up);
      sc.sanity.max_up = p.value("sanity_max_up_m", sc.sanity.max_up);
    }
    sc.validate();
    return sc;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario schema violation: ") + e.what());
  }
}

inline json to_json(const Scenario& sc) {
  json lanes = json::array();
  for (const auto& l : sc.lanes) {
    lanes.push_back({{"id", l.id},
                     {"start", {{"lon", l.start.lon}, {"lat", l.start.lat}}},
                     {"end", {{"lon", l.end.lon}, {"lat", l.end.lat}}},
                     {"altitudes_ft", l.altitudes_ft}});
  }
  json traffic;
  if (sc.source == TrafficSource::synthetic) {
    traffic = {{"source", "synthetic"}, {"generator", to_json(sc.generator)}};
  } else {
    traffic = {{"source", "replay"}, {"csv", sc.replay_csv}};
    if (sc.replay_start) traffic["start_time"] = *sc.replay_start;
  }
  return {{"origin", trajdata::to_json(sc.origin)},
          {"duration_s", sc.duration_s},
          {"uam_interval_s", sc.uam_interval_s},
          {"drain", sc.drain},
          {"drain_limit_s", sc.drain_limit_s},
          {"seed", sc.seed},
          {"lanes", lanes},
          {"traffic", traffic},
          {"separation", {{"horizontal_m", sc.separation.horizontal}, {"vertical_m", sc.separation.vertical}}},
          {"encounter", {{"horizontal_m", sc.encounter.horizontal}, {"vertical_m", sc.encounter.vertical}}},
          {"cpa_window_s", sc.cpa_window_s},
          {"predictor",
           {{"samples", sc.samples},
            {"sanity_half_width_m", sc.sanity.half_width},
            {"sanity_min_up_m", sc.sanity.min_up},
            {"sanity_max_up_m", sc.sanity.max_up}}}};
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("scenario '" + path + "' is not valid JSON: " + e.what());
  }
  return scenario_from_json(j);
}

// ---------------------------------------------------------------------------
// Results

inline json to_json(const SimResult& r) {
  json flights = json::array();
  for (const auto& f : r.flights) {
    json cpa = json::array();
    for (const auto& c : f.cpa) {
      cpa.push_back({{"intruder", c.intruder},
                     {"intruder_kind", trajdata::to_string(c.intruder_kind)},
                     {"tick", c.tick},
                     {"range_m", c.range_m},
                     {"vertical_m", c.vertical_m},
                     {"bearing_deg", c.bearing_deg},
                     {"vert_clear", c.vert_clear}});
    }
    flights.push_back({{"id", f.id},
                       {"spawn_tick", f.spawn_tick},
                       {"completed", f.completed},
                       {"planned_time_s", f.planned_time},
                       {"actual_time_s", detail::number(f.actual_time)},
                       {"delay_proportion", f.delay_proportion},
                       {"min_separation_m", detail::number(f.min_separation)},
                       {"los_ticks", f.los_ticks},
                       {"los_intruders", f.los_intruders},
                       {"cpa", cpa}});
  }
  return {{"lane", r.lane},
          {"altitude_ft", r.altitude_ft},
          {"mode", to_string(r.mode)},
          {"seed", r.seed},
          {"ticks", r.ticks},
          {"spawned", r.spawned},
          {"completed", r.completed},
          {"active", r.active},
          {"los_events", r.los_events()},
          {"predictions", r.predictions},
          {"missing_history", r.missing_history},
          {"clamped_points", r.clamped_points},
          {"forced_brakes", r.forced_brakes},
          {"flights", flights}};
}

inline SimResult result_from_json(const json& j) {
  try {
    SimResult r;
    r.lane = j.at("lane").get<std::string>();
    r.altitude_ft = j.at("altitude_ft").get<double>();
    r.mode = parse_mode(j.at("mode").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.ticks = j.at("ticks").get<int>();
    r.spawned = j.at("spawned").get<int>();
    r.completed = j.at("completed").get<int>();
    r.active = j.at("active").get<int>();
    r.predictions = j.value("predictions", 0L);
    r.missing_history = j.value("missing_history", 0L);
    r.clamped_points = j.value("clamped_points", 0L);
    r.forced_brakes = j.value("forced_brakes", 0L);
    for (const auto& f : j.at("flights")) {
      FlightRecord fr;
      fr.id = f.at("id").get<std::string>();
      fr.spawn_tick = f.at("spawn_tick").get<int>();
      fr.completed = f.at("completed").get<bool>();
      fr.planned_time = f.at("planned_time_s").get<double>();
      fr.actual_time = detail::number_or(f, "actual_time_s", std::numeric_limits<double>::quiet_NaN());
      fr.delay_proportion = f.at("delay_proportion").get<double>();
      fr.min_separation = detail::number_or(f, "min_separation_m", std::numeric_limits<double>::infinity());
      fr.los_ticks = f.at("los_ticks").get<int>();
      fr.los_intruders = f.at("los_intruders").get<int>();
      for (const auto& c : f.at("cpa")) {
        fr.cpa.push_back({c.at("intruder").get<std::string>(),
                          trajdata::parse_kind(c.at("intruder_kind").get<std::string>()), c.at("tick").get<int>(),
                          c.at("range_m").get<double>(), c.at("vertical_m").get<double>(),
                          c.at("bearing_deg").get<double>(), c.at("vert_clear").get<bool>()});
      }
      r.flights.push_back(std::move(fr));
    }
    return r;
  } catch (const json::exception& e) {
    throw MalformedInput(std::string("result schema violation: ") + e.what());
  }
}

}  // namespace uamflow::sim
