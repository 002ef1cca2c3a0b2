#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uamflow/csv.hpp"
#include "uamflow/errors.hpp"
#include "uamflow/geo.hpp"

namespace uamflow::trajdata {

using geo::EnuPoint;
using geo::GeoPoint;

inline constexpr int kDefaultHistory = 60;
inline constexpr int kDefaultFuture = 60;
inline constexpr double kGroundAltitude = 150.0;
inline constexpr int kAirborneFractionTenths = 9;  // keep iff >= 9/10 airborne
// Floor applied to every standard deviation computed from data.
inline constexpr double kStdFloor = 1.0;

struct TrackPoint {
  double t = 0.0;  // seconds
  GeoPoint pos;
};

enum class Kind { arrival, departure, uam };

inline std::string to_string(Kind k) {
  switch (k) {
    case Kind::arrival: return "arrival";
    case Kind::departure: return "departure";
    case Kind::uam: return "uam";
  }
  return "?";
}

inline Kind parse_kind(const std::string& s) {
  if (s == "arrival") return Kind::arrival;
  if (s == "departure") return Kind::departure;
  if (s == "uam") return Kind::uam;
  throw MalformedInput("unknown trajectory kind '" + s + "'");
}

struct Trajectory {
  std::string id;
  Kind kind = Kind::arrival;
  std::vector<TrackPoint> points;
};

struct WindowSpec {
  int history = kDefaultHistory;
  int future = kDefaultFuture;
  int length() const { return history + future; }
};

// A view onto `history + future` contiguous points of a trajectory. The
// trajectory must outlive the pair.
struct WindowPair {
  const Trajectory* traj = nullptr;
  std::size_t start = 0;
  WindowSpec spec;

  std::span<const TrackPoint> X() const {
    return {traj->points.data() + start, static_cast<std::size_t>(spec.history)};
  }
  std::span<const TrackPoint> Y() const {
    return {traj->points.data() + start + spec.history,
            static_cast<std::size_t>(spec.future)};
  }
};

enum class InputConfig { abs, dev, abs_dev };

inline std::string to_string(InputConfig c) {
  switch (c) {
    case InputConfig::abs: return "abs";
    case InputConfig::dev: return "dev";
    case InputConfig::abs_dev: return "abs+dev";
  }
  return "?";
}

inline InputConfig parse_input_config(const std::string& s) {
  if (s == "abs") return InputConfig::abs;
  if (s == "dev") return InputConfig::dev;
  if (s == "abs+dev" || s == "abs_dev") return InputConfig::abs_dev;
  throw ConfigError("unknown input config '" + s + "' (expected abs, dev, abs+dev)");
}

inline int feature_width(InputConfig c) { return c == InputConfig::abs_dev ? 6 : 3; }

struct DatasetSplit {
  std::vector<Trajectory> train, val, test;
};

/// Linear interpolation of a raw track onto the integer-second grid covering
/// its time range.
inline std::vector<TrackPoint> resample_1hz(std::span<const TrackPoint> raw) {
  if (raw.size() < 2) throw MalformedInput("resample: need at least two points");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i].t)) throw MalformedInput("resample: non-finite timestamp");
    geo::validate(raw[i].pos);
    if (i > 0 && raw[i].t <= raw[i - 1].t) {
      throw MalformedInput(raw[i].t == raw[i - 1].t
                               ? "resample: duplicate timestamp"
                               : "resample: timestamps not increasing");
    }
  }
  const double t0 = std::ceil(raw.front().t);
  const double t1 = std::floor(raw.back().t);
  std::vector<TrackPoint> out;
  if (t1 < t0) return out;
  out.reserve(static_cast<std::size_t>(t1 - t0) + 1);
  std::size_t seg = 0;
  for (double t = t0; t <= t1; t += 1.0) {
    while (seg + 2 < raw.size() && raw[seg + 1].t < t) ++seg;
    const TrackPoint& a = raw[seg];
    const TrackPoint& b = raw[seg + 1];
    if (t == a.t) {
      out.push_back({t, a.pos});
      continue;
    }
    if (t == b.t) {
      out.push_back({t, b.pos});
      continue;
    }
    const double w = (t - a.t) / (b.t - a.t);
    out.push_back({t,
                   {a.pos.lon + w * (b.pos.lon - a.pos.lon),
                    a.pos.lat + w * (b.pos.lat - a.pos.lat),
                    a.pos.alt + w * (b.pos.alt - a.pos.alt)}});
  }
  return out;
}

inline Trajectory resample_1hz(const Trajectory& raw) {
  Trajectory out{raw.id, raw.kind, resample_1hz(std::span<const TrackPoint>(raw.points))};
  if (out.points.size() < 2) {
    throw MalformedInput("resample: trajectory '" + raw.id + "' spans less than 1 s");
  }
  return out;
}

/// Seeded 7:1:2 partition. Input order does not matter: trajectories are
/// sorted by id before shuffling.
inline DatasetSplit split_dataset(std::vector<Trajectory> trajs, std::uint64_t seed) {
  if (trajs.size() < 10) throw MalformedInput("split: need at least 10 trajectories");
  std::sort(trajs.begin(), trajs.end(),
            [](const Trajectory& a, const Trajectory& b) { return a.id < b.id; });
  std::mt19937_64 rng(seed);
  std::shuffle(trajs.begin(), trajs.end(), rng);
  const std::size_t n = trajs.size();
  const std::size_t n_train = n * 7 / 10;
  const std::size_t n_val = n / 10;
  DatasetSplit s;
  auto it = std::make_move_iterator(trajs.begin());
  s.train.assign(it, it + n_train);
  s.val.assign(it + n_train, it + n_train + n_val);
  s.test.assign(it + n_train + n_val, std::make_move_iterator(trajs.end()));
  return s;
}

inline std::vector<WindowPair> make_windows(const Trajectory& traj, WindowSpec spec = {}) {
  std::vector<WindowPair> out;
  const std::size_t len = static_cast<std::size_t>(spec.length());
  if (traj.points.size() < len) return out;
  out.reserve(traj.points.size() - len + 1);
  for (std::size_t s = 0; s + len <= traj.points.size(); ++s) out.push_back({&traj, s, spec});
  return out;
}

inline std::vector<WindowPair> make_windows(std::span<const Trajectory> trajs,
                                            WindowSpec spec = {}) {
  std::vector<WindowPair> out;
  for (const auto& t : trajs) {
    auto w = make_windows(t, spec);
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

inline bool mostly_airborne(const WindowPair& p, double threshold = kGroundAltitude) {
  int above = 0;
  for (const auto& q : p.X()) above += q.pos.alt > threshold;
  for (const auto& q : p.Y()) above += q.pos.alt > threshold;
  return above * 10 >= kAirborneFractionTenths * p.spec.length();
}

inline std::vector<WindowPair> altitude_filter(std::span<const WindowPair> pairs,
                                               double threshold = kGroundAltitude) {
  std::vector<WindowPair> out;
  for (const auto& p : pairs) {
    if (mostly_airborne(p, threshold)) out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

struct NormStats {
  GeoPoint origin;  // ENU frame for every positional channel
  std::array<double, 3> pos_mean{0, 0, 0}, pos_std{1, 1, 1};
  std::array<double, 3> dev_mean{0, 0, 0}, dev_std{1, 1, 1};
  // Targets are future offsets from the last observed point, one
  // (mean, std) per (step, axis), flattened time-major.
  std::vector<double> target_mean, target_std;

  int future() const { return static_cast<int>(target_mean.size() / 3); }

  static NormStats identity(GeoPoint origin, int future) {
    NormStats s;
    s.origin = origin;
    s.target_mean.assign(3 * future, 0.0);
    s.target_std.assign(3 * future, 1.0);
    return s;
  }
};

inline std::array<double, 3> as_array(const EnuPoint& e) { return {e.east, e.north, e.up}; }

inline std::vector<EnuPoint> to_enu(std::span<const TrackPoint> pts, const GeoPoint& origin) {
  std::vector<EnuPoint> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(geo::to_enu(p.pos, origin));
  return out;
}

inline void check_std(const std::array<double, 3>& s, const char* what) {
  for (double v : s) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw DegenerateNormalization(std::string("zero or invalid std in ") + what);
    }
  }
}

inline void check_stats(const NormStats& st) {
  check_std(st.pos_std, "position channels");
  check_std(st.dev_std, "displacement channels");
  if (st.target_std.size() != st.target_mean.size() || st.target_std.empty() ||
      st.target_std.size() % 3 != 0) {
    throw DegenerateNormalization("target statistics have inconsistent size");
  }
  for (double v : st.target_std) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw DegenerateNormalization("zero or invalid std in target channels");
    }
  }
}

/// Per-channel mean/std over the given (training) pairs.
inline NormStats compute_stats(std::span<const WindowPair> pairs, const GeoPoint& origin) {
  if (pairs.empty()) throw MalformedInput("compute_stats: no window pairs");
  const int T = pairs.front().spec.future;
  NormStats st;
  st.origin = origin;
  std::array<double, 3> ps{}, pss{}, ds{}, dss{};
  std::vector<double> ts(3 * T, 0.0), tss(3 * T, 0.0);
  double n_pos = 0, n_dev = 0;
  for (const auto& p : pairs) {
    if (p.spec.future != T) throw ShapeError("compute_stats: mixed future lengths");
    auto xs = to_enu(p.X(), origin);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      auto a = as_array(xs[i]);
      for (int k = 0; k < 3; ++k) {
        ps[k] += a[k];
        pss[k] += a[k] * a[k];
      }
      n_pos += 1;
      if (i > 0) {
        auto b = as_array(xs[i - 1]);
        for (int k = 0; k < 3; ++k) {
          const double d = a[k] - b[k];
          ds[k] += d;
          dss[k] += d * d;
        }
        n_dev += 1;
      }
    }
    const auto anchor = as_array(xs.back());
    auto ys = to_enu(p.Y(), origin);
    for (int t = 0; t < T; ++t) {
      auto a = as_array(ys[t]);
      for (int k = 0; k < 3; ++k) {
        const double off = a[k] - anchor[k];
        ts[3 * t + k] += off;
        tss[3 * t + k] += off * off;
      }
    }
  }
  auto finish = [](double sum, double sq, double n, double& mean, double& sd) {
    mean = n > 0 ? sum / n : 0.0;
    const double var = n > 0 ? std::max(0.0, sq / n - mean * mean) : 0.0;
    sd = std::max(std::sqrt(var), kStdFloor);
  };
  for (int k = 0; k < 3; ++k) {
    finish(ps[k], pss[k], n_pos, st.pos_mean[k], st.pos_std[k]);
    finish(ds[k], dss[k], n_dev, st.dev_mean[k], st.dev_std[k]);
  }
  st.target_mean.resize(3 * T);
  st.target_std.resize(3 * T);
  const double n = static_cast<double>(pairs.size());
  for (int i = 0; i < 3 * T; ++i) finish(ts[i], tss[i], n, st.target_mean[i], st.target_std[i]);
  return st;
}

/// Encoder features from ENU positions: rows are time steps, columns are
/// channels ([abs | dev] depending on the config), all z-scored.
inline Eigen::MatrixXd build_inputs_enu(std::span<const EnuPoint> xs, InputConfig cfg,
                                        const NormStats& stats) {
  check_std(stats.pos_std, "position channels");
  check_std(stats.dev_std, "displacement channels");
  const int H = static_cast<int>(xs.size());
  Eigen::MatrixXd f(H, feature_width(cfg));
  for (int i = 0; i < H; ++i) {
    const auto a = as_array(xs[i]);
    int col = 0;
    if (cfg != InputConfig::dev) {
      for (int k = 0; k < 3; ++k) f(i, col++) = (a[k] - stats.pos_mean[k]) / stats.pos_std[k];
    }
    if (cfg != InputConfig::abs) {
      for (int k = 0; k < 3; ++k) {
        const double d = i == 0 ? 0.0 : a[k] - as_array(xs[i - 1])[k];
        f(i, col++) = (d - stats.dev_mean[k]) / stats.dev_std[k];
      }
    }
  }
  return f;
}

inline Eigen::MatrixXd build_inputs(std::span<const TrackPoint> X, InputConfig cfg,
                                    const NormStats& stats) {
  auto xs = to_enu(X, stats.origin);
  return build_inputs_enu(xs, cfg, stats);
}

/// Inverse of the abs channel normalization.
inline EnuPoint denormalize_position(const Eigen::Ref<const Eigen::VectorXd>& f,
                                     const NormStats& stats) {
  return {f(0) * stats.pos_std[0] + stats.pos_mean[0], f(1) * stats.pos_std[1] + stats.pos_mean[1],
          f(2) * stats.pos_std[2] + stats.pos_mean[2]};
}

/// Flattened (time-major) normalized future offsets relative to `anchor`.
inline Eigen::VectorXd normalize_future(std::span<const EnuPoint> ys, const EnuPoint& anchor,
                                        const NormStats& stats) {
  const int T = static_cast<int>(ys.size());
  if (3 * T != static_cast<int>(stats.target_mean.size())) {
    throw ShapeError("normalize_future: horizon does not match statistics");
  }
  const auto an = as_array(anchor);
  Eigen::VectorXd v(3 * T);
  for (int t = 0; t < T; ++t) {
    const auto a = as_array(ys[t]);
    for (int k = 0; k < 3; ++k) {
      const int i = 3 * t + k;
      v(i) = (a[k] - an[k] - stats.target_mean[i]) / stats.target_std[i];
    }
  }
  return v;
}

inline std::vector<EnuPoint> denormalize_future(const Eigen::Ref<const Eigen::VectorXd>& v,
                                                const EnuPoint& anchor, const NormStats& stats) {
  const int D = static_cast<int>(v.size());
  if (D != static_cast<int>(stats.target_mean.size())) {
    throw ShapeError("denormalize_future: dimension does not match statistics");
  }
  std::vector<EnuPoint> out(D / 3);
  for (int t = 0; t < D / 3; ++t) {
    double c[3];
    for (int k = 0; k < 3; ++k) {
      const int i = 3 * t + k;
      c[k] = v(i) * stats.target_std[i] + stats.target_mean[i];
    }
    out[t] = {anchor.east + c[0], anchor.north + c[1], anchor.up + c[2]};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence

inline std::vector<Trajectory> read_csv(std::istream& in) {
  auto rows = csv::parse(in);
  if (rows.empty()) throw MalformedInput("trajectory csv: empty file");
  const std::vector<std::string> header{"id", "kind", "t", "lon", "lat", "alt_m"};
  if (rows.front() != header) {
    throw MalformedInput("trajectory csv: expected header id,kind,t,lon,lat,alt_m");
  }
  std::map<std::string, Trajectory> by_id;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != 6) {
      throw MalformedInput("trajectory csv: row " + std::to_string(r + 1) + " has " +
                           std::to_string(row.size()) + " fields");
    }
    auto [it, fresh] = by_id.try_emplace(row[0]);
    Trajectory& tr = it->second;
    const Kind k = parse_kind(row[1]);
    if (fresh) {
      tr.id = row[0];
      tr.kind = k;
    } else if (tr.kind != k) {
      throw MalformedInput("trajectory csv: inconsistent kind for id '" + row[0] + "'");
    }
    TrackPoint p{csv::to_double(row[2], "t"),
                 {csv::to_double(row[3], "lon"), csv::to_double(row[4], "lat"),
                  csv::to_double(row[5], "alt_m")}};
    geo::validate(p.pos);
    tr.points.push_back(p);
  }
  std::vector<Trajectory> out;
  out.reserve(by_id.size());
  for (auto& [id, tr] : by_id) {
    std::stable_sort(tr.points.begin(), tr.points.end(),
                     [](const TrackPoint& a, const TrackPoint& b) { return a.t < b.t; });
    out.push_back(std::move(tr));
  }
  return out;
}

inline std::vector<Trajectory> read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MalformedInput("cannot open trajectory csv '" + path + "'");
  return read_csv(in);
}

inline void write_csv(std::ostream& out, std::span<const Trajectory> trajs) {
  csv::write_row(out, {"id", "kind", "t", "lon", "lat", "alt_m"});
  for (const auto& tr : trajs) {
    for (const auto& p : tr.points) {
      csv::write_row(out, {tr.id, to_string(tr.kind), csv::format_double(p.t),
                           csv::format_double(p.pos.lon), csv::format_double(p.pos.lat),
                           csv::format_double(p.pos.alt)});
    }
  }
}

inline nlohmann::json to_json(const GeoPoint& g) {
  return {{"lon", g.lon}, {"lat", g.lat}, {"alt", g.alt}};
}

inline GeoPoint geo_from_json(const nlohmann::json& j) {
  GeoPoint g{j.at("lon").get<double>(), j.at("lat").get<double>(), j.value("alt", 0.0)};
  geo::validate(g);
  return g;
}

inline nlohmann::json to_json(const NormStats& s) {
  return {{"origin", to_json(s.origin)},       {"pos_mean", s.pos_mean},
          {"pos_std", s.pos_std},              {"dev_mean", s.dev_mean},
          {"dev_std", s.dev_std},              {"target_mean", s.target_mean},
          {"target_std", s.target_std}};
}

inline NormStats stats_from_json(const nlohmann::json& j) {
  NormStats s;
  s.origin = geo_from_json(j.at("origin"));
  s.pos_mean = j.at("pos_mean").get<std::array<double, 3>>();
  s.pos_std = j.at("pos_std").get<std::array<double, 3>>();
  s.dev_mean = j.at("dev_mean").get<std::array<double, 3>>();
  s.dev_std = j.at("dev_std").get<std::array<double, 3>>();
  s.target_mean = j.at("target_mean").get<std::vector<double>>();
  s.target_std = j.at("target_std").get<std::vector<double>>();
  check_stats(s);
  return s;
}

inline nlohmann::json split_to_json(const DatasetSplit& s, std::uint64_t seed) {
  auto ids = [](const std::vector<Trajectory>& v) {
    std::vector<std::string> out;
    for (const auto& t : v) out.push_back(t.id);
    return out;
  };
  return {{"seed", seed}, {"train", ids(s.train)}, {"val", ids(s.val)}, {"test", ids(s.test)}};
}

/// Rebuild a split from its id lists; ids missing from `pool` are an error.
inline DatasetSplit split_from_json(const nlohmann::json& j, std::span<const Trajectory> pool) {
  std::map<std::string, const Trajectory*> by_id;
  for (const auto& t : pool) by_id[t.id] = &t;
  auto pick = [&](const char* key) {
    std::vector<Trajectory> out;
    for (const auto& id : j.at(key).get<std::vector<std::string>>()) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw MalformedInput("split references unknown id '" + id + "'");
      out.push_back(*it->second);
    }
    return out;
  };
  return {pick("train"), pick("val"), pick("test")};
}

}  // namespace uamflow::trajdata
