#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "uamflow/csv.hpp"
#include "uamflow/errors.hpp"
#include "uamflow/geo.hpp"

namespace uamflow::evalkit {

using geo::EnuPoint;
using Path = std::vector<EnuPoint>;

inline double distance3(const EnuPoint& a, const EnuPoint& b) {
  const double de = a.east - b.east, dn = a.north - b.north, du = a.up - b.up;
  return std::sqrt(de * de + dn * dn + du * du);
}

/// Mean per-step Euclidean distance.
inline double ade(std::span<const EnuPoint> pred, std::span<const EnuPoint> truth) {
  if (pred.empty() || pred.size() != truth.size()) throw ShapeError("ade: length mismatch");
  double sum = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) sum += distance3(pred[t], truth[t]);
  return sum / static_cast<double>(pred.size());
}

inline double fde(std::span<const EnuPoint> pred, std::span<const EnuPoint> truth) {
  if (pred.empty() || pred.size() != truth.size()) throw ShapeError("fde: length mismatch");
  return distance3(pred.back(), truth.back());
}

inline double min_ade(std::span<const Path> samples, std::span<const EnuPoint> truth) {
  if (samples.empty()) throw ShapeError("min_ade: no samples");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) best = std::min(best, ade(s, truth));
  return best;
}

inline double min_fde(std::span<const Path> samples, std::span<const EnuPoint> truth) {
  if (samples.empty()) throw ShapeError("min_fde: no samples");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& s : samples) best = std::min(best, fde(s, truth));
  return best;
}

struct MetricRow {
  std::string model;         // e.g. "GRU+CNF"
  std::string input_config;  // abs, dev, abs+dev
  double min_ade_m = 0.0;
  double min_fde_m = 0.0;
  int k = 1;
  std::size_t pairs = 0;
};

inline void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows) {
  csv::write_row(out, {"model", "input_config", "minADE_m", "minFDE_m"});
  for (const auto& r : rows) {
    csv::write_row(out, {r.model, r.input_config, csv::format_double(r.min_ade_m), csv::format_double(r.min_fde_m)});
  }
}

}  // namespace uamflow::evalkit
