#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "uamflow/csv.hpp"
#include "uamflow/sim/sim.hpp"

namespace uamflow::sim {

/// Linearly interpolated quantile of sorted values (+inf sorts last and
/// propagates).
inline double quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ShapeError("quantile: no values");
  if (!(q >= 0.0 && q <= 1.0)) throw ShapeError("quantile: q outside [0, 1]");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double f = pos - static_cast<double>(lo);
  if (f == 0.0 || sorted[lo] == sorted[hi]) return sorted[lo];
  if (std::isinf(sorted[hi])) return sorted[hi];
  return sorted[lo] + f * (sorted[hi] - sorted[lo]);
}

struct CdfPoint {
  double value;
  double fraction;  // share of all flights at or below value
};

/// Step CDF over the distinct finite values; infinite values only enlarge
/// the denominator.
inline std::vector<CdfPoint> empirical_cdf(std::vector<double> v) {
  std::vector<CdfPoint> out;
  if (v.empty()) return out;
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) break;
    if (i + 1 < v.size() && v[i + 1] == v[i]) continue;
    out.push_back({v[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

/// True if each of the interior quantiles q = i / (n + 1), i = 1..n, of `a`
/// is at or above the same quantile of `b`.
inline bool dominates(std::vector<double> a, std::vector<double> b, int n_quantiles = 99) {
  if (a.empty() || b.empty()) throw ShapeError("dominates: empty sample");
  if (n_quantiles < 1) throw ShapeError("dominates: need at least one quantile");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  for (int i = 1; i <= n_quantiles; ++i) {
    const double q = static_cast<double>(i) / (n_quantiles + 1);
    if (quantile(a, q) < quantile(b, q)) return false;
  }
  return true;
}

inline std::vector<double> min_separations(const SimResult& r) {
  std::vector<double> v;
  for (const auto& f : r.flights) v.push_back(f.min_separation);
  return v;
}

struct ReportConfig {
  double hist_bin_m = 250.0;
  double hist_max_m = 5000.0;
  double bearing_bin_deg = 30.0;
  double range_bin_m = 500.0;
  double range_max_m = 4000.0;
  // Plausibility band for the median delay proportion of adjusted runs.
  double band_lo = 0.104;
  double band_hi = 0.136;

  void validate() const {
    if (!(hist_bin_m > 0.0 && hist_max_m > hist_bin_m && bearing_bin_deg > 0.0 && bearing_bin_deg <= 360.0 &&
          range_bin_m > 0.0 && range_max_m >= range_bin_m && band_lo <= band_hi)) {
      throw ConfigError("report: bins must be positive and the band ordered");
    }
  }
};

struct DelaySummary {
  std::size_t flights = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
};

inline DelaySummary summarize_delays(const SimResult& r) {
  std::vector<double> d;
  for (const auto& f : r.flights)
    if (f.completed) d.push_back(f.delay_proportion);
  DelaySummary s;
  s.flights = d.size();
  if (d.empty()) return s;
  std::sort(d.begin(), d.end());
  s = {d.size(), d.front(), quantile(d, 0.25), quantile(d, 0.5), quantile(d, 0.75), d.back(),
       std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size())};
  return s;
}

struct ReportBundle {
  std::string cdf, histogram, delays, cpa_polar;
  int median_outside_band = 0;  // adjusted runs whose median delay misses the band
};

namespace detail {

inline std::string fmt(double v) { return std::isfinite(v) ? csv::format_double(v) : (v > 0 ? "inf" : "nan"); }

}  // namespace detail

/// CSV tables for a set of runs, grouped by lane, altitude and mode.
inline ReportBundle build_report(std::span<const SimResult> results, const ReportConfig& cfg = {}) {
  cfg.validate();
  if (results.empty()) throw ConfigError("report: no results");
  std::map<std::tuple<std::string, double, int>, std::vector<const SimResult*>> groups;
  for (const auto& r : results) groups[{r.lane, r.altitude_ft, static_cast<int>(r.mode)}].push_back(&r);

  std::ostringstream cdf, hist, del, pol;
  csv::write_row(cdf, {"lane", "altitude_ft", "mode", "flights", "min_separation_m", "cdf"});
  csv::write_row(hist, {"lane", "altitude_ft", "mode", "bin_lo_m", "bin_hi_m", "count"});
  csv::write_row(del, {"lane", "altitude_ft", "mode", "flights", "min", "q1", "median", "q3", "max", "mean",
                       "band_lo", "band_hi", "median_in_band"});
  csv::write_row(pol, {"lane", "altitude_ft", "mode", "bearing_lo_deg", "bearing_hi_deg", "range_lo_m", "range_hi_m",
                       "count"});
  ReportBundle out;
  for (const auto& [key, runs] : groups) {
    const auto& [lane, alt, mode_i] = key;
    const std::vector<std::string> head{lane, csv::format_double(alt), to_string(static_cast<Mode>(mode_i))};
    auto row = [&](std::ostringstream& os, std::vector<std::string> tail) {
      std::vector<std::string> f = head;
      f.insert(f.end(), tail.begin(), tail.end());
      csv::write_row(os, f);
    };

    // Merge repeated runs of the same group.
    SimResult merged = *runs.front();
    for (std::size_t i = 1; i < runs.size(); ++i)
      merged.flights.insert(merged.flights.end(), runs[i]->flights.begin(), runs[i]->flights.end());

    const auto seps = min_separations(merged);
    for (const auto& p : empirical_cdf(seps)) {
      row(cdf, {std::to_string(seps.size()), csv::format_double(p.value), csv::format_double(p.fraction)});
    }

    const int nbins = static_cast<int>(std::ceil(cfg.hist_max_m / cfg.hist_bin_m));
    std::vector<long> counts(nbins + 1, 0);  // last bin: beyond range or never vertically close
    for (double s : seps) {
      const int b = std::isfinite(s) ? std::min(nbins, static_cast<int>(s / cfg.hist_bin_m)) : nbins;
      ++counts[b];
    }
    for (int b = 0; b <= nbins; ++b) {
      row(hist, {csv::format_double(b * cfg.hist_bin_m),
                 b < nbins ? csv::format_double((b + 1) * cfg.hist_bin_m) : std::string("inf"),
                 std::to_string(counts[b])});
    }

    const DelaySummary d = summarize_delays(merged);
    const bool in_band = d.flights > 0 && d.median >= cfg.band_lo && d.median <= cfg.band_hi;
    if (static_cast<Mode>(mode_i) == Mode::adjusted && !in_band) ++out.median_outside_band;
    row(del, {std::to_string(d.flights), detail::fmt(d.min), detail::fmt(d.q1), detail::fmt(d.median),
              detail::fmt(d.q3), detail::fmt(d.max), detail::fmt(d.mean), csv::format_double(cfg.band_lo),
              csv::format_double(cfg.band_hi), in_band ? "true" : "false"});

    const int nb = static_cast<int>(std::ceil(360.0 / cfg.bearing_bin_deg));
    const int nr = static_cast<int>(std::ceil(cfg.range_max_m / cfg.range_bin_m));
    std::vector<long> grid(static_cast<std::size_t>(nb) * nr, 0);
    for (const auto& f : merged.flights)
      for (const auto& c : f.cpa) {
        const int bi = std::min(nb - 1, static_cast<int>(c.bearing_deg / cfg.bearing_bin_deg));
        const int ri = std::min(nr - 1, static_cast<int>(c.range_m / cfg.range_bin_m));
        ++grid[static_cast<std::size_t>(bi) * nr + ri];
      }
    for (int bi = 0; bi < nb; ++bi)
      for (int ri = 0; ri < nr; ++ri) {
        row(pol, {csv::format_double(bi * cfg.bearing_bin_deg),
                  csv::format_double(std::min(360.0, (bi + 1) * cfg.bearing_bin_deg)),
                  csv::format_double(ri * cfg.range_bin_m),
                  ri + 1 < nr ? csv::format_double((ri + 1) * cfg.range_bin_m) : std::string("inf"),
                  std::to_string(grid[static_cast<std::size_t>(bi) * nr + ri])});
      }
  }
  out.cdf = cdf.str();
  out.histogram = hist.str();
  out.delays = del.str();
  out.cpa_polar = pol.str();
  return out;
}

}  // namespace uamflow::sim
