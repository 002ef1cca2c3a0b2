#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uamflow/errors.hpp"
#include "uamflow/evalkit/metrics.hpp"
#include "uamflow/model.hpp"
#include "uamflow/rng.hpp"
#include "uamflow/trajdata.hpp"

namespace uamflow::predictor {

using evalkit::Path;
using geo::EnuPoint;
using geo::GeoPoint;
using trajdata::TrackPoint;
using trajdata::Trajectory;

inline constexpr int kDefaultSamples = 100;
inline constexpr double kWeightTolerance = 1e-9;

/// k sampled futures of one aircraft, issued at time t. Points are in the
/// ENU frame anchored at `origin`.
struct PredictionSet {
  std::string id;
  double t = 0.0;
  GeoPoint origin;
  std::vector<Path> samples;
  std::vector<double> weights;
  int clamped = 0;  // points pulled back into the sanity box

  int k() const { return static_cast<int>(samples.size()); }
  int horizon() const { return samples.empty() ? 0 : static_cast<int>(samples.front().size()); }

  void validate() const {
    if (samples.empty() || weights.size() != samples.size()) {
      throw InvariantViolation("prediction set: sample/weight count mismatch");
    }
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw InvariantViolation("prediction set: negative or NaN weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > kWeightTolerance) {
      throw InvariantViolation("prediction set: weights sum to " + std::to_string(sum));
    }
    for (const auto& s : samples) {
      if (static_cast<int>(s.size()) != horizon()) throw InvariantViolation("prediction set: ragged samples");
    }
  }
};

/// w_i = exp(l_i - max l) / sum_j exp(l_j - max l).
inline std::vector<double> normalized_weights(std::span<const double> log_probs) {
  if (log_probs.empty()) throw ShapeError("normalized_weights: no samples");
  const double mx = *std::max_element(log_probs.begin(), log_probs.end());
  if (!std::isfinite(mx)) throw NumericOverflow("normalized_weights: non-finite log density");
  std::vector<double> w(log_probs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) sum += w[i] = std::exp(log_probs[i] - mx);
  for (double& v : w) v /= sum;
  return w;
}

/// Points outside the box are clamped back onto it.
struct SanityBox {
  double half_width = 100'000.0;  // meters east/north of the frame origin
  double min_up = -500.0;
  double max_up = 15'000.0;

  bool clamp(EnuPoint& p) const {
    EnuPoint q{std::clamp(p.east, -half_width, half_width), std::clamp(p.north, -half_width, half_width),
               std::clamp(p.up, min_up, max_up)};
    const bool changed = q.east != p.east || q.north != p.north || q.up != p.up;
    p = q;
    return changed;
  }
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual int horizon() const = 0;
  /// Forecast for the aircraft whose current position is traj.points[now].
  virtual PredictionSet predict(const Trajectory& traj, std::size_t now) const = 0;
};

inline std::uint64_t stream_seed(std::uint64_t master, const std::string& id, double t) {
  return derive_seed(master, fnv1a64(id), static_cast<std::uint64_t>(static_cast<std::int64_t>(std::llround(t))));
}

/// Samples the conditional flow on the last H seconds of history.
class FlowPredictor final : public Predictor {
 public:
  FlowPredictor(Model model, std::uint64_t seed, int k = kDefaultSamples, SanityBox box = {})
      : model_(std::move(model)), seed_(seed), k_(k), box_(box) {
    if (!model_.is_flow()) throw ConfigError("flow predictor needs a flow checkpoint");
    if (k_ < 1) throw ConfigError("flow predictor: k must be positive");
  }

  int horizon() const override { return model_.config().window.future; }
  int history() const { return model_.config().window.history; }
  const Model& model() const { return model_; }

  PredictionSet predict(const Trajectory& traj, std::size_t now) const override {
    const auto H = static_cast<std::size_t>(history());
    if (now >= traj.points.size()) throw ShapeError("predict: index past end of track");
    if (now + 1 < H) {
      throw InsufficientHistory("aircraft '" + traj.id + "' has " + std::to_string(now + 1) + " s of history, need " +
                                std::to_string(H));
    }
    std::span<const TrackPoint> X(traj.points.data() + (now + 1 - H), H);
    for (std::size_t i = 1; i < H; ++i) {
      if (X[i].t - X[i - 1].t != 1.0) throw InsufficientHistory("aircraft '" + traj.id + "' history is not 1 Hz");
    }
    const Observation obs = model_.observe(X);
    const VectorXd h = model_.condition(obs);
    const double t = traj.points[now].t;
    std::mt19937_64 rng(stream_seed(seed_, traj.id, t));
    auto draws = model_.flow().sample(h, k_, rng);

    PredictionSet ps;
    ps.id = traj.id;
    ps.t = t;
    ps.origin = model_.stats().origin;
    ps.samples.reserve(k_);
    std::vector<double> lp(k_);
    for (int i = 0; i < k_; ++i) {
      Path p = trajdata::denormalize_future(draws[i].value, obs.anchor, model_.stats());
      for (auto& q : p) ps.clamped += box_.clamp(q);
      ps.samples.push_back(std::move(p));
      lp[i] = draws[i].log_prob;
    }
    ps.weights = normalized_weights(lp);
    return ps;
  }

 private:
  Model model_;
  std::uint64_t seed_;
  int k_;
  SanityBox box_;
};

/// Test stub: the aircraft's own scripted future is sample 0; the remaining
/// samples are copies, optionally displaced by a constant Gaussian offset.
/// Futures running past the end of the track hold the last point.
class TruthInSamplesPredictor final : public Predictor {
 public:
  TruthInSamplesPredictor(GeoPoint origin, int horizon = trajdata::kDefaultFuture, int k = kDefaultSamples,
                          double jitter_m = 0.0, std::uint64_t seed = 0)
      : origin_(origin), horizon_(horizon), k_(k), jitter_(jitter_m), seed_(seed) {
    if (horizon_ < 1 || k_ < 1 || jitter_ < 0.0) throw ConfigError("truth predictor: bad parameters");
  }

  int horizon() const override { return horizon_; }

  PredictionSet predict(const Trajectory& traj, std::size_t now) const override {
    if (now >= traj.points.size()) throw ShapeError("predict: index past end of track");
    Path truth(horizon_);
    for (int tau = 1; tau <= horizon_; ++tau) {
      const std::size_t i = std::min(now + static_cast<std::size_t>(tau), traj.points.size() - 1);
      truth[tau - 1] = geo::to_enu(traj.points[i].pos, origin_);
    }
    PredictionSet ps;
    ps.id = traj.id;
    ps.t = traj.points[now].t;
    ps.origin = origin_;
    ps.samples.assign(k_, truth);
    if (jitter_ > 0.0) {
      std::mt19937_64 rng(stream_seed(seed_, traj.id, ps.t));
      std::normal_distribution<double> n(0.0, jitter_);
      for (int i = 1; i < k_; ++i) {
        const double de = n(rng), dn = n(rng);
        for (auto& q : ps.samples[i]) {
          q.east += de;
          q.north += dn;
        }
      }
    }
    ps.weights.assign(k_, 1.0 / k_);
    return ps;
  }

 private:
  GeoPoint origin_;
  int horizon_, k_;
  double jitter_;
  std::uint64_t seed_;
};

}  // namespace uamflow::predictor
