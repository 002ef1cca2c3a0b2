#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "uamflow/evalkit/metrics.hpp"
#include "uamflow/model.hpp"
#include "uamflow/rng.hpp"

namespace uamflow::evalkit {

inline constexpr int kDefaultSamples = 100;

struct PairErrors {
  std::vector<double> min_ade, min_fde;  // one entry per test pair
};

namespace detail {

// Per-step Euclidean error in meters between normalized outputs (columns)
// and a normalized truth column. Anchors cancel because both are offsets
// from the same last observed point.
inline Eigen::MatrixXd step_errors(const MatrixXd& pred, const VectorXd& truth, const VectorXd& scale) {
  const Eigen::Index T = truth.size() / 3;
  MatrixXd diff = (pred.colwise() - truth).array().colwise() * scale.array();
  MatrixXd err(T, pred.cols());
  for (Eigen::Index t = 0; t < T; ++t) err.row(t) = diff.middleRows(3 * t, 3).colwise().norm();
  return err;
}

}  // namespace detail

/// Per-pair minADE/minFDE over `set`. Flows draw `k` samples per pair from a
/// stream derived from (seed, pair index); deterministic models use their
/// single output.
inline PairErrors pair_errors(const Model& model, const PreparedSet& set, int k, std::uint64_t seed,
                              int batch_size = 256) {
  if (set.size() == 0) throw ShapeError("evaluate: empty test set");
  if (k < 1) throw ShapeError("evaluate: k must be positive");
  const auto& st = model.stats();
  VectorXd scale = Eigen::Map<const VectorXd>(st.target_std.data(), static_cast<Eigen::Index>(st.target_std.size()));
  PairErrors out;
  out.min_ade.resize(set.size());
  out.min_fde.resize(set.size());
  std::vector<Eigen::Index> cols;
  for (Eigen::Index start = 0; start < set.size(); start += batch_size) {
    const Eigen::Index end = std::min<Eigen::Index>(set.size(), start + batch_size);
    cols.resize(end - start);
    std::iota(cols.begin(), cols.end(), start);
    Batch b = set.batch(cols);
    MatrixXd h = model.encode(b);
    MatrixXd det;
    if (!model.is_flow()) det = model.predict_normalized(b);
    for (Eigen::Index j = 0; j < b.size(); ++j) {
      const Eigen::Index i = start + j;
      MatrixXd pred;
      if (model.is_flow()) {
        std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
        auto samples = model.flow().sample(h.col(j), k, rng);
        pred.resize(b.targets.rows(), k);
        for (int s = 0; s < k; ++s) pred.col(s) = samples[s].value;
      } else {
        pred = det.col(j);
      }
      Eigen::MatrixXd err = detail::step_errors(pred, b.targets.col(j), scale);
      out.min_ade[i] = err.colwise().mean().minCoeff();
      out.min_fde[i] = err.row(err.rows() - 1).minCoeff();
    }
  }
  return out;
}

/// One metrics row: flows use k samples, deterministic models k = 1.
inline MetricRow evaluate(const Model& model, const PreparedSet& set, int k = kDefaultSamples,
                          std::uint64_t seed = 0) {
  const int kk = model.is_flow() ? k : 1;
  PairErrors e = pair_errors(model, set, kk, seed);
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  MetricRow r{display_name(model.kind()), trajdata::to_string(model.config().input), mean(e.min_ade),
              mean(e.min_fde), kk, e.min_ade.size()};
  if (!std::isfinite(r.min_ade_m) || !std::isfinite(r.min_fde_m)) {
    throw NumericOverflow("evaluate: non-finite metric");
  }
  return r;
}

}  // namespace uamflow::evalkit
