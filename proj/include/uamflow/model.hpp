#pragma once

#include <Eigen/Dense>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "uamflow/cnf.hpp"
#include "uamflow/errors.hpp"
#include "uamflow/evalkit/decoders.hpp"
#include "uamflow/nn.hpp"
#include "uamflow/seqenc.hpp"
#include "uamflow/trajdata.hpp"

namespace uamflow {

using nn::MatrixXd;
using nn::VectorXd;
using trajdata::EnuPoint;
using trajdata::InputConfig;
using trajdata::NormStats;
using trajdata::TrackPoint;
using trajdata::WindowPair;
using trajdata::WindowSpec;

enum class ModelKind { flow, gru, mlp };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::flow: return "flow";
    case ModelKind::gru: return "gru";
    case ModelKind::mlp: return "mlp";
  }
  return "?";
}

/// Row label used in metric reports.
inline std::string display_name(ModelKind k) {
  switch (k) {
    case ModelKind::flow: return "GRU+CNF";
    case ModelKind::gru: return "GRU+GRU";
    case ModelKind::mlp: return "GRU+MLP";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "flow" || s == "cnf" || s == "GRU+CNF") return ModelKind::flow;
  if (s == "gru" || s == "GRU+GRU") return ModelKind::gru;
  if (s == "mlp" || s == "GRU+MLP") return ModelKind::mlp;
  throw ConfigError("unknown model kind '" + s + "' (expected flow, gru, mlp)");
}

struct ModelConfig {
  ModelKind kind = ModelKind::flow;
  InputConfig input = InputConfig::abs_dev;
  WindowSpec window;
  int enc_hidden = seqenc::kDefaultHidden;
  int enc_layers = seqenc::kDefaultLayers;
  int flow_layers = cnf::kDefaultLayers;
  int flow_hidden = cnf::kDefaultHidden;
  double scale_clamp = cnf::kDefaultScaleClamp;
  int mlp_hidden = evalkit::kDefaultMlpHidden;
  // Zero the last layer of every coupling net so an untrained flow is the
  // identity map.
  bool zero_init_couplings = true;

  int feature_width() const { return trajdata::feature_width(input); }
  int target_dim() const { return 3 * window.future; }
};

struct Batch {
  seqenc::GruEncoder::Sequence seq;  // history steps, each (width x B)
  MatrixXd targets;                  // (3 * future) x B, normalized
  Eigen::Index size() const { return targets.cols(); }
};

// Window pairs turned into normalized column blocks once, so epochs only
// gather columns.
struct PreparedSet {
  int history = 0, width = 0, future = 0;
  MatrixXd features;  // (history * width) x N, time-major
  MatrixXd targets;   // (3 * future) x N
  std::vector<EnuPoint> anchors;

  Eigen::Index size() const { return targets.cols(); }

  Batch batch(std::span<const Eigen::Index> cols) const {
    const Eigen::Index B = static_cast<Eigen::Index>(cols.size());
    Batch b;
    b.seq.assign(history, MatrixXd(width, B));
    b.targets.resize(3 * future, B);
    for (Eigen::Index j = 0; j < B; ++j) {
      const Eigen::Index c = cols[j];
      for (int t = 0; t < history; ++t) b.seq[t].col(j) = features.block(t * width, c, width, 1);
      b.targets.col(j) = targets.col(c);
    }
    return b;
  }

  Batch all() const {
    std::vector<Eigen::Index> cols(size());
    for (Eigen::Index i = 0; i < size(); ++i) cols[i] = i;
    return batch(cols);
  }

  /// Ground-truth future points (stats frame) of pair `i`.
  std::vector<EnuPoint> truth(Eigen::Index i, const NormStats& stats) const {
    return trajdata::denormalize_future(targets.col(i), anchors[i], stats);
  }
};

inline PreparedSet prepare(std::span<const WindowPair> pairs, InputConfig cfg, const NormStats& stats) {
  trajdata::check_stats(stats);
  PreparedSet ps;
  if (pairs.empty()) return ps;
  ps.history = pairs.front().spec.history;
  ps.future = pairs.front().spec.future;
  ps.width = trajdata::feature_width(cfg);
  const Eigen::Index N = static_cast<Eigen::Index>(pairs.size());
  ps.features.resize(ps.history * ps.width, N);
  ps.targets.resize(3 * ps.future, N);
  ps.anchors.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& p = pairs[i];
    if (p.spec.history != ps.history || p.spec.future != ps.future) {
      throw ShapeError("prepare: mixed window sizes");
    }
    auto xs = trajdata::to_enu(p.X(), stats.origin);
    auto ys = trajdata::to_enu(p.Y(), stats.origin);
    Eigen::MatrixXd f = trajdata::build_inputs_enu(xs, cfg, stats);
    for (int t = 0; t < ps.history; ++t) ps.features.block(t * ps.width, i, ps.width, 1) = f.row(t).transpose();
    ps.anchors[i] = xs.back();
    ps.targets.col(i) = trajdata::normalize_future(ys, xs.back(), stats);
  }
  return ps;
}

/// Encoder features plus the anchor point for one observation window.
struct Observation {
  MatrixXd features;  // history x width
  EnuPoint anchor;
};

class Model {
 public:
  Model() = default;
  Model(const ModelConfig& cfg, NormStats stats, std::uint64_t seed)
      : cfg_(cfg), stats_(std::move(stats)), enc_(cfg.feature_width(), cfg.enc_hidden, cfg.enc_layers) {
    if (cfg.window.history < 1 || cfg.window.future < 1) throw ShapeError("model: bad window");
    if (stats_.future() != cfg.window.future) throw ShapeError("model: statistics horizon mismatch");
    trajdata::check_stats(stats_);
    std::mt19937_64 rng(seed);
    enc_.init(rng);
    switch (cfg.kind) {
      case ModelKind::flow: {
        cnf::FlowDims d{cfg.target_dim(), cfg.enc_hidden, cfg.flow_layers, cfg.flow_hidden, cfg.scale_clamp};
        cnf::FlowStack f(d);
        f.init(rng, cfg.zero_init_couplings);
        decoder_ = std::move(f);
        break;
      }
      case ModelKind::gru: {
        evalkit::GruDecoder g(cfg.enc_hidden, cfg.window.future);
        g.init(rng);
        decoder_ = std::move(g);
        break;
      }
      case ModelKind::mlp: {
        evalkit::MlpDecoder m(cfg.enc_hidden, cfg.mlp_hidden, cfg.window.future);
        m.init(rng);
        decoder_ = std::move(m);
        break;
      }
    }
  }

  const ModelConfig& config() const { return cfg_; }
  ModelKind kind() const { return cfg_.kind; }
  const NormStats& stats() const { return stats_; }
  seqenc::GruEncoder& encoder() { return enc_; }
  const seqenc::GruEncoder& encoder() const { return enc_; }
  bool is_flow() const { return cfg_.kind == ModelKind::flow; }

  cnf::FlowStack& flow() { return std::get<cnf::FlowStack>(decoder_); }
  const cnf::FlowStack& flow() const { return std::get<cnf::FlowStack>(decoder_); }

  /// Every trainable tensor, encoder first, in a fixed order.
  nn::ParamList params() {
    nn::ParamList ps;
    enc_.collect(ps);
    std::visit([&](auto& d) { d.collect(ps); }, decoder_);
    return ps;
  }

  std::vector<const nn::Param*> params() const {
    auto ps = const_cast<Model*>(this)->params();
    return {ps.begin(), ps.end()};
  }

  /// Mean NLL (flow) or MSE (baselines) over the batch; with `grad`, adds
  /// d(loss)/d(param) into every Param::grad.
  double loss(const Batch& b, bool grad) {
    check_batch(b);
    const double B = static_cast<double>(b.size());
    seqenc::GruEncoder::Cache ecache;
    MatrixXd h = enc_.forward(b.seq, grad ? &ecache : nullptr);
    MatrixXd dh;
    double value = 0.0;
    if (auto* f = std::get_if<cnf::FlowStack>(&decoder_)) {
      cnf::FlowStack::Cache fc;
      Eigen::RowVectorXd lp = f->log_density(b.targets, h, grad ? &fc : nullptr);
      value = -lp.sum() / B;
      if (grad) dh = f->backward(fc, Eigen::RowVectorXd::Constant(lp.size(), -1.0 / B));
    } else {
      MatrixXd pred;
      MatrixXd diff;
      const double n = B * static_cast<double>(b.targets.rows());
      if (auto* g = std::get_if<evalkit::GruDecoder>(&decoder_)) {
        evalkit::GruDecoder::Cache dc;
        pred = g->forward(h, grad ? &dc : nullptr);
        diff = pred - b.targets;
        if (grad) dh = g->backward(dc, diff * (2.0 / n));
      } else {
        auto& m = std::get<evalkit::MlpDecoder>(decoder_);
        evalkit::MlpDecoder::Cache dc;
        pred = m.forward(h, grad ? &dc : nullptr);
        diff = pred - b.targets;
        if (grad) dh = m.backward(dc, diff * (2.0 / n));
      }
      value = diff.squaredNorm() / n;
    }
    if (grad) enc_.backward(ecache, dh);
    return value;
  }

  /// Condition vectors for a batch.
  MatrixXd encode(const Batch& b) const { return enc_.forward(b.seq); }

  /// Deterministic normalized output for a batch (baselines only).
  MatrixXd predict_normalized(const Batch& b) const {
    MatrixXd h = encode(b);
    if (auto* g = std::get_if<evalkit::GruDecoder>(&decoder_)) return g->forward(h);
    if (auto* m = std::get_if<evalkit::MlpDecoder>(&decoder_)) return m->forward(h);
    throw ShapeError("predict_normalized: flow models are probabilistic; use sample()");
  }

  Observation observe(std::span<const TrackPoint> X) const {
    if (static_cast<int>(X.size()) != cfg_.window.history) {
      throw ShapeError("observation has " + std::to_string(X.size()) + " points, model expects " +
                       std::to_string(cfg_.window.history));
    }
    auto xs = trajdata::to_enu(X, stats_.origin);
    return {trajdata::build_inputs_enu(xs, cfg_.input, stats_), xs.back()};
  }

  VectorXd condition(const Observation& obs) const { return enc_.encode(obs.features); }

  /// Single deterministic trajectory in the statistics' ENU frame.
  std::vector<EnuPoint> predict_deterministic(std::span<const TrackPoint> X) const {
    Observation obs = observe(X);
    MatrixXd h = condition(obs);
    VectorXd out;
    if (auto* g = std::get_if<evalkit::GruDecoder>(&decoder_)) {
      out = g->forward(h).col(0);
    } else if (auto* m = std::get_if<evalkit::MlpDecoder>(&decoder_)) {
      out = m->forward(h).col(0);
    } else {
      throw ShapeError("predict_deterministic: flow models are probabilistic; use sample()");
    }
    return trajdata::denormalize_future(out, obs.anchor, stats_);
  }

 private:
  void check_batch(const Batch& b) const {
    if (b.size() < 1) throw ShapeError("loss: empty batch");
    if (static_cast<int>(b.seq.size()) != cfg_.window.history ||
        b.targets.rows() != cfg_.target_dim() || b.seq.front().rows() != cfg_.feature_width()) {
      throw ShapeError("loss: batch does not match model dimensions");
    }
  }

  ModelConfig cfg_;
  NormStats stats_;
  seqenc::GruEncoder enc_;
  std::variant<cnf::FlowStack, evalkit::GruDecoder, evalkit::MlpDecoder> decoder_;
};

}  // namespace uamflow
