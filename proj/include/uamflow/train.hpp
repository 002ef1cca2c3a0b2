#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "uamflow/cnf.hpp"
#include "uamflow/errors.hpp"
#include "uamflow/model.hpp"

namespace uamflow::train {

enum class Objective { nll, mse };

inline std::string to_string(Objective o) { return o == Objective::nll ? "nll" : "mse"; }

inline Objective parse_objective(const std::string& s) {
  if (s == "nll") return Objective::nll;
  if (s == "mse") return Objective::mse;
  throw ConfigError("unknown objective '" + s + "' (expected nll or mse)");
}

inline Objective objective_for(ModelKind k) { return k == ModelKind::flow ? Objective::nll : Objective::mse; }

struct TrainConfig {
  int batch_size = 64;
  double learning_rate = 1e-3;
  int epochs = 100;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;
  double momentum = 0.9;
  Objective objective = Objective::nll;

  void validate() const {
    if (batch_size < 1 || !(learning_rate > 0.0) || epochs < 1 || !(clip_norm > 0.0) ||
        momentum < 0.0 || momentum >= 1.0) {
      throw ConfigError("train config: batch size, learning rate, epochs and clip norm must be positive");
    }
  }
};

/// Mean negative log-likelihood of `targets` (one column per sample).
inline double nll_loss(const cnf::FlowStack& flow, const MatrixXd& targets, const MatrixXd& h) {
  if (targets.cols() < 1) throw ShapeError("nll_loss: empty batch");
  Eigen::RowVectorXd lp = flow.log_density(targets, h);
  const double v = -lp.mean();
  if (!std::isfinite(v)) throw DivergedTraining("non-finite NLL", -1);
  return v;
}

/// Mean squared error over every output coordinate.
inline double mse_loss(const MatrixXd& pred, const MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols() || pred.size() == 0) {
    throw ShapeError("mse_loss: shape mismatch");
  }
  const double v = (pred - target).squaredNorm() / static_cast<double>(pred.size());
  if (!std::isfinite(v)) throw DivergedTraining("non-finite MSE", -1);
  return v;
}

inline double nll_loss(const Batch& b, Model& model) {
  if (!model.is_flow()) throw ConfigError("nll_loss requires a flow model");
  return nll_loss(model.flow(), b.targets, model.encode(b));
}

inline double mse_loss(const Batch& b, const Model& model) {
  return mse_loss(model.predict_normalized(b), b.targets);
}

/// Fresh gradients of the model's own objective on `b`, one matrix per
/// parameter tensor in params() order.
inline std::vector<MatrixXd> compute_gradients(Model& model, const Batch& b, double* loss_out = nullptr) {
  auto ps = model.params();
  nn::zero_grads(ps);
  const double l = model.loss(b, true);
  if (!std::isfinite(l)) throw DivergedTraining("non-finite loss while computing gradients", -1);
  if (loss_out) *loss_out = l;
  std::vector<MatrixXd> g;
  g.reserve(ps.size());
  for (auto* p : ps) g.push_back(p->grad);
  return g;
}

/// Index of the lowest score; earliest wins ties.
inline int select_best_epoch(std::span<const double> scores) {
  if (scores.empty()) throw ShapeError("select_best_epoch: no scores");
  int best = -1;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i) {
    if (!std::isfinite(scores[i])) continue;
    if (best < 0 || scores[i] < scores[best]) best = i;
  }
  if (best < 0) throw DivergedTraining("no finite validation score", -1);
  return best;
}

inline double evaluate_loss(Model& model, const PreparedSet& set, int batch_size) {
  if (set.size() == 0) throw ShapeError("evaluate_loss: empty set");
  double total = 0.0;
  std::vector<Eigen::Index> cols;
  for (Eigen::Index start = 0; start < set.size(); start += batch_size) {
    const Eigen::Index end = std::min<Eigen::Index>(set.size(), start + batch_size);
    cols.resize(end - start);
    std::iota(cols.begin(), cols.end(), start);
    total += model.loss(set.batch(cols), false) * static_cast<double>(end - start);
  }
  return total / static_cast<double>(set.size());
}

struct Checkpoint {
  Model model;
  TrainConfig config;
  double val_score = std::numeric_limits<double>::quiet_NaN();
  int best_epoch = 0;
  std::vector<double> val_history;    // index 0 = before training
  std::vector<double> train_history;  // mean training loss per epoch (index 0 unused)
};

// Plain momentum SGD with global-norm clipping.
class Sgd {
 public:
  Sgd(nn::ParamList params, double lr, double momentum, double clip)
      : params_(std::move(params)), lr_(lr), mu_(momentum), clip_(clip) {
    for (auto* p : params_) velocity_.push_back(MatrixXd::Zero(p->value.rows(), p->value.cols()));
  }

  /// Returns the pre-clipping global gradient norm.
  double step() {
    double sq = 0.0;
    for (auto* p : params_) sq += p->grad.squaredNorm();
    const double norm = std::sqrt(sq);
    const double scale = norm > clip_ ? clip_ / norm : 1.0;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      velocity_[i] = mu_ * velocity_[i] + scale * params_[i]->grad;
      params_[i]->value -= lr_ * velocity_[i];
    }
    return norm;
  }

 private:
  nn::ParamList params_;
  std::vector<MatrixXd> velocity_;
  double lr_, mu_, clip_;
};

/// Trains `model` on `train_set`, scoring `val_set` before training and after
/// every epoch, and returns the parameters of the best-scoring epoch.
inline Checkpoint fit(Model model, const PreparedSet& train_set, const PreparedSet& val_set,
                      const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.objective != objective_for(model.kind())) {
    throw ConfigError("objective " + to_string(cfg.objective) + " does not match model kind " +
                      to_string(model.kind()));
  }
  if (train_set.size() == 0 || val_set.size() == 0) throw ShapeError("fit: empty train or validation set");

  Checkpoint best{model, cfg, 0.0, 0, {}, {0.0}};
  best.val_score = evaluate_loss(model, val_set, cfg.batch_size);
  if (!std::isfinite(best.val_score)) throw DivergedTraining("initial validation score is not finite", -1);
  best.val_history.push_back(best.val_score);

  std::mt19937_64 rng(cfg.seed);
  Sgd opt(model.params(), cfg.learning_rate, cfg.momentum, cfg.clip_norm);
  auto ps = model.params();
  std::vector<Eigen::Index> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  int last_finite = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Batch b = train_set.batch(std::span<const Eigen::Index>(order.data() + start, end - start));
      nn::zero_grads(ps);
      double l = 0.0;
      try {
        l = model.loss(b, true);
      } catch (const NumericOverflow& e) {
        throw DivergedTraining(std::string("training diverged: ") + e.what(), last_finite);
      }
      if (!std::isfinite(l)) throw DivergedTraining("training loss is not finite", last_finite);
      opt.step();
      sum += l * static_cast<double>(end - start);
    }
    best.train_history.push_back(sum / static_cast<double>(order.size()));
    double score;
    try {
      score = evaluate_loss(model, val_set, cfg.batch_size);
    } catch (const NumericOverflow& e) {
      throw DivergedTraining(std::string("validation diverged: ") + e.what(), last_finite);
    }
    if (!std::isfinite(score)) throw DivergedTraining("validation score is not finite", last_finite);
    last_finite = epoch;
    best.val_history.push_back(score);
    if (score < best.val_score) {
      best.val_score = score;
      best.best_epoch = epoch;
      best.model = model;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Checkpoint container: {format, version, kind, dims, input_config,
// norm_stats, tensors, config, val_score, best_epoch, val_history}

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size}, {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
          {"seed", c.seed},             {"clip_norm", c.clip_norm},         {"momentum", c.momentum},
          {"objective", to_string(c.objective)}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.momentum = j.value("momentum", c.momentum);
  if (j.contains("objective")) c.objective = parse_objective(j.at("objective").get<std::string>());
  return c;
}

inline nlohmann::json to_json(const ModelConfig& m) {
  return {{"kind", to_string(m.kind)},
          {"input_config", trajdata::to_string(m.input)},
          {"history", m.window.history},
          {"future", m.window.future},
          {"enc_hidden", m.enc_hidden},
          {"enc_layers", m.enc_layers},
          {"flow_layers", m.flow_layers},
          {"flow_hidden", m.flow_hidden},
          {"scale_clamp", m.scale_clamp},
          {"mlp_hidden", m.mlp_hidden}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig m = {}) {
  if (j.contains("kind")) m.kind = parse_model_kind(j.at("kind").get<std::string>());
  if (j.contains("input_config")) m.input = trajdata::parse_input_config(j.at("input_config").get<std::string>());
  m.window.history = j.value("history", m.window.history);
  m.window.future = j.value("future", m.window.future);
  m.enc_hidden = j.value("enc_hidden", m.enc_hidden);
  m.enc_layers = j.value("enc_layers", m.enc_layers);
  m.flow_layers = j.value("flow_layers", m.flow_layers);
  m.flow_hidden = j.value("flow_hidden", m.flow_hidden);
  m.scale_clamp = j.value("scale_clamp", m.scale_clamp);
  m.mlp_hidden = j.value("mlp_hidden", m.mlp_hidden);
  if (m.window.history < 1 || m.window.future < 1 || m.enc_hidden < 1 || m.enc_layers < 1 ||
      m.flow_layers < 1 || m.flow_hidden < 1 || m.mlp_hidden < 1 || !(m.scale_clamp > 0.0)) {
    throw ConfigError("model config: all dimensions must be positive");
  }
  return m;
}

inline nlohmann::json to_json(const Checkpoint& ck) {
  const Model& m = ck.model;
  nlohmann::json tensors = nlohmann::json::array();
  for (auto* p : m.params()) {
    std::vector<double> data(p->value.data(), p->value.data() + p->value.size());
    tensors.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}, {"data", data}});
  }
  return {{"format", "uamflow-checkpoint"},
          {"version", kCheckpointVersion},
          {"kind", to_string(m.kind())},
          {"dims", to_json(m.config())},
          {"norm_stats", trajdata::to_json(m.stats())},
          {"tensors", std::move(tensors)},
          {"config", to_json(ck.config)},
          {"val_score", ck.val_score},
          {"best_epoch", ck.best_epoch},
          {"val_history", ck.val_history}};
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "uamflow-checkpoint") {
      throw MalformedInput("not a uamflow checkpoint");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw MalformedInput("unsupported checkpoint version");
    }
    ModelConfig mc = model_config_from_json(j.at("dims"));
    NormStats stats = trajdata::stats_from_json(j.at("norm_stats"));
    Checkpoint ck{Model(mc, stats, 0), train_config_from_json(j.at("config")), j.at("val_score").get<double>(),
                  j.value("best_epoch", 0), j.value("val_history", std::vector<double>{}), {}};
    auto ps = ck.model.params();
    const auto& ts = j.at("tensors");
    if (ts.size() != ps.size()) throw MalformedInput("checkpoint tensor count does not match model");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      const auto& t = ts[i];
      if (t.at("name").get<std::string>() != ps[i]->name || t.at("rows").get<Eigen::Index>() != ps[i]->value.rows() ||
          t.at("cols").get<Eigen::Index>() != ps[i]->value.cols()) {
        throw ShapeError("checkpoint tensor '" + t.at("name").get<std::string>() + "' does not match model");
      }
      auto data = t.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != ps[i]->value.size()) {
        throw ShapeError("checkpoint tensor '" + ps[i]->name + "' has wrong length");
      }
      std::copy(data.begin(), data.end(), ps[i]->value.data());
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput(std::string("checkpoint schema violation: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out << to_json(ck).dump() << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInput("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace uamflow::train
