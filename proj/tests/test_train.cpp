#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "support/finite_diff.hpp"
#include "uamflow/train.hpp"

using namespace uamflow;
using namespace uamflow::train;

namespace {

const geo::GeoPoint kOrigin{126.79, 37.56, 0.0};

// Straight climbing tracks with random heading and speed.
std::vector<trajdata::Trajectory> straight_tracks(int n, int len, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> hdg(0.0, 2.0 * std::numbers::pi), spd(60.0, 90.0), off(-0.05, 0.05);
  std::vector<trajdata::Trajectory> out;
  for (int i = 0; i < n; ++i) {
    trajdata::Trajectory tr{"t" + std::to_string(i), trajdata::Kind::departure, {}};
    const double h = hdg(rng), v = spd(rng), lon0 = kOrigin.lon + off(rng), lat0 = kOrigin.lat + off(rng);
    for (int k = 0; k < len; ++k) {
      geo::EnuPoint e{v * k * std::sin(h), v * k * std::cos(h), 600.0 + 5.0 * k};
      geo::GeoPoint g = geo::from_enu(e, {lon0, lat0, 0.0});
      tr.points.push_back({static_cast<double>(k), g.lon, g.lat, g.alt});
    }
    out.push_back(std::move(tr));
  }
  return out;
}

struct Fixture {
  std::vector<trajdata::Trajectory> tracks;
  std::vector<trajdata::WindowPair> pairs;
  NormStats stats;
  PreparedSet set;
};

Fixture make_fixture(int n_tracks, WindowSpec spec, std::uint64_t seed) {
  Fixture f;
  f.tracks = straight_tracks(n_tracks, spec.length() + 4, seed);
  f.pairs = trajdata::make_windows(std::span<const trajdata::Trajectory>(f.tracks), spec);
  f.stats = trajdata::compute_stats(f.pairs, kOrigin);
  f.set = prepare(f.pairs, InputConfig::abs_dev, f.stats);
  return f;
}

ModelConfig tiny_config(ModelKind kind, WindowSpec spec) {
  ModelConfig c;
  c.kind = kind;
  c.window = spec;
  c.enc_hidden = 8;
  c.enc_layers = 2;
  c.flow_layers = 2;
  c.flow_hidden = 8;
  c.mlp_hidden = 8;
  c.zero_init_couplings = false;
  return c;
}

}  // namespace

TEST(Loss, NllOfIdentityFlowAtOrigin) {
  cnf::FlowStack f({2, 1, 2, 4, 3.0});
  std::mt19937_64 rng(1);
  f.init(rng, true);
  EXPECT_NEAR(nll_loss(f, MatrixXd::Zero(2, 1), MatrixXd::Zero(1, 1)), std::log(2.0 * std::numbers::pi), 1e-12);
}

TEST(Loss, NllIsBatchMean) {
  cnf::FlowStack f({4, 2, 2, 4, 3.0});
  std::mt19937_64 rng(2);
  f.init(rng, false);
  MatrixXd x = MatrixXd::Random(4, 3), h = MatrixXd::Random(2, 3);
  MatrixXd x2(4, 6), h2(2, 6);
  x2 << x, x;
  h2 << h, h;
  EXPECT_NEAR(nll_loss(f, x, h), nll_loss(f, x2, h2), 1e-12);
  double sum = 0.0;
  for (int j = 0; j < 3; ++j) sum -= f.log_density(VectorXd(x.col(j)), VectorXd(h.col(j)));
  EXPECT_NEAR(nll_loss(f, x, h), sum / 3.0, 1e-12);
}

TEST(Loss, MseExamples) {
  MatrixXd a = MatrixXd::Random(6, 4);
  EXPECT_EQ(mse_loss(a, a), 0.0);
  EXPECT_NEAR(mse_loss(a, (a.array() + 1.0).matrix()), 1.0, 1e-12);
  MatrixXd p(2, 1), t(2, 1);
  p << 1.0, 2.0;
  t << 0.0, 4.0;
  EXPECT_NEAR(mse_loss(p, t), (1.0 + 4.0) / 2.0, 1e-15);
  EXPECT_THROW(mse_loss(p, MatrixXd::Zero(3, 1)), ShapeError);
}

TEST(SelectBestEpoch, EarliestMinimum) {
  std::vector<double> s{5, 4, 6};
  EXPECT_EQ(select_best_epoch(s), 1);
  std::vector<double> ties{3, 2, 2, 7};
  EXPECT_EQ(select_best_epoch(ties), 1);
  std::vector<double> none;
  EXPECT_THROW(select_best_epoch(none), ShapeError);
}

namespace uamflow {
inline void PrintTo(ModelKind k, std::ostream* os) { *os << to_string(k); }
}  // namespace uamflow

class ModelGradients : public ::testing::TestWithParam<ModelKind> {};

TEST_P(ModelGradients, MatchFiniteDifferences) {
  const WindowSpec spec{5, 3};
  Fixture fx = make_fixture(3, spec, 4);
  Model model(tiny_config(GetParam(), spec), fx.stats, 7);
  std::vector<Eigen::Index> cols{0, 2, 5, 7};
  Batch b = fx.set.batch(cols);
  auto analytic = compute_gradients(model, b);
  auto ps = model.params();
  auto loss = [&] { return model.loss(b, false); };
  for (const auto& c : fd::check_gradients(ps, analytic, loss, 1e-3)) {
    EXPECT_LE(c.rel_err, 1e-4) << c.name;
  }
}

INSTANTIATE_TEST_SUITE_P(AllKinds, ModelGradients,
                         ::testing::Values(ModelKind::flow, ModelKind::gru, ModelKind::mlp),
                         [](const auto& info) { return to_string(info.param); });

TEST(Gradients, ZeroWhenModelIsExact) {
  // An identity flow on an all-zero target column is not at an optimum, but
  // an MLP whose output layer reproduces the target exactly is.
  const WindowSpec spec{5, 3};
  Fixture fx = make_fixture(2, spec, 5);
  Model model(tiny_config(ModelKind::mlp, spec), fx.stats, 3);
  std::vector<Eigen::Index> cols{0};
  Batch b = fx.set.batch(cols);
  auto ps = model.params();
  // Last two tensors are the output weight and bias.
  ps[ps.size() - 2]->value.setZero();
  ps.back()->value = b.targets.col(0);
  for (const auto& g : compute_gradients(model, b)) EXPECT_LE(g.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Gradients, DuplicatedBatchGivesSameGradient) {
  const WindowSpec spec{5, 3};
  Fixture fx = make_fixture(2, spec, 6);
  Model model(tiny_config(ModelKind::flow, spec), fx.stats, 8);
  std::vector<Eigen::Index> one{1, 3}, two{1, 3, 1, 3};
  auto g1 = compute_gradients(model, fx.set.batch(one));
  auto g2 = compute_gradients(model, fx.set.batch(two));
  ASSERT_EQ(g1.size(), g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i) EXPECT_LE((g1[i] - g2[i]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fit, LossDecreasesOnToyData) {
  const WindowSpec spec{5, 3};
  Fixture fx = make_fixture(20, spec, 9);
  ASSERT_EQ(fx.set.size(), 100);
  for (ModelKind k : {ModelKind::flow, ModelKind::mlp}) {
    ModelConfig mc = tiny_config(k, spec);
    mc.zero_init_couplings = true;
    TrainConfig tc;
    tc.batch_size = 100;
    tc.epochs = 50;
    tc.learning_rate = 1e-2;
    tc.objective = objective_for(k);
    Checkpoint ck = fit(Model(mc, fx.stats, 1), fx.set, fx.set, tc);
    ASSERT_EQ(ck.val_history.size(), 51u);
    EXPECT_LT(ck.val_history.back(), ck.val_history.front()) << to_string(k);
    EXPECT_EQ(ck.val_score, ck.val_history[ck.best_epoch]);
  }
}

TEST(Fit, DeterministicForFixedSeeds) {
  const WindowSpec spec{5, 3};
  Fixture fx = make_fixture(6, spec, 10);
  TrainConfig tc;
  tc.batch_size = 16;
  tc.epochs = 3;
  tc.seed = 42;
  Checkpoint a = fit(Model(tiny_config(ModelKind::flow, spec), fx.stats, 1), fx.set, fx.set, tc);
  Checkpoint b = fit(Model(tiny_config(ModelKind::flow, spec), fx.stats, 1), fx.set, fx.set, tc);
  EXPECT_EQ(a.val_history, b.val_history);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
}

TEST(Fit, ObjectiveMustMatchModel) {
  const WindowSpec spec{5, 3};
  Fixture fx = make_fixture(2, spec, 11);
  TrainConfig tc;
  tc.objective = Objective::mse;
  EXPECT_THROW(fit(Model(tiny_config(ModelKind::flow, spec), fx.stats, 1), fx.set, fx.set, tc), ConfigError);
  tc.batch_size = 0;
  EXPECT_THROW(tc.validate(), ConfigError);
}

TEST(Fit, DivergenceIsReported) {
  const WindowSpec spec{5, 3};
  Fixture fx = make_fixture(4, spec, 12);
  TrainConfig tc;
  tc.batch_size = 8;
  tc.epochs = 20;
  tc.learning_rate = 1e200;
  tc.clip_norm = 1e300;
  tc.objective = Objective::mse;
  try {
    fit(Model(tiny_config(ModelKind::mlp, spec), fx.stats, 1), fx.set, fx.set, tc);
    FAIL() << "expected divergence";
  } catch (const DivergedTraining& e) {
    EXPECT_GE(e.last_finite_epoch(), 0);
    EXPECT_LT(e.last_finite_epoch(), 20);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const WindowSpec spec{5, 3};
  Fixture fx = make_fixture(3, spec, 13);
  for (ModelKind k : {ModelKind::flow, ModelKind::gru, ModelKind::mlp}) {
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 8;
    tc.objective = objective_for(k);
    Checkpoint ck = fit(Model(tiny_config(k, spec), fx.stats, 2), fx.set, fx.set, tc);
    const auto path = std::filesystem::temp_directory_path() / ("uamflow_ck_" + to_string(k) + ".json");
    save_checkpoint(ck, path.string());
    Checkpoint back = load_checkpoint(path.string());
    std::filesystem::remove(path);
    EXPECT_EQ(to_json(back).dump(), to_json(ck).dump());
    auto pa = ck.model.params();
    auto pb = back.model.params();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
    Batch b = fx.set.all();
    EXPECT_EQ(ck.model.loss(b, false), back.model.loss(b, false));
  }
}

TEST(Checkpoint, RejectsMalformed) {
  EXPECT_THROW(checkpoint_from_json({{"format", "other"}}), MalformedInput);
  EXPECT_THROW(checkpoint_from_json({{"format", "uamflow-checkpoint"}, {"version", 1}}), MalformedInput);
  EXPECT_THROW(load_checkpoint("/nonexistent/ck.json"), ConfigError);
}
