#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "uamflow/predictor.hpp"

using namespace uamflow;
using namespace uamflow::predictor;

namespace {

const GeoPoint kOrigin{126.79, 37.56, 0.0};

Trajectory track(const std::string& id, int len, double ve = 70.0) {
  Trajectory tr{id, trajdata::Kind::arrival, {}};
  for (int k = 0; k < len; ++k) {
    GeoPoint g = geo::from_enu({ve * k, 20.0 * k, 800.0 - 2.0 * k}, kOrigin);
    tr.points.push_back({100.0 + k, g.lon, g.lat, g.alt});
  }
  return tr;
}

Model small_flow(int H = 6, int T = 4) {
  ModelConfig c;
  c.kind = ModelKind::flow;
  c.window = {H, T};
  c.enc_hidden = 8;
  c.enc_layers = 1;
  c.flow_layers = 2;
  c.flow_hidden = 8;
  c.zero_init_couplings = false;
  NormStats st = NormStats::identity(kOrigin, T);
  st.pos_std = {1000, 1000, 100};
  st.dev_std = {100, 100, 10};
  st.target_std.assign(3 * T, 50.0);
  return Model(c, st, 3);
}

}  // namespace

TEST(Weights, SumToOneAndShiftInvariant) {
  std::vector<double> lp{-3.0, 10.0, 2.5, -700.0};
  auto w = normalized_weights(lp);
  EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
  std::vector<double> shifted = lp;
  for (double& v : shifted) v += 1234.5;
  auto w2 = normalized_weights(shifted);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], w2[i], 1e-15);
}

TEST(Weights, EqualDensitiesAreUniform) {
  std::vector<double> lp(100, -42.0);
  for (double w : normalized_weights(lp)) EXPECT_EQ(w, 0.01);
}

TEST(FlowPredictor, DeterministicPerSeedAndTime) {
  FlowPredictor p(small_flow(), 77, 20);
  Trajectory tr = track("KAL123", 30);
  PredictionSet a = p.predict(tr, 10), b = p.predict(tr, 10), c = p.predict(tr, 11);
  ASSERT_EQ(a.k(), 20);
  ASSERT_EQ(a.horizon(), 4);
  EXPECT_NO_THROW(a.validate());
  for (int i = 0; i < 20; ++i)
    for (int t = 0; t < 4; ++t) {
      EXPECT_EQ(a.samples[i][t].east, b.samples[i][t].east);
      EXPECT_EQ(a.samples[i][t].up, b.samples[i][t].up);
    }
  EXPECT_EQ(a.weights, b.weights);
  EXPECT_NE(a.samples[0][0].east, c.samples[0][0].east);
}

TEST(FlowPredictor, InsufficientHistory) {
  FlowPredictor p(small_flow(6, 4), 1, 5);
  Trajectory tr = track("fresh", 30);
  EXPECT_THROW(p.predict(tr, 4), InsufficientHistory);
  EXPECT_NO_THROW(p.predict(tr, 5));
}

TEST(FlowPredictor, RejectsBaselineModels) {
  ModelConfig c;
  c.kind = ModelKind::mlp;
  c.window = {6, 4};
  c.enc_hidden = 4;
  c.mlp_hidden = 4;
  Model m(c, NormStats::identity(kOrigin, 4), 1);
  EXPECT_THROW(FlowPredictor(m, 0), ConfigError);
}

TEST(FlowPredictor, SanityBoxClampsRunaways) {
  SanityBox box;
  box.half_width = 10.0;
  FlowPredictor p(small_flow(), 5, 10, box);
  PredictionSet ps = p.predict(track("far", 30, 500.0), 20);
  EXPECT_GT(ps.clamped, 0);
  for (const auto& s : ps.samples)
    for (const auto& q : s) {
      EXPECT_LE(std::abs(q.east), 10.0);
      EXPECT_LE(std::abs(q.north), 10.0);
    }
}

TEST(TruthPredictor, TruthIsAmongSamples) {
  TruthInSamplesPredictor p(kOrigin, 60, 100, 200.0, 3);
  Trajectory tr = track("scripted", 200);
  PredictionSet ps = p.predict(tr, 50);
  ps.validate();
  for (int tau = 1; tau <= 60; ++tau) {
    EnuPoint e = geo::to_enu(tr.points[50 + tau].pos, kOrigin);
    EXPECT_EQ(ps.samples[0][tau - 1].east, e.east);
    EXPECT_EQ(ps.samples[0][tau - 1].north, e.north);
  }
  EXPECT_NE(ps.samples[1][0].east, ps.samples[0][0].east);
  for (double w : ps.weights) EXPECT_EQ(w, 0.01);
}

TEST(TruthPredictor, HoldsLastPointPastTrackEnd) {
  TruthInSamplesPredictor p(kOrigin, 10, 2);
  Trajectory tr = track("short", 5);
  PredictionSet ps = p.predict(tr, 2);
  EnuPoint last = geo::to_enu(tr.points.back().pos, kOrigin);
  EXPECT_EQ(ps.samples[0][9].east, last.east);
  EXPECT_EQ(ps.samples[0][1].east, last.east);
}
