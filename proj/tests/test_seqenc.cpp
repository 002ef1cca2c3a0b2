#include <gtest/gtest.h>

#include <random>

#include "support/finite_diff.hpp"
#include "uamflow/seqenc.hpp"

using namespace uamflow;
using namespace uamflow::seqenc;

namespace {

GruEncoder::Sequence random_sequence(int H, int F, int B, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  GruEncoder::Sequence xs(H, Eigen::MatrixXd(F, B));
  for (auto& x : xs)
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  return xs;
}

}  // namespace

TEST(Encoder, DeterministicAndShaped) {
  GruEncoder enc(6, 64, 3);
  std::mt19937_64 rng(1);
  enc.init(rng);
  Eigen::MatrixXd f = Eigen::MatrixXd::Random(60, 6);
  Eigen::VectorXd a = enc.encode(f), b = enc.encode(f);
  ASSERT_EQ(a.size(), 64);
  EXPECT_EQ(a, b);
}

TEST(Encoder, ShapeMismatch) {
  GruEncoder enc(3, 8, 2);
  EXPECT_THROW(enc.encode(Eigen::MatrixXd::Zero(5, 6)), ShapeError);
  EXPECT_THROW(enc.forward({}), ShapeError);
}

TEST(Encoder, BatchColumnsAreIndependent) {
  GruEncoder enc(3, 16, 3);
  std::mt19937_64 rng(2);
  enc.init(rng);
  auto xs = random_sequence(12, 3, 4, 5);
  Eigen::MatrixXd h = enc.forward(xs);
  for (int j = 0; j < 4; ++j) {
    Eigen::MatrixXd single(12, 3);
    for (int t = 0; t < 12; ++t) single.row(t) = xs[t].col(j).transpose();
    EXPECT_LT((enc.encode(single) - h.col(j)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Encoder, ZeroBiasActivationsBounded) {
  GruEncoder enc(3, 16, 3);
  std::mt19937_64 rng(4);
  enc.init(rng);
  nn::ParamList ps;
  enc.collect(ps);
  for (auto* p : ps)
    if (p->value.cols() == 1) p->value.setZero();
  auto xs = random_sequence(30, 3, 8, 6);
  for (auto& x : xs) x = x.cwiseMax(-1.0).cwiseMin(1.0);
  GruEncoder::Cache cache;
  enc.forward(xs, &cache);
  for (const auto& layer : cache.steps)
    for (std::size_t t = 1; t < layer.size(); ++t) {
      EXPECT_LT(layer[t].h.cwiseAbs().maxCoeff(), 1.0);
      EXPECT_LT(layer[t].n.cwiseAbs().maxCoeff(), 1.0);
    }
}

TEST(Encoder, InputGradientMatchesFiniteDifferences) {
  GruEncoder enc(6, 8, 3);
  std::mt19937_64 rng(8);
  enc.init(rng);
  auto xs = random_sequence(10, 6, 1, 9);
  Eigen::VectorXd w = Eigen::VectorXd::LinSpaced(8, -1.0, 1.5);
  auto loss = [&] { return w.dot(enc.forward(xs).col(0)); };

  GruEncoder::Cache cache;
  enc.forward(xs, &cache);
  auto dx = enc.backward(cache, w);
  for (int t = 0; t < 10; ++t) {
    Eigen::MatrixXd num = fd::numeric_gradient(xs[t], loss, 1e-3);
    EXPECT_LE(fd::relative_error(dx[t], num), 1e-4) << "step " << t;
  }
}

TEST(Encoder, ParameterGradientsMatchFiniteDifferences) {
  GruEncoder enc(3, 8, 3);
  std::mt19937_64 rng(10);
  enc.init(rng);
  auto xs = random_sequence(7, 3, 3, 12);
  Eigen::MatrixXd w = Eigen::MatrixXd::Random(8, 3);
  auto loss = [&] { return (w.array() * enc.forward(xs).array().square()).sum(); };

  nn::ParamList ps;
  enc.collect(ps);
  nn::zero_grads(ps);
  GruEncoder::Cache cache;
  Eigen::MatrixXd h = enc.forward(xs, &cache);
  enc.backward(cache, 2.0 * w.cwiseProduct(h));
  std::vector<Eigen::MatrixXd> analytic;
  for (auto* p : ps) analytic.push_back(p->grad);
  ASSERT_EQ(ps.size(), 27u);
  for (const auto& c : fd::check_gradients(ps, analytic, loss, 1e-3)) {
    EXPECT_LE(c.rel_err, 1e-4) << c.name;
    EXPECT_GT(c.analytic_norm, 0.0) << c.name;
  }
}
