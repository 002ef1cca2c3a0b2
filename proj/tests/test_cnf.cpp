#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "support/finite_diff.hpp"
#include "uamflow/cnf.hpp"

using namespace uamflow;
using namespace uamflow::cnf;

namespace {

// Sets every weight of an MLP to zero and its output bias to `out_bias`.
void make_constant(nn::Mlp3& m, double out_bias) {
  nn::ParamList ps;
  m.collect(ps);
  for (auto* p : ps) p->value.setZero();
  ps.back()->value.setConstant(out_bias);
}

// Bias that makes the soft clamp emit exactly `s` (up to rounding).
double raw_for(double s, double clamp) { return clamp * std::atanh(s / clamp); }

double std_normal_logpdf(const Eigen::VectorXd& z) {
  return -0.5 * z.squaredNorm() - 0.5 * z.size() * std::log(2.0 * std::numbers::pi);
}

FlowStack random_flow(int dim, int cond, int layers, int hidden, std::uint64_t seed, double scale = 1.0) {
  FlowStack f({dim, cond, layers, hidden, 3.0});
  std::mt19937_64 rng(seed);
  f.init(rng, false);
  if (scale != 1.0) {
    nn::ParamList ps;
    f.collect(ps);
    for (auto* p : ps) p->value *= scale;
  }
  return f;
}

}  // namespace

TEST(Coupling, ZeroNetsAreIdentity) {
  CouplingLayer c("c", 6, 2, 8, 3.0);
  make_constant(c.scale_net(), 0.0);
  make_constant(c.shift_net(), 0.0);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 3), h = Eigen::MatrixXd::Random(2, 3);
  Eigen::RowVectorXd ld;
  EXPECT_EQ(c.forward(x, h, &ld), x);
  EXPECT_TRUE(ld.isZero(0.0));
  EXPECT_EQ(c.inverse(x, h), x);
}

TEST(Coupling, ConstantScaleAndShiftExample) {
  CouplingLayer c("c", 2, 1, 4, 3.0);
  make_constant(c.scale_net(), raw_for(0.5, 3.0));
  make_constant(c.shift_net(), 1.0);
  Eigen::MatrixXd x(2, 1), h(1, 1);
  x << 1.0, 2.0;
  h << 0.3;
  Eigen::RowVectorXd ld;
  Eigen::MatrixXd y = c.forward(x, h, &ld);
  EXPECT_EQ(y(0), 1.0);
  EXPECT_NEAR(y(1), 2.0 * std::exp(0.5) + 1.0, 1e-12);
  EXPECT_NEAR(y(1), 4.2974, 1e-4);
  EXPECT_NEAR(ld(0), 0.5, 1e-12);
  Eigen::MatrixXd back = c.inverse(y, h);
  EXPECT_NEAR(back(0), 1.0, 1e-12);
  EXPECT_NEAR(back(1), 2.0, 1e-12);
}

TEST(Coupling, ConstantScaleLogdetIsBlockTimesScale) {
  CouplingLayer c("c", 7, 2, 4, 3.0);  // d = 3, transformed block of 4
  make_constant(c.scale_net(), raw_for(-0.8, 3.0));
  make_constant(c.shift_net(), 0.2);
  Eigen::RowVectorXd ld;
  c.forward(Eigen::MatrixXd::Random(7, 5), Eigen::MatrixXd::Random(2, 5), &ld);
  for (int j = 0; j < 5; ++j) EXPECT_NEAR(ld(j), 4 * -0.8, 1e-12);
}

TEST(Coupling, ScaleIsClamped) {
  CouplingLayer c("c", 4, 1, 4, 3.0);
  make_constant(c.scale_net(), 1e6);
  make_constant(c.shift_net(), 0.0);
  Eigen::RowVectorXd ld;
  c.forward(Eigen::MatrixXd::Ones(4, 1), Eigen::MatrixXd::Zero(1, 1), &ld);
  EXPECT_NEAR(ld(0), 2 * 3.0, 1e-12);
}

TEST(Coupling, OverflowIsReported) {
  CouplingLayer c("c", 2, 1, 4, 3.0);
  make_constant(c.scale_net(), 10.0);
  make_constant(c.shift_net(), 0.0);
  Eigen::MatrixXd x(2, 1);
  x << 0.0, 1e308;
  EXPECT_THROW(c.forward(x, Eigen::MatrixXd::Zero(1, 1)), NumericOverflow);
}

TEST(Coupling, ShapeErrors) {
  CouplingLayer c("c", 4, 2, 4, 3.0);
  EXPECT_THROW(c.forward(Eigen::MatrixXd::Zero(3, 1), Eigen::MatrixXd::Zero(2, 1)), ShapeError);
  EXPECT_THROW(c.inverse(Eigen::MatrixXd::Zero(4, 1), Eigen::MatrixXd::Zero(1, 1)), ShapeError);
}

TEST(Permutation, BijectiveWithUnitDeterminant) {
  for (int D : {1, 2, 5, 8}) {
    const int d = split_index(D);
    Eigen::MatrixXd I = Eigen::MatrixXd::Identity(D, D);
    Eigen::MatrixXd P = permute(I, d);
    EXPECT_EQ(unpermute(P, d), I);
    EXPECT_NEAR(std::abs(P.determinant()), 1.0, 1e-12);
  }
}

TEST(Flow, InverseOfForwardRoundTrip) {
  FlowStack f = random_flow(12, 4, 6, 16, 21);
  std::mt19937_64 rng(22);
  std::normal_distribution<double> n(0.0, 2.0);
  Eigen::MatrixXd x(12, 1000), h(4, 1000);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = n(rng);
  Eigen::MatrixXd back = f.inverse(f.forward(x, h), h);
  EXPECT_LE((back - x).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Flow, AnalyticLogdetMatchesNumericJacobian) {
  for (int D : {2, 3, 5, 8}) {
    FlowStack f = random_flow(D, 3, 4, 10, 100 + D);
    std::mt19937_64 rng(200 + D);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::VectorXd z(D), h(3);
      for (auto& v : z) v = n(rng);
      for (auto& v : h) v = n(rng);
      Eigen::RowVectorXd ld;
      f.forward(Eigen::MatrixXd(z), Eigen::MatrixXd(h), &ld);
      Eigen::MatrixXd J(D, D);
      const double step = 1e-5;
      for (int k = 0; k < D; ++k) {
        Eigen::VectorXd up = z, down = z;
        up(k) += step;
        down(k) -= step;
        J.col(k) = (f.forward(Eigen::MatrixXd(up), Eigen::MatrixXd(h)) -
                    f.forward(Eigen::MatrixXd(down), Eigen::MatrixXd(h))) /
                   (2.0 * step);
      }
      const double numeric = std::log(std::abs(J.determinant()));
      EXPECT_LE(std::abs(numeric - ld(0)) / std::max(1.0, std::abs(ld(0))), 1e-5) << "D=" << D;
    }
  }
}

TEST(Flow, IdentityFlowDensity) {
  FlowStack f({2, 1, 3, 4, 3.0});
  std::mt19937_64 rng(1);
  f.init(rng, true);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(2), h = Eigen::VectorXd::Ones(1);
  EXPECT_NEAR(f.log_density(y, h), -std::log(2.0 * std::numbers::pi), 1e-12);
  EXPECT_NEAR(f.log_density(y, h), -1.8379, 1e-4);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int i = 0; i < 20; ++i) {
    y << n(rng), n(rng);
    EXPECT_NEAR(f.log_density(y, h), std_normal_logpdf(y), 1e-12);
  }
}

TEST(Flow, OneDimensionalDensityIntegratesToOne) {
  FlowStack f = random_flow(1, 2, 4, 8, 31);
  for (double hv : {-1.0, 0.4, 2.0}) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Constant(2, 1, hv);
    // Locate the mass from the base quantiles, then integrate a generous range.
    Eigen::MatrixXd zq(1, 2);
    zq << -12.0, 12.0;
    Eigen::MatrixXd xq = f.forward(zq, h.replicate(1, 2));
    const double lo = std::min(xq(0), xq(1)), hi = std::max(xq(0), xq(1));
    const int n = 200001;
    const double dx = (hi - lo) / (n - 1);
    Eigen::MatrixXd grid(1, n);
    for (int i = 0; i < n; ++i) grid(0, i) = lo + i * dx;
    Eigen::RowVectorXd lp = f.log_density(grid, h.replicate(1, n));
    double integral = 0.0;
    for (int i = 0; i < n; ++i) integral += (i == 0 || i == n - 1 ? 0.5 : 1.0) * std::exp(lp(i));
    integral *= dx;
    EXPECT_NEAR(integral, 1.0, 1e-3) << "h=" << hv;
  }
}

TEST(Flow, TwoDimensionalDensityIntegratesToOne) {
  FlowStack f = random_flow(2, 1, 4, 8, 41, 0.6);
  Eigen::MatrixXd h = Eigen::MatrixXd::Constant(1, 1, 0.7);
  std::mt19937_64 rng(3);
  auto samples = f.sample(h.col(0), 4000, rng);
  Eigen::Vector2d lo = samples[0].value, hi = samples[0].value;
  for (const auto& s : samples) {
    lo = lo.cwiseMin(s.value);
    hi = hi.cwiseMax(s.value);
  }
  const Eigen::Vector2d pad = 0.75 * (hi - lo);
  lo -= pad;
  hi += pad;
  const int n = 801;
  const Eigen::Vector2d d = (hi - lo) / (n - 1);
  Eigen::MatrixXd grid(2, n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) grid.col(i * n + j) << lo(0) + i * d(0), lo(1) + j * d(1);
  Eigen::RowVectorXd lp = f.log_density(grid, h.replicate(1, n * n));
  double integral = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double w = (i == 0 || i == n - 1 ? 0.5 : 1.0) * (j == 0 || j == n - 1 ? 0.5 : 1.0);
      integral += w * std::exp(lp(i * n + j));
    }
  integral *= d(0) * d(1);
  EXPECT_NEAR(integral, 1.0, 1e-3);
}

TEST(Flow, SamplingIdentityFlowIsStandardNormal) {
  FlowStack f({6, 2, 2, 4, 3.0});
  std::mt19937_64 init(5);
  f.init(init, true);
  std::mt19937_64 rng(6);
  const int n = 4000;
  auto s = f.sample(Eigen::VectorXd::Zero(2), n, rng);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(6);
  for (const auto& x : s) mean += x.value;
  mean /= n;
  EXPECT_LE(mean.cwiseAbs().maxCoeff(), 5.0 / std::sqrt(static_cast<double>(n)));
}

TEST(Flow, SamplingIsSeededAndSelfConsistent) {
  FlowStack f = random_flow(10, 3, 4, 12, 55);
  Eigen::VectorXd h = Eigen::VectorXd::LinSpaced(3, -1, 1);
  std::mt19937_64 r1(9), r2(9);
  auto a = f.sample(h, 50, r1), b = f.sample(h, 50, r2);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(a[i].value, b[i].value);
    EXPECT_EQ(a[i].log_prob, b[i].log_prob);
    EXPECT_NEAR(a[i].log_prob, f.log_density(a[i].value, h), 1e-8);
  }
  EXPECT_THROW(f.sample(h, 0, r1), ShapeError);
}

TEST(Flow, NllGradientsMatchFiniteDifferences) {
  FlowStack f = random_flow(6, 3, 3, 5, 77, 0.8);
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 4), h = Eigen::MatrixXd::Random(3, 4);
  auto loss = [&] { return -f.log_density(x, h).mean(); };
  nn::ParamList ps;
  f.collect(ps);
  nn::zero_grads(ps);
  FlowStack::Cache cache;
  Eigen::RowVectorXd lp = f.log_density(x, h, &cache);
  Eigen::MatrixXd dh = f.backward(cache, Eigen::RowVectorXd::Constant(4, -0.25));
  std::vector<Eigen::MatrixXd> analytic;
  for (auto* p : ps) analytic.push_back(p->grad);
  for (const auto& c : fd::check_gradients(ps, analytic, loss, 1e-3)) {
    EXPECT_LE(c.rel_err, 1e-4) << c.name;
  }
  Eigen::MatrixXd num = fd::numeric_gradient(h, loss, 1e-3);
  EXPECT_LE(fd::relative_error(dh, num), 1e-4);
}
