#pragma once

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

#include "uamflow/errors.hpp"
#include "uamflow/nn.hpp"

namespace uamflow::seqenc {

using nn::MatrixXd;
using nn::Param;
using nn::ParamList;
using nn::VectorXd;

inline constexpr int kDefaultHidden = 64;
inline constexpr int kDefaultLayers = 3;

/// Gated recurrent cell:
///   z  = sigmoid(Wz x + Uz h + bz)
///   r  = sigmoid(Wr x + Ur h + br)
///   n  = tanh(Wn x + Un (r * h) + bn)
///   h' = (1 - z) * h + z * n
class GruCell {
 public:
  struct Cache {
    MatrixXd x, h, z, r, n;
  };

  GruCell() = default;
  GruCell(const std::string& name, int in, int hidden)
      : Wz_(name + ".Wz", hidden, in), Uz_(name + ".Uz", hidden, hidden), bz_(name + ".bz", hidden, 1),
        Wr_(name + ".Wr", hidden, in), Ur_(name + ".Ur", hidden, hidden), br_(name + ".br", hidden, 1),
        Wn_(name + ".Wn", hidden, in), Un_(name + ".Un", hidden, hidden), bn_(name + ".bn", hidden, 1) {}

  int in() const { return static_cast<int>(Wz_.value.cols()); }
  int hidden() const { return static_cast<int>(Wz_.value.rows()); }

  void init(std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden()));
    for (Param* p : params_()) nn::uniform_init(*p, bound, rng);
  }

  MatrixXd forward(const MatrixXd& x, const MatrixXd& h, Cache* cache = nullptr) const {
    if (x.rows() != in() || h.rows() != hidden() || x.cols() != h.cols()) {
      throw ShapeError("gru cell: input/hidden shape mismatch");
    }
    MatrixXd az = Wz_.value * x + Uz_.value * h;
    az.colwise() += bz_.value.col(0);
    MatrixXd ar = Wr_.value * x + Ur_.value * h;
    ar.colwise() += br_.value.col(0);
    MatrixXd z = nn::sigmoid(az);
    MatrixXd r = nn::sigmoid(ar);
    MatrixXd an = Wn_.value * x + Un_.value * r.cwiseProduct(h);
    an.colwise() += bn_.value.col(0);
    MatrixXd n = nn::tanh(an);
    MatrixXd out = h + z.cwiseProduct(n - h);
    if (cache) *cache = {x, h, std::move(z), std::move(r), std::move(n)};
    return out;
  }

  /// Returns (d input, d previous hidden).
  std::pair<MatrixXd, MatrixXd> backward(const Cache& c, const MatrixXd& dout) {
    const auto one = [](const MatrixXd& m) { return MatrixXd::Ones(m.rows(), m.cols()); };
    MatrixXd dz = dout.cwiseProduct(c.n - c.h);
    MatrixXd dn = dout.cwiseProduct(c.z);
    MatrixXd dh = dout.cwiseProduct(one(c.z) - c.z);

    MatrixXd dan = dn.cwiseProduct(one(c.n) - c.n.cwiseProduct(c.n));
    MatrixXd rh = c.r.cwiseProduct(c.h);
    Wn_.grad.noalias() += dan * c.x.transpose();
    Un_.grad.noalias() += dan * rh.transpose();
    bn_.grad += dan.rowwise().sum();
    MatrixXd drh = Un_.value.transpose() * dan;
    MatrixXd dr = drh.cwiseProduct(c.h);
    dh += drh.cwiseProduct(c.r);
    MatrixXd dx = Wn_.value.transpose() * dan;

    MatrixXd daz = dz.cwiseProduct(c.z.cwiseProduct(one(c.z) - c.z));
    Wz_.grad.noalias() += daz * c.x.transpose();
    Uz_.grad.noalias() += daz * c.h.transpose();
    bz_.grad += daz.rowwise().sum();
    dh.noalias() += Uz_.value.transpose() * daz;
    dx.noalias() += Wz_.value.transpose() * daz;

    MatrixXd dar = dr.cwiseProduct(c.r.cwiseProduct(one(c.r) - c.r));
    Wr_.grad.noalias() += dar * c.x.transpose();
    Ur_.grad.noalias() += dar * c.h.transpose();
    br_.grad += dar.rowwise().sum();
    dh.noalias() += Ur_.value.transpose() * dar;
    dx.noalias() += Wr_.value.transpose() * dar;
    return {std::move(dx), std::move(dh)};
  }

  void collect(ParamList& out) {
    for (Param* p : params_()) out.push_back(p);
  }

 private:
  std::vector<Param*> params_() { return {&Wz_, &Uz_, &bz_, &Wr_, &Ur_, &br_, &Wn_, &Un_, &bn_}; }

  Param Wz_, Uz_, bz_, Wr_, Ur_, br_, Wn_, Un_, bn_;
};

/// Stacked recurrent encoder. The condition vector is the top layer's hidden
/// state after the last observation; the initial state is zero.
class GruEncoder {
 public:
  using Sequence = std::vector<MatrixXd>;  // one (features x batch) matrix per step

  struct Cache {
    std::vector<std::vector<GruCell::Cache>> steps;  // [layer][time]
  };

  GruEncoder() = default;
  GruEncoder(int input_width, int hidden = kDefaultHidden, int layers = kDefaultLayers) {
    if (input_width < 1 || hidden < 1 || layers < 1) throw ShapeError("encoder: bad dimensions");
    for (int l = 0; l < layers; ++l) {
      cells_.emplace_back("enc.gru" + std::to_string(l), l == 0 ? input_width : hidden, hidden);
    }
  }

  int input_width() const { return cells_.front().in(); }
  int hidden() const { return cells_.front().hidden(); }
  int layers() const { return static_cast<int>(cells_.size()); }

  void init(std::mt19937_64& rng) {
    for (auto& c : cells_) c.init(rng);
  }

  MatrixXd forward(const Sequence& xs, Cache* cache = nullptr) const {
    if (xs.empty()) throw ShapeError("encoder: empty observation sequence");
    const Eigen::Index B = xs.front().cols();
    if (cache) cache->steps.assign(cells_.size(), {});
    Sequence cur = xs;
    MatrixXd h;
    for (std::size_t l = 0; l < cells_.size(); ++l) {
      h = MatrixXd::Zero(hidden(), B);
      if (cache) cache->steps[l].resize(cur.size());
      for (std::size_t t = 0; t < cur.size(); ++t) {
        h = cells_[l].forward(cur[t], h, cache ? &cache->steps[l][t] : nullptr);
        cur[t] = h;
      }
    }
    return h;
  }

  /// Single observation, rows = time, columns = channels.
  VectorXd encode(const Eigen::Ref<const MatrixXd>& features) const {
    if (features.cols() != input_width()) {
      throw ShapeError("encoder: feature width " + std::to_string(features.cols()) +
                       " does not match " + std::to_string(input_width()));
    }
    Sequence xs;
    xs.reserve(features.rows());
    for (Eigen::Index t = 0; t < features.rows(); ++t) xs.push_back(features.row(t).transpose());
    return forward(xs).col(0);
  }

  /// Backpropagates d(top final hidden); returns the gradient with respect
  /// to each input step.
  Sequence backward(const Cache& cache, const MatrixXd& dh_top) {
    const std::size_t T = cache.steps.front().size();
    Sequence dout(T, MatrixXd::Zero(dh_top.rows(), dh_top.cols()));
    dout.back() = dh_top;
    for (std::size_t l = cells_.size(); l-- > 0;) {
      Sequence din(T);
      MatrixXd carry = MatrixXd::Zero(hidden(), dh_top.cols());
      for (std::size_t t = T; t-- > 0;) {
        auto [dx, dh] = cells_[l].backward(cache.steps[l][t], dout[t] + carry);
        din[t] = std::move(dx);
        carry = std::move(dh);
      }
      dout = std::move(din);
    }
    return dout;
  }

  void collect(ParamList& out) {
    for (auto& c : cells_) c.collect(out);
  }

 private:
  std::vector<GruCell> cells_;
};

}  // namespace uamflow::seqenc
