#pragma once

#include <Eigen/Dense>
#include <random>
#include <vector>

#include "uamflow/nn.hpp"
#include "uamflow/seqenc.hpp"

namespace uamflow::evalkit {

using nn::MatrixXd;
using nn::ParamList;

inline constexpr int kDefaultMlpHidden = 128;

// Autoregressive recurrent decoder: the condition vector is the initial
// hidden state, the first input is zero, and each step's predicted point is
// fed back as the next input.
class GruDecoder {
 public:
  struct Cache {
    std::vector<seqenc::GruCell::Cache> cells;
    std::vector<MatrixXd> hidden;
  };

  GruDecoder() = default;
  GruDecoder(int hidden, int future)
      : cell_("dec.gru", 3, hidden), out_("dec.out", hidden, 3), future_(future) {}

  int future() const { return future_; }

  void init(std::mt19937_64& rng) {
    cell_.init(rng);
    out_.init(rng);
  }

  /// h0: hidden x batch. Returns (3 * future) x batch, time-major.
  MatrixXd forward(const MatrixXd& h0, Cache* cache = nullptr) const {
    const Eigen::Index B = h0.cols();
    MatrixXd y(3 * future_, B);
    MatrixXd h = h0;
    MatrixXd in = MatrixXd::Zero(3, B);
    if (cache) {
      cache->cells.resize(future_);
      cache->hidden.resize(future_);
    }
    for (int t = 0; t < future_; ++t) {
      h = cell_.forward(in, h, cache ? &cache->cells[t] : nullptr);
      in = out_.forward(h);
      y.middleRows(3 * t, 3) = in;
      if (cache) cache->hidden[t] = h;
    }
    return y;
  }

  /// Returns d(loss)/d(h0).
  MatrixXd backward(const Cache& cache, const MatrixXd& dy) {
    const Eigen::Index B = dy.cols();
    MatrixXd dh = MatrixXd::Zero(cell_.hidden(), B);
    MatrixXd dnext = MatrixXd::Zero(3, B);
    for (int t = future_; t-- > 0;) {
      MatrixXd dout = dy.middleRows(3 * t, 3) + dnext;
      dh += out_.backward(cache.hidden[t], dout);
      auto [dx, dprev] = cell_.backward(cache.cells[t], dh);
      dnext = std::move(dx);
      dh = std::move(dprev);
    }
    return dh;
  }

  void collect(ParamList& out) {
    cell_.collect(out);
    out_.collect(out);
  }

 private:
  seqenc::GruCell cell_;
  nn::Linear out_;
  int future_ = 0;
};

class MlpDecoder {
 public:
  using Cache = nn::Mlp3::Cache;

  MlpDecoder() = default;
  MlpDecoder(int cond, int hidden, int future) : mlp_("dec.mlp", cond, hidden, 3 * future), future_(future) {}

  int future() const { return future_; }

  void init(std::mt19937_64& rng) { mlp_.init(rng, false); }

  MatrixXd forward(const MatrixXd& h, Cache* cache = nullptr) const { return mlp_.forward(h, cache); }

  MatrixXd backward(const Cache& cache, const MatrixXd& dy) { return mlp_.backward(cache, dy); }

  void collect(ParamList& out) { mlp_.collect(out); }

 private:
  nn::Mlp3 mlp_;
  int future_ = 0;
};

}  // namespace uamflow::evalkit
