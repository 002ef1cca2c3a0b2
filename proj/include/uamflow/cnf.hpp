#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "uamflow/errors.hpp"
#include "uamflow/nn.hpp"

namespace uamflow::cnf {

using nn::MatrixXd;
using nn::ParamList;
using nn::VectorXd;
using RowVectorXd = Eigen::RowVectorXd;

inline constexpr int kDefaultLayers = 8;
inline constexpr int kDefaultHidden = 128;
inline constexpr double kDefaultScaleClamp = 3.0;

struct FlowDims {
  int dim = 180;  // D
  int cond = 64;  // width of the condition vector
  int layers = kDefaultLayers;
  int hidden = kDefaultHidden;
  double scale_clamp = kDefaultScaleClamp;
};

/// Pass-through block size. A one-dimensional flow has nothing to pass
/// through and conditions on h alone.
inline int split_index(int dim) { return dim / 2; }

inline void check_finite(const MatrixXd& m, const char* where) {
  if (!m.allFinite()) throw NumericOverflow(std::string("non-finite value in ") + where);
}

/// Conditional affine coupling:
///   y[0:d]  = x[0:d]
///   y[d:D]  = x[d:D] * exp(s(x[0:d] ++ h)) + t(x[0:d] ++ h)
/// with s soft-clamped to [-c, c] as c * tanh(raw / c).
class CouplingLayer {
 public:
  struct InverseCache {
    MatrixXd s, xb;
    nn::Mlp3::Cache scale, shift;
  };

  CouplingLayer() = default;
  CouplingLayer(const std::string& name, int dim, int cond, int hidden, double clamp)
      : dim_(dim), d_(split_index(dim)), cond_(cond), clamp_(clamp),
        scale_(name + ".s", split_index(dim) + cond, hidden, dim - split_index(dim)),
        shift_(name + ".t", split_index(dim) + cond, hidden, dim - split_index(dim)) {
    if (dim < 1 || cond < 0 || d_ + cond < 1 || !(clamp > 0.0)) {
      throw ShapeError("coupling layer: bad dimensions");
    }
  }

  int dim() const { return dim_; }
  int split() const { return d_; }
  int cond() const { return cond_; }
  double clamp() const { return clamp_; }

  void init(std::mt19937_64& rng, bool zero_last) {
    scale_.init(rng, zero_last);
    shift_.init(rng, zero_last);
  }

  nn::Mlp3& scale_net() { return scale_; }
  nn::Mlp3& shift_net() { return shift_; }

  /// Data-to-base direction; `s_sum` receives the per-sample log|det| of the
  /// forward map (sum of s over the transformed block).
  MatrixXd inverse(const MatrixXd& y, const MatrixXd& h, RowVectorXd* s_sum = nullptr,
                   InverseCache* cache = nullptr) const {
    check_shapes(y, h);
    MatrixXd u = condition_input(y, h);
    MatrixXd raw = scale_.forward(u, cache ? &cache->scale : nullptr);
    MatrixXd s = soft_clamp(raw);
    MatrixXd t = shift_.forward(u, cache ? &cache->shift : nullptr);
    MatrixXd x = y;
    x.bottomRows(dim_ - d_) =
        (y.bottomRows(dim_ - d_) - t).cwiseProduct((-s).array().exp().matrix());
    check_finite(x, "coupling inverse");
    if (s_sum) *s_sum = s.colwise().sum();
    if (cache) {
      cache->xb = x.bottomRows(dim_ - d_);
      cache->s = std::move(s);
    }
    return x;
  }

  /// Base-to-data direction; `logdet` receives the per-sample log|det|.
  MatrixXd forward(const MatrixXd& x, const MatrixXd& h, RowVectorXd* logdet = nullptr) const {
    check_shapes(x, h);
    MatrixXd u = condition_input(x, h);
    MatrixXd s = soft_clamp(scale_.forward(u));
    MatrixXd t = shift_.forward(u);
    MatrixXd y = x;
    y.bottomRows(dim_ - d_) = x.bottomRows(dim_ - d_).cwiseProduct(s.array().exp().matrix()) + t;
    check_finite(y, "coupling forward");
    if (logdet) *logdet = s.colwise().sum();
    return y;
  }

  /// Given d(loss)/d(inverse output) and d(loss)/d(s_sum), accumulate
  /// parameter gradients and return (d input, d condition).
  std::pair<MatrixXd, MatrixXd> backward_inverse(const InverseCache& c, const MatrixXd& dx,
                                                 const RowVectorXd& ds_sum) {
    const int blk = dim_ - d_;
    MatrixXd es = (-c.s).array().exp().matrix();
    MatrixXd dyb = dx.bottomRows(blk).cwiseProduct(es);
    MatrixXd dt = -dyb;
    MatrixXd ds = -dx.bottomRows(blk).cwiseProduct(c.xb);
    ds.rowwise() += ds_sum;
    MatrixXd sc = c.s / clamp_;
    MatrixXd draw = ds.cwiseProduct((1.0 - sc.array().square()).matrix());
    MatrixXd du = scale_.backward(c.scale, draw) + shift_.backward(c.shift, dt);
    MatrixXd dy(dim_, dx.cols());
    dy.topRows(d_) = dx.topRows(d_) + du.topRows(d_);
    dy.bottomRows(blk) = dyb;
    return {std::move(dy), du.bottomRows(cond_)};
  }

  void collect(ParamList& out) {
    scale_.collect(out);
    shift_.collect(out);
  }

 private:
  void check_shapes(const MatrixXd& x, const MatrixXd& h) const {
    if (x.rows() != dim_ || h.rows() != cond_ || x.cols() != h.cols()) {
      throw ShapeError("coupling layer: expected " + std::to_string(dim_) + "+" +
                       std::to_string(cond_) + " rows, got " + std::to_string(x.rows()) + "+" +
                       std::to_string(h.rows()));
    }
  }

  MatrixXd condition_input(const MatrixXd& x, const MatrixXd& h) const {
    MatrixXd u(d_ + cond_, x.cols());
    u.topRows(d_) = x.topRows(d_);
    u.bottomRows(cond_) = h;
    return u;
  }

  MatrixXd soft_clamp(const MatrixXd& raw) const {
    const double c = clamp_;
    return raw.unaryExpr([c](double v) { return c * std::tanh(v / c); });
  }

  int dim_ = 0, d_ = 0, cond_ = 0;
  double clamp_ = kDefaultScaleClamp;
  nn::Mlp3 scale_, shift_;
};

// Rotation by the split index; for even D this swaps the two halves.
inline MatrixXd permute(const MatrixXd& v, int d) {
  const Eigen::Index D = v.rows();
  MatrixXd out(D, v.cols());
  out.topRows(D - d) = v.bottomRows(D - d);
  out.bottomRows(d) = v.topRows(d);
  return out;
}

inline MatrixXd unpermute(const MatrixXd& w, int d) {
  const Eigen::Index D = w.rows();
  MatrixXd out(D, w.cols());
  out.topRows(d) = w.bottomRows(d);
  out.bottomRows(D - d) = w.topRows(D - d);
  return out;
}

inline RowVectorXd standard_normal_logpdf(const MatrixXd& z) {
  const double c = 0.5 * static_cast<double>(z.rows()) * std::log(2.0 * std::numbers::pi);
  RowVectorXd out = -0.5 * z.colwise().squaredNorm();
  out.array() -= c;
  return out;
}

struct Sample {
  VectorXd value;
  double log_prob = 0.0;
};

/// x = f_K o P o f_{K-1} o ... o P o f_1 (z0), z0 ~ N(0, I).
class FlowStack {
 public:
  struct Cache {
    std::vector<CouplingLayer::InverseCache> layers;  // indexed like layers_
    MatrixXd z0;
  };

  FlowStack() = default;
  explicit FlowStack(const FlowDims& dims) : dims_(dims) {
    if (dims.layers < 1) throw ShapeError("flow: need at least one coupling layer");
    for (int i = 0; i < dims.layers; ++i) {
      layers_.emplace_back("flow.c" + std::to_string(i), dims.dim, dims.cond, dims.hidden,
                           dims.scale_clamp);
    }
  }

  const FlowDims& dims() const { return dims_; }
  int dim() const { return dims_.dim; }
  int cond() const { return dims_.cond; }
  std::vector<CouplingLayer>& layers() { return layers_; }
  const std::vector<CouplingLayer>& layers() const { return layers_; }

  void init(std::mt19937_64& rng, bool zero_last = true) {
    for (auto& l : layers_) l.init(rng, zero_last);
  }

  /// Base to data. Returns x; `logdet` receives the summed log|det|.
  MatrixXd forward(const MatrixXd& z0, const MatrixXd& h, RowVectorXd* logdet = nullptr) const {
    const int d = split_index(dims_.dim);
    RowVectorXd total = RowVectorXd::Zero(z0.cols()), ld;
    MatrixXd x = z0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (i > 0) x = permute(x, d);
      x = layers_[i].forward(x, h, &ld);
      total += ld;
    }
    if (logdet) *logdet = std::move(total);
    return x;
  }

  /// Data to base. `logdet` receives the summed log|det| of the forward map.
  MatrixXd inverse(const MatrixXd& x, const MatrixXd& h, RowVectorXd* logdet = nullptr,
                   Cache* cache = nullptr) const {
    const int d = split_index(dims_.dim);
    RowVectorXd total = RowVectorXd::Zero(x.cols()), ld;
    if (cache) cache->layers.resize(layers_.size());
    MatrixXd z = x;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      z = layers_[i].inverse(z, h, &ld, cache ? &cache->layers[i] : nullptr);
      total += ld;
      if (i > 0) z = unpermute(z, d);
    }
    if (cache) cache->z0 = z;
    if (logdet) *logdet = std::move(total);
    return z;
  }

  /// Per-column log p(x | h).
  RowVectorXd log_density(const MatrixXd& x, const MatrixXd& h, Cache* cache = nullptr) const {
    RowVectorXd ld;
    MatrixXd z0 = inverse(x, h, &ld, cache);
    RowVectorXd lp = standard_normal_logpdf(z0) - ld;
    if (!lp.allFinite()) throw NumericOverflow("non-finite log density");
    return lp;
  }

  double log_density(const VectorXd& x, const VectorXd& h) const {
    return log_density(MatrixXd(x), MatrixXd(h))(0);
  }

  /// Given d(loss)/d(log p) per column, accumulate parameter gradients and
  /// return d(loss)/d(h).
  MatrixXd backward(const Cache& cache, const RowVectorXd& dlogp) {
    const int d = split_index(dims_.dim);
    MatrixXd dz = -cache.z0;
    dz.array().rowwise() *= dlogp.array();
    const RowVectorXd ds_sum = -dlogp;
    MatrixXd dh = MatrixXd::Zero(dims_.cond, dz.cols());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (i > 0) dz = permute(dz, d);
      auto [dy, dhi] = layers_[i].backward_inverse(cache.layers[i], dz, ds_sum);
      dz = std::move(dy);
      dh += dhi;
    }
    return dh;
  }

  /// n samples conditioned on h, each with its exact log-density.
  std::vector<Sample> sample(const VectorXd& h, int n, std::mt19937_64& rng) const {
    if (n < 1) throw ShapeError("flow: sample count must be positive");
    if (h.size() != dims_.cond) throw ShapeError("flow: condition has wrong width");
    std::normal_distribution<double> normal(0.0, 1.0);
    MatrixXd z0(dims_.dim, n);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < dims_.dim; ++i) z0(i, j) = normal(rng);
    }
    MatrixXd hh = h.replicate(1, n);
    RowVectorXd ld;
    MatrixXd x = forward(z0, hh, &ld);
    RowVectorXd lp = standard_normal_logpdf(z0) - ld;
    std::vector<Sample> out(n);
    for (int j = 0; j < n; ++j) out[j] = {x.col(j), lp(j)};
    return out;
  }

  void collect(ParamList& out) {
    for (auto& l : layers_) l.collect(out);
  }

 private:
  FlowDims dims_;
  std::vector<CouplingLayer> layers_;
};

}  // namespace uamflow::cnf
