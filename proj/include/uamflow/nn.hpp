#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "uamflow/errors.hpp"

// Small reverse-mode building blocks. Activations are column-major batches:
// one column per sample. Every layer exposes forward (returning what its
// backward needs) and backward (accumulating into Param::grad and returning
// the gradient with respect to its input).
namespace uamflow::nn {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Param {
  std::string name;
  MatrixXd value;
  MatrixXd grad;

  Param() = default;
  Param(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(MatrixXd::Zero(rows, cols)), grad(MatrixXd::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

using ParamList = std::vector<Param*>;

inline void uniform_init(Param& p, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = u(rng);
}

inline void zero_grads(const ParamList& ps) {
  for (auto* p : ps) p->zero_grad();
}

inline std::size_t count_scalars(const ParamList& ps) {
  std::size_t n = 0;
  for (auto* p : ps) n += static_cast<std::size_t>(p->value.size());
  return n;
}

inline MatrixXd sigmoid(const MatrixXd& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

inline MatrixXd tanh(const MatrixXd& x) {
  return x.unaryExpr([](double v) { return std::tanh(v); });
}

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out)
      : W_(name + ".W", out, in), b_(name + ".b", out, 1) {}

  int in() const { return static_cast<int>(W_.value.cols()); }
  int out() const { return static_cast<int>(W_.value.rows()); }

  void init(std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in()));
    uniform_init(W_, bound, rng);
    uniform_init(b_, bound, rng);
  }

  void zero_init() {
    W_.value.setZero();
    b_.value.setZero();
  }

  MatrixXd forward(const MatrixXd& x) const {
    if (x.rows() != in()) throw ShapeError(W_.name + ": input has wrong width");
    MatrixXd y = W_.value * x;
    y.colwise() += b_.value.col(0);
    return y;
  }

  MatrixXd backward(const MatrixXd& x, const MatrixXd& dy) {
    W_.grad.noalias() += dy * x.transpose();
    b_.grad += dy.rowwise().sum();
    return W_.value.transpose() * dy;
  }

  void collect(ParamList& out) {
    out.push_back(&W_);
    out.push_back(&b_);
  }

  Param& weight() { return W_; }
  Param& bias() { return b_; }

 private:
  Param W_, b_;
};

// Three fully connected layers with tanh between them.
class Mlp3 {
 public:
  struct Cache {
    MatrixXd x, a1, a2;
  };

  Mlp3() = default;
  Mlp3(const std::string& name, int in, int hidden, int out)
      : l1_(name + ".l1", in, hidden), l2_(name + ".l2", hidden, hidden), l3_(name + ".l3", hidden, out) {}

  int in() const { return l1_.in(); }
  int out() const { return l3_.out(); }

  void init(std::mt19937_64& rng, bool zero_last) {
    l1_.init(rng);
    l2_.init(rng);
    l3_.init(rng);
    if (zero_last) l3_.zero_init();
  }

  MatrixXd forward(const MatrixXd& x, Cache* cache = nullptr) const {
    MatrixXd a1 = tanh(l1_.forward(x));
    MatrixXd a2 = tanh(l2_.forward(a1));
    MatrixXd y = l3_.forward(a2);
    if (cache) {
      cache->x = x;
      cache->a1 = std::move(a1);
      cache->a2 = std::move(a2);
    }
    return y;
  }

  MatrixXd backward(const Cache& c, const MatrixXd& dy) {
    MatrixXd da2 = l3_.backward(c.a2, dy);
    MatrixXd dz2 = da2.cwiseProduct((1.0 - c.a2.array().square()).matrix());
    MatrixXd da1 = l2_.backward(c.a1, dz2);
    MatrixXd dz1 = da1.cwiseProduct((1.0 - c.a1.array().square()).matrix());
    return l1_.backward(c.x, dz1);
  }

  void collect(ParamList& out) {
    l1_.collect(out);
    l2_.collect(out);
    l3_.collect(out);
  }

 private:
  Linear l1_, l2_, l3_;
};

}  // namespace uamflow::nn
