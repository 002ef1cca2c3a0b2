#pragma once

// Central finite-difference oracle, independent of the analytic backward
// passes it is used to check.

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "uamflow/nn.hpp"

namespace uamflow::fd {

struct TensorCheck {
  std::string name;
  double rel_err = 0.0;
  double analytic_norm = 0.0;
};

// Norm-wise relative error between two gradient tensors. Tensors that are
// both numerically zero compare equal.
inline double relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const double denom = std::max(a.norm(), b.norm());
  if (denom < 1e-10) return 0.0;
  return (a - b).norm() / denom;
}

inline Eigen::MatrixXd numeric_gradient(Eigen::MatrixXd& value, const std::function<double()>& loss,
                                        double step) {
  Eigen::MatrixXd g(value.rows(), value.cols());
  for (Eigen::Index i = 0; i < value.size(); ++i) {
    const double orig = value.data()[i];
    value.data()[i] = orig + step;
    const double up = loss();
    value.data()[i] = orig - step;
    const double down = loss();
    value.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * step);
  }
  return g;
}

inline std::vector<TensorCheck> check_gradients(const nn::ParamList& params,
                                                const std::vector<Eigen::MatrixXd>& analytic,
                                                const std::function<double()>& loss, double step) {
  std::vector<TensorCheck> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::MatrixXd num = numeric_gradient(params[i]->value, loss, step);
    out.push_back({params[i]->name, relative_error(analytic[i], num), analytic[i].norm()});
  }
  return out;
}

}  // namespace uamflow::fd
