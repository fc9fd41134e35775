#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "semsic/tensor.hpp"

namespace testing {

using semsic::Matrix;
using semsic::ag::Tensor;

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (auto& v : m.data) v = nd(rng);
  return m;
}

// Largest relative error between analytic and central-difference gradients of
// loss() with respect to every entry of each parameter.
inline double max_grad_error(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                             double step = 1e-5) {
  for (auto& p : params) p.zero_grad();
  loss().backward();
  double worst = 0.0;
  for (auto& p : params) {
    const Matrix analytic = p.grad().data.empty() ? Matrix(p.rows(), p.cols()) : p.grad();
    for (std::size_t i = 0; i < p.value().size(); ++i) {
      const double saved = p.value().data[i];
      p.mutable_value().data[i] = saved + step;
      double up, down;
      {
        semsic::ag::NoGradGuard g;
        up = loss().item();
        p.mutable_value().data[i] = saved - step;
        down = loss().item();
      }
      p.mutable_value().data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.data[i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace testing
