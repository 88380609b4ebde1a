#pragma once

#include <random>

#include <Eigen/Dense>

#include "otmpc/transport.hpp"

namespace testing_support {

inline Eigen::MatrixXd uniform_matrix(std::mt19937_64& gen, Eigen::Index rows, Eigen::Index cols,
                                      double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = u(gen);
  return m;
}

/// Random strictly positive simplex.
inline otmpc::Simplex random_simplex(std::mt19937_64& gen, Eigen::Index n) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = u(gen);
  return otmpc::Simplex(w / w.sum());
}

}  // namespace testing_support
