#pragma once

#include <Eigen/Dense>
#include <exception>
#include <random>
#include <string>
#include <utility>

namespace testsupport {

/// Runs fn and returns the exception message, or "" when nothing is thrown.
template <typename Fn>
std::string thrown_message(Fn&& fn) {
  try {
    std::forward<Fn>(fn)();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

/// Deterministic standard-normal vector.
inline Eigen::VectorXd gaussian(Eigen::Index n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

}  // namespace testsupport
