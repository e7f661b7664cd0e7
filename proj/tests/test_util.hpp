#ifndef APRUNE_TESTS_TEST_UTIL_HPP_
#define APRUNE_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <random>
#include <vector>

#include "aprune/tensor.hpp"

namespace testutil {

inline std::vector<float> random_values(int64_t n, uint32_t seed,
                                        float lo = -1.0f, float hi = 1.0f) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(static_cast<size_t>(n));
  for (auto& x : v) x = dist(rng);
  return v;
}

inline aprune::Tensor random_tensor(const aprune::Shape& shape, uint32_t seed,
                                    bool requires_grad = false, float lo = -1.0f,
                                    float hi = 1.0f) {
  return aprune::Tensor::from_data(
      shape, random_values(aprune::shape_numel(shape), seed, lo, hi),
      requires_grad);
}

// Central differences against a forward-only loss evaluation. The loss
// closure must read `param` fresh on every call.
template <typename F>
std::vector<double> fd_grad(std::vector<float>& param, F&& loss_value,
                            double eps = 1e-2) {
  std::vector<double> g(param.size());
  for (size_t i = 0; i < param.size(); ++i) {
    const float keep = param[i];
    param[i] = static_cast<float>(keep + eps);
    const double lp = loss_value();
    param[i] = static_cast<float>(keep - eps);
    const double lm = loss_value();
    param[i] = keep;
    g[i] = (lp - lm) / (2.0 * eps);
  }
  return g;
}

// Forward passes run in float32, so differences carry a few ulps of noise on
// top of the O(eps^2) truncation term; compare with a relative band plus an
// absolute floor.
inline bool grad_close(const std::vector<float>& analytic,
                       const std::vector<double>& numeric,
                       double rel = 2e-2, double abs_floor = 2e-3) {
  if (analytic.size() != numeric.size()) return false;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double b = numeric[i];
    const double tol = abs_floor + rel * std::max(std::fabs(a), std::fabs(b));
    if (std::fabs(a - b) > tol) return false;
  }
  return true;
}

}  // namespace testutil

#endif  // APRUNE_TESTS_TEST_UTIL_HPP_
