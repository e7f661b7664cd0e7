#ifndef APRUNE_REGULARIZERS_HPP_
#define APRUNE_REGULARIZERS_HPP_

#include <vector>

#include "aprune/arch.hpp"
#include "aprune/indicators.hpp"
#include "aprune/tensor.hpp"

namespace aprune {

struct RegularizerConfig {
  double lambda_flops = 2.0;
  double epsilon = 0.05;
  double lambda_sym = 0.0;  // 0.01 on residual nets, set by the config layer
  double lambda_lasso = 0.0;
  double target_flops = 0.0;  // F, absolute multiply-accumulates

  void validate(long long unpruned_flops) const;
};

namespace reg {

// Graph versions: scalar tensors whose gradients flow to alpha.

// Sum of |H_T(alpha)| over every channel of every site.
Tensor lasso(const IndicatorSet& set);

// Expected pruned cost: per layer, p_l * (soft input width) * (soft output
// width), with ungated dimensions contributing their full channel count and
// depthwise layers counting their single shared width once.
Tensor flops_expectation(const IndicatorSet& set,
                         const ArchitectureSpec& spec);

// log(E) above the target, -log(E) below the dead zone [(1-eps)F, F],
// exactly zero inside it.
Tensor flops_regularizer(const Tensor& e, double target, double epsilon);

// Sum over residual pairs of |soft width in - soft width out|.
Tensor symmetry(const IndicatorSet& set,
                const std::vector<ResidualPair>& pairs);

// lambda-weighted sum of the active penalties, ready to add to the
// validation loss.
Tensor total_penalty(const IndicatorSet& set, const ArchitectureSpec& spec,
                     const RegularizerConfig& cfg);

// Double-precision twins of the values above, used for metrics, reports,
// and golden checks. The graph ops are tested to agree with these.
double lasso_value(const IndicatorSet& set);
double flops_expectation_value(const IndicatorSet& set,
                               const ArchitectureSpec& spec);
double flops_regularizer_value(double e, double target, double epsilon);
double symmetry_value(const IndicatorSet& set,
                      const std::vector<ResidualPair>& pairs);

}  // namespace reg

}  // namespace aprune

#endif  // APRUNE_REGULARIZERS_HPP_
