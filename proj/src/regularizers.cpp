#include "aprune/regularizers.hpp"

#include <cmath>

#include "aprune/errors.hpp"
#include "aprune/ops.hpp"

namespace aprune {

void RegularizerConfig::validate(long long unpruned_flops) const {
  if (epsilon <= 0.0 || epsilon >= 1.0)
    throw ConfigError("epsilon must lie in (0,1), got " +
                      std::to_string(epsilon));
  if (lambda_flops != 0.0) {
    if (target_flops <= 0.0)
      throw ConfigError("FLOPs penalty is active but target_flops is " +
                        std::to_string(target_flops));
    if (target_flops > (double)unpruned_flops)
      throw ConfigError("target_flops " + std::to_string(target_flops) +
                        " exceeds the unpruned cost " +
                        std::to_string(unpruned_flops));
  }
  if (lambda_flops < 0.0 || lambda_sym < 0.0 || lambda_lasso < 0.0)
    throw ConfigError("regularizer weights must be non-negative");
}

namespace reg {

namespace {

// Per-layer multiplier p_l = h*w*k^2 (1 for the classifier).
double layer_price(const LayerDesc& l) {
  if (l.kind == LayerKind::kLinear) return 1.0;
  return (double)l.h * l.w * l.k * l.k;
}

// Soft channel sums per site, each built once and shared across terms.
std::vector<Tensor> soft_widths(const IndicatorSet& set) {
  std::vector<Tensor> s(set.num_sites());
  for (int i = 0; i < set.num_sites(); ++i)
    s[i] = ops::sum(set.relaxed(i));
  return s;
}

double soft_width_value(const IndicatorSet& set, int site) {
  double acc = 0.0;
  for (float a : set.alpha(site).tensor.data())
    acc += relaxed_indicator(a, set.temperature());
  return acc;
}

}  // namespace

Tensor lasso(const IndicatorSet& set) {
  Tensor acc = Tensor::zeros({1});
  for (int i = 0; i < set.num_sites(); ++i)
    acc = ops::add(acc, ops::sum(ops::abs(set.relaxed(i))));
  return acc;
}

double lasso_value(const IndicatorSet& set) {
  double acc = 0.0;
  for (int i = 0; i < set.num_sites(); ++i)
    for (float a : set.alpha(i).tensor.data())
      acc += std::fabs(relaxed_indicator(a, set.temperature()));
  return acc;
}

Tensor flops_expectation(const IndicatorSet& set,
                         const ArchitectureSpec& spec) {
  if (set.num_sites() != (int)spec.sites.size())
    throw ShapeError("flops_expectation: indicator set has " +
                     std::to_string(set.num_sites()) + " sites, spec has " +
                     std::to_string(spec.sites.size()));
  auto widths = soft_widths(set);
  Tensor acc = Tensor::zeros({1});
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::kPool) continue;
    const double p = layer_price(l);
    if (l.kind == LayerKind::kDwConv) {
      // one shared width, counted once
      Tensor term = l.in_site >= 0
                        ? ops::scale(widths[l.in_site], (float)p)
                        : Tensor::full({1}, (float)(p * l.c_in));
      acc = ops::add(acc, term);
      continue;
    }
    Tensor term;
    if (l.in_site >= 0 && l.out_site >= 0) {
      term = ops::scale(ops::mul(widths[l.in_site], widths[l.out_site]),
                        (float)p);
    } else if (l.in_site >= 0) {
      term = ops::scale(widths[l.in_site], (float)(p * l.c_out));
    } else if (l.out_site >= 0) {
      term = ops::scale(widths[l.out_site], (float)(p * l.c_in));
    } else {
      term = Tensor::full({1}, (float)(p * l.c_in * l.c_out));
    }
    acc = ops::add(acc, term);
  }
  return acc;
}

double flops_expectation_value(const IndicatorSet& set,
                               const ArchitectureSpec& spec) {
  if (set.num_sites() != (int)spec.sites.size())
    throw ShapeError("flops_expectation: indicator set has " +
                     std::to_string(set.num_sites()) + " sites, spec has " +
                     std::to_string(spec.sites.size()));
  std::vector<double> widths(set.num_sites());
  for (int i = 0; i < set.num_sites(); ++i)
    widths[i] = soft_width_value(set, i);
  double acc = 0.0;
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::kPool) continue;
    const double p = layer_price(l);
    if (l.kind == LayerKind::kDwConv) {
      acc += p * (l.in_site >= 0 ? widths[l.in_site] : (double)l.c_in);
      continue;
    }
    const double s_in = l.in_site >= 0 ? widths[l.in_site] : (double)l.c_in;
    const double s_out =
        l.out_site >= 0 ? widths[l.out_site] : (double)l.c_out;
    acc += p * s_in * s_out;
  }
  return acc;
}

Tensor flops_regularizer(const Tensor& e, double target, double epsilon) {
  if (target <= 0.0)
    throw ConfigError("FLOPs target must be positive, got " +
                      std::to_string(target));
  const double ev = e.item();
  if (ev <= 0.0)
    throw ConfigError("FLOPs expectation must be positive, got " +
                      std::to_string(ev));
  if (ev / target > 1.0) return ops::log(e);
  if (ev / target < 1.0 - epsilon) return ops::scale(ops::log(e), -1.0f);
  return Tensor::zeros({1});  // dead zone: flat, no gradient
}

double flops_regularizer_value(double e, double target, double epsilon) {
  if (target <= 0.0)
    throw ConfigError("FLOPs target must be positive, got " +
                      std::to_string(target));
  if (e <= 0.0)
    throw ConfigError("FLOPs expectation must be positive, got " +
                      std::to_string(e));
  if (e / target > 1.0) return std::log(e);
  if (e / target < 1.0 - epsilon) return -std::log(e);
  return 0.0;
}

Tensor symmetry(const IndicatorSet& set,
                const std::vector<ResidualPair>& pairs) {
  auto widths = soft_widths(set);
  Tensor acc = Tensor::zeros({1});
  for (const auto& p : pairs)
    acc = ops::add(
        acc, ops::abs(ops::sub(widths[p.site_in], widths[p.site_out])));
  return acc;
}

double symmetry_value(const IndicatorSet& set,
                      const std::vector<ResidualPair>& pairs) {
  double acc = 0.0;
  for (const auto& p : pairs)
    acc += std::fabs(soft_width_value(set, p.site_in) -
                     soft_width_value(set, p.site_out));
  return acc;
}

Tensor total_penalty(const IndicatorSet& set, const ArchitectureSpec& spec,
                     const RegularizerConfig& cfg) {
  Tensor acc = Tensor::zeros({1});
  if (cfg.lambda_flops != 0.0) {
    Tensor e = flops_expectation(set, spec);
    acc = ops::add(acc, ops::scale(flops_regularizer(e, cfg.target_flops,
                                                     cfg.epsilon),
                                   (float)cfg.lambda_flops));
  }
  if (cfg.lambda_sym != 0.0 && !spec.residual_pairs.empty())
    acc = ops::add(acc, ops::scale(symmetry(set, spec.residual_pairs),
                                   (float)cfg.lambda_sym));
  if (cfg.lambda_lasso != 0.0)
    acc = ops::add(acc, ops::scale(lasso(set), (float)cfg.lambda_lasso));
  return acc;
}

}  // namespace reg

}  // namespace aprune
