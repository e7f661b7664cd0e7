#ifndef APRUNE_INDICATORS_HPP_
#define APRUNE_INDICATORS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "aprune/tensor.hpp"

namespace aprune {

enum class ScheduleKind { kLinear, kCosine, kSmallT };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

struct TemperatureSchedule {
  ScheduleKind kind = ScheduleKind::kLinear;
  double t0 = 1.0;
  int n_max = 1;
};

// T(n) = T0 / sigma(n). sigma ramps from 1 at epoch 0 to 50 at N_max
// (100 for the smallT variant), so the relaxation sharpens as search runs.
double temperature_at(const TemperatureSchedule& schedule, int n);

// H_T(alpha) = sigmoid(alpha / T), evaluated in double with the
// overflow-safe branch. Rejects T <= 0: the hard step is only ever taken
// via binarize, never by evaluating at T = 0.
double relaxed_indicator(double alpha, double t);

// One prunable width in the network: the channels this site's alpha vector
// gates, plus the layers whose activations it masks (for error messages and
// the trace log header).
struct IndicatorSite {
  std::string name;
  int width = 0;
  std::vector<std::string> masked_layers;
};

// Per-site relaxation parameters alpha and the shared temperature.
class IndicatorSet {
 public:
  IndicatorSet() = default;
  // alpha ~ N(1, 0.1^2): every channel starts effectively on.
  IndicatorSet(std::vector<IndicatorSite> sites, uint32_t seed);

  int num_sites() const { return static_cast<int>(sites_.size()); }
  const IndicatorSite& site(int i) const { return sites_[i]; }
  const std::vector<IndicatorSite>& sites() const { return sites_; }

  Parameter& alpha(int i) { return alphas_[i]; }
  const Parameter& alpha(int i) const { return alphas_[i]; }
  std::vector<Parameter>& alphas() { return alphas_; }

  double temperature() const { return temperature_; }
  void set_temperature(double t);

  // Graph op: relaxed indicator vector H_T(alpha) for one site.
  Tensor relaxed(int i) const;

  // Hard keep-masks from the T -> 0 limit: keep iff alpha > 0. Ties at
  // exactly 0 drop the channel.
  std::vector<std::vector<uint8_t>> binarize() const;

  // Channels per site with H_T(alpha) > threshold (strict), for the
  // recoverability trace.
  std::vector<int> trace_counts(double threshold = 0.5) const;

 private:
  std::vector<IndicatorSite> sites_;
  std::vector<Parameter> alphas_;
  double temperature_ = 1.0;
};

}  // namespace aprune

#endif  // APRUNE_INDICATORS_HPP_
