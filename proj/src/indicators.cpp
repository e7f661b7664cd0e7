#include "aprune/indicators.hpp"

#include <cmath>
#include <random>

#include "aprune/errors.hpp"
#include "aprune/ops.hpp"

namespace aprune {

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::kLinear;
  if (s == "cosine") return ScheduleKind::kCosine;
  if (s == "smallT") return ScheduleKind::kSmallT;
  throw ConfigError("unknown temperature schedule '" + s +
                    "' (expected linear, cosine, or smallT)");
}

std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::kLinear: return "linear";
    case ScheduleKind::kCosine: return "cosine";
    case ScheduleKind::kSmallT: return "smallT";
  }
  return "?";
}

double temperature_at(const TemperatureSchedule& schedule, int n) {
  if (schedule.t0 <= 0.0)
    throw ConfigError("temperature schedule needs T0 > 0, got " +
                      std::to_string(schedule.t0));
  if (schedule.n_max <= 0)
    throw ConfigError("temperature schedule needs N_max > 0, got " +
                      std::to_string(schedule.n_max));
  if (n < 0 || n > schedule.n_max)
    throw ConfigError("epoch " + std::to_string(n) +
                      " outside schedule range [0, " +
                      std::to_string(schedule.n_max) + "]");
  const double frac = static_cast<double>(n) / schedule.n_max;
  double sigma = 1.0;
  switch (schedule.kind) {
    case ScheduleKind::kLinear:
      sigma = 49.0 * frac + 1.0;
      break;
    case ScheduleKind::kCosine:
      sigma = 49.0 * (1.0 - std::cos(M_PI / 2.0 * frac)) + 1.0;
      break;
    case ScheduleKind::kSmallT:
      sigma = 99.0 * frac + 1.0;
      break;
  }
  return schedule.t0 / sigma;
}

double relaxed_indicator(double alpha, double t) {
  if (t <= 0.0)
    throw ConfigError("relaxed indicator needs T > 0, got " +
                      std::to_string(t));
  const double z = alpha / t;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

IndicatorSet::IndicatorSet(std::vector<IndicatorSite> sites, uint32_t seed)
    : sites_(std::move(sites)) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> dist(1.0f, 0.1f);
  alphas_.reserve(sites_.size());
  for (const auto& s : sites_) {
    if (s.width <= 0)
      throw ConfigError("indicator site " + s.name + " has width " +
                        std::to_string(s.width));
    std::vector<float> init(static_cast<size_t>(s.width));
    for (auto& v : init) v = dist(rng);
    alphas_.emplace_back(Tensor::from_data({s.width}, std::move(init)),
                         s.name + ".alpha");
  }
}

void IndicatorSet::set_temperature(double t) {
  if (t <= 0.0)
    throw ConfigError("indicator temperature must stay positive, got " +
                      std::to_string(t));
  temperature_ = t;
}

Tensor IndicatorSet::relaxed(int i) const {
  return ops::sigmoid_scaled(alphas_[i].tensor, 1.0 / temperature_);
}

std::vector<std::vector<uint8_t>> IndicatorSet::binarize() const {
  std::vector<std::vector<uint8_t>> masks(alphas_.size());
  for (size_t i = 0; i < alphas_.size(); ++i) {
    const auto& a = alphas_[i].tensor.data();
    masks[i].resize(a.size());
    for (size_t j = 0; j < a.size(); ++j) masks[i][j] = a[j] > 0.0f ? 1 : 0;
  }
  return masks;
}

std::vector<int> IndicatorSet::trace_counts(double threshold) const {
  std::vector<int> counts(alphas_.size(), 0);
  for (size_t i = 0; i < alphas_.size(); ++i) {
    for (float a : alphas_[i].tensor.data())
      if (relaxed_indicator(a, temperature_) > threshold) ++counts[i];
  }
  return counts;
}

}  // namespace aprune
