#include "aprune/optim.hpp"

#include <cmath>

#include "aprune/errors.hpp"

namespace aprune {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double cosine_lr(double base, int epoch, int total_epochs) {
  if (total_epochs <= 0)
    throw ConfigError("cosine schedule needs a positive epoch count");
  if (epoch < 0 || epoch >= total_epochs)
    throw ConfigError("epoch " + std::to_string(epoch) +
                      " outside schedule of " + std::to_string(total_epochs));
  return base * 0.5 * (1.0 + std::cos(kPi * epoch / total_epochs));
}

double warmup_cosine_lr(double base, int epoch, int total_epochs,
                        int warmup_epochs) {
  if (warmup_epochs < 0 || warmup_epochs >= total_epochs)
    throw ConfigError("warmup of " + std::to_string(warmup_epochs) +
                      " does not fit in " + std::to_string(total_epochs) +
                      " epochs");
  if (epoch < warmup_epochs)  // linear ramp hitting `base` at the last step
    return base * (epoch + 1) / (double)warmup_epochs;
  return cosine_lr(base, epoch - warmup_epochs, total_epochs - warmup_epochs);
}

Sgd::Sgd(std::vector<Parameter*> params, double momentum, double weight_decay)
    : params_(std::move(params)),
      momentum_(momentum),
      weight_decay_(weight_decay) {
  velocity_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i)
    velocity_[i].assign((size_t)params_[i]->tensor.numel(), 0.0f);
}

void Sgd::zero_grad() {
  for (auto* p : params_) p->tensor.zero_grad();
}

void Sgd::step(double lr) {
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& w = params_[i]->tensor.data();
    auto& g = params_[i]->tensor.grad();
    auto& v = velocity_[i];
    for (size_t j = 0; j < w.size(); ++j) {
      const float grad = g[j] + (float)weight_decay_ * w[j];
      v[j] = (float)momentum_ * v[j] + grad;
      w[j] -= (float)lr * v[j];
    }
  }
}

Adam::Adam(std::vector<Parameter*> params, double lr, double beta1,
           double beta2, double weight_decay, double eps)
    : params_(std::move(params)),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      weight_decay_(weight_decay),
      eps_(eps) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign((size_t)params_[i]->tensor.numel(), 0.0f);
    v_[i].assign((size_t)params_[i]->tensor.numel(), 0.0f);
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->tensor.zero_grad();
}

void Adam::step() { step(lr_); }

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, (double)t_);
  const double bc2 = 1.0 - std::pow(beta2_, (double)t_);
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& w = params_[i]->tensor.data();
    auto& g = params_[i]->tensor.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t j = 0; j < w.size(); ++j) {
      const double grad = (double)g[j] + weight_decay_ * w[j];
      m[j] = (float)(beta1_ * m[j] + (1.0 - beta1_) * grad);
      v[j] = (float)(beta2_ * v[j] + (1.0 - beta2_) * grad * grad);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= (float)(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

}  // namespace aprune
