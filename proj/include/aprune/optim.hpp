#ifndef APRUNE_OPTIM_HPP_
#define APRUNE_OPTIM_HPP_

#include <vector>

#include "aprune/tensor.hpp"

namespace aprune {

// Epoch-granular learning-rate schedules. Both peak at `base` and decay to
// (nearly) zero by the last epoch.
double cosine_lr(double base, int epoch, int total_epochs);
double warmup_cosine_lr(double base, int epoch, int total_epochs,
                        int warmup_epochs);

// SGD with classical momentum and L2 weight decay folded into the gradient:
//   g = grad + wd * w;  v = mu * v + g;  w -= lr * v
class Sgd {
 public:
  Sgd(std::vector<Parameter*> params, double momentum, double weight_decay);

  void zero_grad();
  void step(double lr);

 private:
  std::vector<Parameter*> params_;
  std::vector<std::vector<float>> velocity_;
  double momentum_;
  double weight_decay_;
};

// Adam with L2 decay coupled into the gradient (the classical formulation,
// not the decoupled variant) and bias-corrected moments.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, double lr, double beta1, double beta2,
       double weight_decay, double eps = 1e-8);

  void zero_grad();
  void step();  // uses the constructor learning rate
  void step(double lr);

  int64_t steps_taken() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  double lr_, beta1_, beta2_, weight_decay_, eps_;
  int64_t t_ = 0;
};

}  // namespace aprune

#endif  // APRUNE_OPTIM_HPP_
