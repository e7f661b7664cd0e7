#ifndef APRUNE_OPS_HPP_
#define APRUNE_OPS_HPP_

#include <string>
#include <vector>

#include "aprune/tensor.hpp"

// Differentiable graph ops. Each call runs the forward immediately and, when
// grad is enabled and some input needs it, attaches a closure that scatters
// the output grad back into the inputs. The `name` arguments end up in
// ShapeError messages so a miswired layer is identifiable.

namespace aprune::ops {

// x (n,c_in,h,w), w (k,k,c_in,c_out) -> (n,c_out,oh,ow)
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad,
              const std::string& name);

// x (n,c,h,w), w (k,k,c) -> (n,c,oh,ow), one filter per channel
Tensor dwconv2d(const Tensor& x, const Tensor& w, int stride, int pad,
                const std::string& name);

// Per-channel running estimates, updated only by training-mode calls.
struct BnStats {
  std::vector<float> mean;
  std::vector<float> var;

  explicit BnStats(int channels = 0)
      : mean(channels, 0.0f), var(channels, 1.0f) {}
  int channels() const { return static_cast<int>(mean.size()); }
};

// Training mode normalizes with batch statistics (biased variance) and folds
// them into `stats`; eval mode normalizes with `stats` as-is.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BnStats& stats, bool training, const std::string& name);

Tensor relu(const Tensor& x);

// y[n,c,h,w] = x[n,c,h,w] * m[c]
Tensor channel_mask(const Tensor& x, const Tensor& m, const std::string& name);

// Elementwise, shapes must match.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, float s);

// All elements -> scalar, accumulated in double.
Tensor sum(const Tensor& x);

// d|x|/dx taken as 0 at x == 0.
Tensor abs(const Tensor& x);

// Natural log, elementwise. Caller guarantees positive inputs.
Tensor log(const Tensor& x);

// sigmoid(x * inv_t), numerically stable for large |x * inv_t|.
Tensor sigmoid_scaled(const Tensor& x, double inv_t);

// out[:,j,:,:] = x[:,map[j],:,:], or zero where map[j] is -1. Rewires an
// identity shortcut whose two ends kept different channel sets.
Tensor gather_channels(const Tensor& x, const std::vector<int>& map,
                       const std::string& name);

// (n,c,h,w) -> (n,c), mean over the spatial extent
Tensor global_avg_pool(const Tensor& x);

// x (n,c_in), w (c_in,c_out), b (c_out) -> (n,c_out)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b,
              const std::string& name);

// Mean over the batch of -log softmax(logits)[label]. Scalar.
Tensor softmax_cross_entropy(const Tensor& logits,
                             const std::vector<int>& labels);

}  // namespace aprune::ops

#endif  // APRUNE_OPS_HPP_
