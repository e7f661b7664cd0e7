#ifndef APRUNE_MODEL_HPP_
#define APRUNE_MODEL_HPP_

#include <cstdint>
#include <vector>

#include "aprune/arch.hpp"
#include "aprune/indicators.hpp"
#include "aprune/ops.hpp"
#include "aprune/tensor.hpp"

namespace aprune {

struct LayerParams {
  Parameter weight;
  Parameter bias;  // classifier only
  Parameter bn_gamma;
  Parameter bn_beta;
  ops::BnStats bn_stats;
  bool has_weight = false;
  bool has_bias = false;
  bool has_bn = false;
};

// A runnable network: architecture plus parameters. Convs are followed by
// batch norm; indicator masks are applied after each gated layer's
// conv -> BN -> ReLU (and after the residual addition for post-add sites).
class Network {
 public:
  Network(ArchitectureSpec spec, uint32_t seed);

  const ArchitectureSpec& spec() const { return spec_; }
  LayerParams& layer(int i) { return layers_[i]; }
  const LayerParams& layer(int i) const { return layers_[i]; }

  // Trainable tensors in a fixed order (optimizer slots key off it).
  std::vector<Parameter*> parameters();

  int64_t param_count() const;

  // site_masks: one tensor per indicator site (soft relaxations during
  // search, hard 0/1 vectors for equivalence checks); nullptr runs the
  // plain unmasked network.
  Tensor forward(const Tensor& input, const std::vector<Tensor>* site_masks,
                 bool training);

 private:
  Tensor run_layer(int layer_id, const Tensor& x, bool training,
                   bool relu_after);

  ArchitectureSpec spec_;
  std::vector<LayerParams> layers_;
};

// Builds per-site relaxed masks from the indicators and runs the gated
// forward. Gradients reach both the weights and the alphas.
Tensor forward_masked(Network& net, const IndicatorSet& indicators,
                      const Tensor& input, bool training);

// Hard 0/1 mask tensors from binarized indicators, for equivalence checks.
std::vector<Tensor> hard_mask_tensors(
    const std::vector<std::vector<uint8_t>>& keep);

}  // namespace aprune

#endif  // APRUNE_MODEL_HPP_
