#ifndef APRUNE_DERIVE_HPP_
#define APRUNE_DERIVE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "aprune/arch.hpp"
#include "aprune/indicators.hpp"
#include "aprune/model.hpp"
#include "aprune/tensor.hpp"

namespace aprune {

// A derived pruned network: narrowed spec, weights sliced bit-identically
// from the supernet, and the kept original channel index per site
// (provenance, always strictly increasing).
struct PrunedModel {
  ArchitectureSpec spec;
  Network net;
  std::vector<std::vector<int>> kept;  // per site, original channel indices
  FlopsReport flops;                   // ratio_vs_unpruned filled in
};

// Keep-masks by indicator threshold: keep iff H_T(alpha) > threshold at the
// set's current temperature. The 0.5 default is equivalent to alpha > 0
// (the annealed limit); the no-annealing ablation derives at 0.55.
std::vector<std::vector<uint8_t>> keep_masks(const IndicatorSet& indicators,
                                             double threshold = 0.5);

// Hard derivation: binarized keep-masks, spec narrowing, weight/BN slicing.
// A site keeping no channels throws CollapseError naming it.
PrunedModel derive(const Network& supernet, const IndicatorSet& indicators);
PrunedModel derive(const Network& supernet,
                   const std::vector<std::vector<uint8_t>>& keep);

// Max absolute logit gap between the hard-masked supernet and the pruned
// model on one batch, both in eval mode. Equivalence holds by construction
// (dropped channels are exact zeros on both sides), so this should sit at
// the reassociation noise floor, well under 1e-4.
double verify_equivalence(Network& supernet,
                          const std::vector<std::vector<uint8_t>>& keep,
                          PrunedModel& pruned, const Tensor& batch);

// On-disk layout: <stem>.arch (spec text), <stem>.weights (binary blob),
// <stem>.kept (per-site provenance text). A derived model reloads without
// any search state.
void save_pruned(const PrunedModel& model, const std::string& stem);
PrunedModel load_pruned(const std::string& stem);

// Weight blob helpers, shared with search snapshots: magic "APWT", then per
// parameter name length + name bytes + rank + dims (int32) + float32 data,
// plus the batch-norm running stats keyed as <layer>.bn.mean/.var.
void save_network_weights(Network& net, const std::string& path);
void load_network_weights(Network& net, const std::string& path);

}  // namespace aprune

#endif  // APRUNE_DERIVE_HPP_
