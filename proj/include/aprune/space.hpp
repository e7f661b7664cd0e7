#ifndef APRUNE_SPACE_HPP_
#define APRUNE_SPACE_HPP_

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "aprune/arch.hpp"
#include "aprune/data.hpp"
#include "aprune/search.hpp"

namespace aprune {

// Three baseline generators over the width design space:
//   random      — every site width drawn independently as c * U(0.5, 1)
//   constrained — residual stages share one draw for the post-addition
//                 stream, so every residual pair is width-symmetric by
//                 construction; in-block widths draw like `random`
//   slimming    — per instance, train the base net with an L1 pull on the
//                 BN scales, rank channels by |scale|, and drop the
//                 smallest until the cost fits the band
enum class SpaceKind { kRandom, kConstrained, kSlimming };

std::string to_string(SpaceKind k);
SpaceKind space_kind_from_string(const std::string& s);

struct DesignSpaceConfig {
  ArchitectureSpec base_spec;
  SpaceKind kind = SpaceKind::kRandom;
  int num_instances = 20;
  bool has_band = false;      // optional discrete-cost filter
  long long band_low = 0;
  long long band_high = 0;
  double slim_lasso = 1e-4;   // L1 weight on BN scales (slimming only)
  uint32_t seed = 1;

  void validate() const;  // ConfigError on nonsense
};

// Deterministic per-instance stream: instance i of seed s is reproducible
// in isolation.
uint32_t instance_seed(const DesignSpaceConfig& cfg, int index);

// round-half-up with a floor of one channel; widths land in
// [ceil(0.5 c), c] for u in [0.5, 1]
int sampled_width(int base_width, double u);

// Per-site widths for instance `index` (random / constrained kinds only;
// slimming widths depend on a trained net and are produced inside
// evaluate_space).
std::vector<int> sample_widths(const DesignSpaceConfig& cfg, int index);

// The sampled instance as a standalone spec: prefix keep masks of the
// sampled widths applied to the base spec.
ArchitectureSpec sample_instance(const DesignSpaceConfig& cfg, int index);

// Channel ranking by |BN scale| on a trained supernet, cut greedily (always
// keeping one channel per site) until the discrete cost is <= budget.
std::vector<std::vector<uint8_t>> slimming_keep(const Network& net,
                                                long long budget);

struct InstanceRecord {
  int id = 0;
  uint32_t seed = 0;
  std::vector<int> widths;  // per site
  long long flops = 0;
  double accuracy = 0.0;
  bool in_band = true;
  bool diverged = false;
};

struct SpaceSummary {
  int trained = 0;      // instances contributing to the statistics
  int out_of_band = 0;
  int diverged = 0;
  double best_accuracy = 0.0;
  double mean_accuracy = 0.0;
  double stdev_accuracy = 0.0;  // population std over trained instances
  int best_id = -1;
  std::string status;  // "ok" or "no instances in band"
};

struct SpaceEvaluation {
  std::vector<InstanceRecord> instances;
  SpaceSummary summary;
};

// Samples num_instances instances, drops the ones outside the band, trains
// the rest from scratch with the fine-tune recipe, and aggregates. An
// instance whose training diverges is flagged and excluded from the
// statistics instead of aborting the sweep.
SpaceEvaluation evaluate_space(const DesignSpaceConfig& cfg,
                               const SplitDataset& data,
                               const FinetuneSettings& budget,
                               std::ostream* progress = nullptr);

// id,seed,widths(a;b;c),flops,accuracy,status rows for the error-bar plot.
void export_space_csv(const SpaceEvaluation& eval, std::ostream& out);

}  // namespace aprune

#endif  // APRUNE_SPACE_HPP_
