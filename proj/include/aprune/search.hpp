#ifndef APRUNE_SEARCH_HPP_
#define APRUNE_SEARCH_HPP_

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "aprune/arch.hpp"
#include "aprune/data.hpp"
#include "aprune/indicators.hpp"
#include "aprune/model.hpp"
#include "aprune/optim.hpp"
#include "aprune/regularizers.hpp"

namespace aprune {

// Knobs for one search run. The two ablation switches map to the paper's
// variants: annealing=false holds T at t0 for the whole run (binarize by
// indicator threshold afterwards); bilevel=false updates both W and alpha
// on the merged training data instead of separate splits.
struct SearchSettings {
  int epochs = 100;
  int batch_size = 64;
  ScheduleKind schedule = ScheduleKind::kLinear;
  double t0 = 1.0;
  bool annealing = true;
  bool bilevel = true;
  double w_lr = 0.1;
  double w_momentum = 0.9;
  double w_weight_decay = 5e-5;
  double a_lr = 1e-3;
  double a_weight_decay = 1e-3;
  int trace_every = 20;  // recoverability-trace cadence, in epochs
  bool augment = true;
  bool hflip = false;
  uint32_t seed = 1;
};

struct EpochMetrics {
  int epoch = 0;
  double temperature = 0.0;
  double w_lr = 0.0;
  double train_loss = 0.0;  // mean over weight steps
  double val_loss = 0.0;    // mean over alpha steps (eval pass if none ran)
  double e_flops = 0.0;
  double r_flops = 0.0;
  double r_sym = 0.0;
  double r_lasso = 0.0;
  std::vector<int> trace_counts;  // channels with relaxed indicator > 0.5
};

// Indicator sites matching a spec's prunable widths: site name, channel
// count, and the names of the layers it gates. This is the layout
// SearchState builds, and the one snapshot loaders must reproduce.
std::vector<IndicatorSite> indicator_sites_for(const ArchitectureSpec& spec);

// Mutable state of one run: supernet weights, indicators, and the two
// optimizers, which own disjoint parameter sets.
struct SearchState {
  SearchState(const ArchitectureSpec& spec, const SearchSettings& settings,
              const RegularizerConfig& reg);

  SearchSettings settings;
  RegularizerConfig reg;
  ArchitectureSpec spec;
  Network net;
  IndicatorSet indicators;
  Sgd w_opt;
  Adam a_opt;
  int epoch = 0;
};

// One epoch of per-batch alternation: an alpha step on a validation batch
// (val loss + weighted penalties), then a W step on a training batch.
// Anneals the temperature at entry per the schedule. Throws DivergenceError
// with a state snapshot when a loss turns non-finite.
EpochMetrics search_epoch(SearchState& state, const SplitDataset& data);

struct SearchResult {
  ArchitectureSpec spec;
  Network net;
  IndicatorSet indicators;
  std::vector<EpochMetrics> history;
};

// Full search: epochs of search_epoch with metrics streamed as NDJSON (one
// JSON object per line) and the per-site indicator counts appended to
// trace_csv every settings.trace_every epochs (plus the final epoch).
// Either stream may be null. bilevel=false merges the two splits first.
SearchResult run_search(const ArchitectureSpec& spec,
                        const SearchSettings& settings,
                        const RegularizerConfig& reg, const SplitDataset& data,
                        std::ostream* metrics_ndjson = nullptr,
                        std::ostream* trace_csv = nullptr);

// Fraction of indicator entries within `band` of a hard 0/1 value
// (min(H, 1-H) < band); the binarization-convergence measure.
double binarized_fraction(const IndicatorSet& indicators, double band = 0.01);

struct FinetuneSettings {
  int epochs = 30;
  int warmup_epochs = 5;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-5;
  int batch_size = 64;
  bool augment = true;
  bool hflip = false;
  uint32_t seed = 1;
};

struct FinetuneResult {
  double best_val_accuracy = 0.0;
  double final_val_accuracy = 0.0;
  std::vector<double> lr_trace;
  std::vector<double> train_loss_history;
  std::vector<double> val_acc_history;
};

// Post-derivation training: SGD with momentum, linear warmup then cosine
// decay. Trains `net` in place; with epochs=0 just measures accuracy.
FinetuneResult finetune(Network& net, const SplitDataset& data,
                        const FinetuneSettings& settings);

// Eval-mode accuracy over a dataset, batched; no masks, no stat updates.
double evaluate_accuracy(Network& net, const Dataset& ds, int batch_size = 64);

}  // namespace aprune

#endif  // APRUNE_SEARCH_HPP_
