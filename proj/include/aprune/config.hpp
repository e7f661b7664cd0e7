#ifndef APRUNE_CONFIG_HPP_
#define APRUNE_CONFIG_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "aprune/arch.hpp"
#include "aprune/data.hpp"
#include "aprune/regularizers.hpp"
#include "aprune/search.hpp"
#include "aprune/space.hpp"

namespace aprune {

// What network to search over.
struct ArchConfig {
  std::string family = "resnet";     // "resnet" | "mobilenet"
  int depth = 14;                    // resnet: 6n+2
  std::vector<int> widths = {8, 16, 32};  // resnet stage widths
  double multiplier = 0.25;          // mobilenet width multiplier
  int num_classes = 10;
  int input_hw = 16;

  ArchitectureSpec build() const;
};

// Where examples come from: a corpus file or the synthetic bars task.
struct DataConfig {
  std::string source = "synthetic";  // "synthetic" | "file"
  std::string path;                  // required when source == "file"
  int per_class = 64;                // synthetic: examples per class
  double noise = 0.25;               // synthetic: pixel noise
  uint32_t seed = 5;                 // synthetic generation seed
  double train_ratio = 0.8;
  uint32_t split_seed = 1;

  // Loads or generates the corpus (classes and size come from arch for the
  // synthetic task) and splits it.
  SplitDataset load(const ArchConfig& arch) const;
};

// Structural penalties. The FLOPs target may be an absolute
// multiply-accumulate count or a fraction of the unpruned model; `resolve`
// turns either into the absolute RegularizerConfig the search consumes,
// zeroing the strength of every penalty not listed in `active`.
struct PenaltyConfig {
  std::vector<std::string> active = {"flops", "symmetry"};
  double lambda_flops = 2.0;
  double epsilon = 0.05;
  double lambda_symmetry = 0.01;
  double lambda_lasso = 1e-3;
  double flops_target = 0.5;
  bool target_is_fraction = true;

  RegularizerConfig resolve(long long unpruned_flops) const;
};

struct DeriveConfig {
  double threshold = 0.5;  // keep iff H_T(alpha) > threshold
};

// Design-space sweep section; band bounds are fractions of the base model.
struct SpaceConfig {
  std::string kind = "random";  // "random" | "constrained" | "slimming"
  int instances = 20;
  double band_low = 0.0;   // 0,1 → no band filter
  double band_high = 1.0;
  double slim_lasso = 1e-4;
  uint32_t seed = 1;

  DesignSpaceConfig resolve(const ArchitectureSpec& base) const;
};

// The whole run, one JSON file. Every field has a default; an empty object
// is a valid config.
struct RunConfig {
  ArchConfig arch;
  DataConfig data;
  SearchSettings search;
  PenaltyConfig penalties;
  DeriveConfig derive;
  FinetuneSettings finetune;
  SpaceConfig space;

  // Cross-field checks (family, schedule, ranges, file existence). Collects
  // every problem and throws one ConfigError listing all of them, each line
  // naming the offending field.
  void validate() const;
};

// Parse + validate. Unknown keys and type mismatches are reported with
// their full dotted path; all problems are collected before throwing.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Serialized snapshot of a config with every field spelled out, plus the
// resolved absolute FLOPs target (and band) when `unpruned_flops` > 0.
// Stable key order; parsing it back yields the same config.
std::string run_config_to_json(const RunConfig& cfg,
                               long long unpruned_flops = 0);

}  // namespace aprune

#endif  // APRUNE_CONFIG_HPP_
