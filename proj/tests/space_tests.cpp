// Width design spaces: sampling bounds and determinism, the stage-shared
// constrained draws (residual symmetry by construction), the BN-scale
// ranking cut, and the sweep bookkeeping (band filter, divergence flags,
// summary statistics).

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aprune/arch.hpp"
#include "aprune/data.hpp"
#include "aprune/errors.hpp"
#include "aprune/regularizers.hpp"
#include "aprune/space.hpp"
#include "doctest.h"

using namespace aprune;

namespace {

DesignSpaceConfig resnet_space(SpaceKind kind, int instances, uint32_t seed) {
  DesignSpaceConfig cfg;
  cfg.base_spec = build_resnet_spec(14, {8, 16, 32}, 4, 8);
  cfg.kind = kind;
  cfg.num_instances = instances;
  cfg.seed = seed;
  return cfg;
}

SplitDataset tiny_bars(uint32_t seed) {
  Dataset ds = make_synthetic_task(2, 16, 8, seed, 0.1);
  return split(ds, 0.7, seed + 1);
}

FinetuneSettings tiny_budget() {
  FinetuneSettings fs;
  fs.epochs = 2;
  fs.warmup_epochs = 1;
  fs.lr = 0.05;
  fs.batch_size = 8;
  fs.augment = false;
  return fs;
}

// hard-width indicator set matching a spec, for the symmetry-value check
IndicatorSet hard_indicators(const ArchitectureSpec& spec) {
  std::vector<IndicatorSite> sites;
  for (const auto& s : spec.sites) sites.push_back({s.name, s.width, {}});
  IndicatorSet set(sites, 1);
  for (int i = 0; i < set.num_sites(); ++i)
    for (auto& a : set.alpha(i).tensor.data()) a = 40.0f;
  set.set_temperature(0.02);  // saturated: soft width == hard width
  return set;
}

}  // namespace

TEST_CASE("sampled widths honour the half-to-full band") {
  // u at the extremes: round-half-up keeps widths in [ceil(c/2), c]
  CHECK(sampled_width(16, 1.0) == 16);
  CHECK(sampled_width(16, 0.5) == 8);
  CHECK(sampled_width(5, 0.5) == 3);   // 2.5 rounds up
  CHECK(sampled_width(3, 0.5) == 2);   // 1.5 rounds up
  CHECK(sampled_width(1, 0.5) == 1);   // floor at one channel
  CHECK(sampled_width(2, 0.51) == 1);  // 1.02 rounds down to the floor

  DesignSpaceConfig cfg = resnet_space(SpaceKind::kRandom, 40, 3);
  for (int i = 0; i < cfg.num_instances; ++i) {
    const auto widths = sample_widths(cfg, i);
    REQUIRE(widths.size() == cfg.base_spec.sites.size());
    for (size_t s = 0; s < widths.size(); ++s) {
      const int c = cfg.base_spec.sites[s].width;
      CHECK(widths[s] >= (c + 1) / 2);
      CHECK(widths[s] <= c);
    }
  }
}

TEST_CASE("sampling is deterministic per (seed, index) and varies across both") {
  DesignSpaceConfig cfg = resnet_space(SpaceKind::kRandom, 8, 11);
  for (int i = 0; i < 8; ++i)
    CHECK(sample_widths(cfg, i) == sample_widths(cfg, i));

  std::set<std::vector<int>> distinct;
  for (int i = 0; i < 8; ++i) distinct.insert(sample_widths(cfg, i));
  CHECK(distinct.size() > 1);

  DesignSpaceConfig other = resnet_space(SpaceKind::kRandom, 8, 12);
  CHECK(sample_widths(other, 0) != sample_widths(cfg, 0));
}

TEST_CASE("constrained instances share one width per stage stream") {
  DesignSpaceConfig cfg = resnet_space(SpaceKind::kConstrained, 12, 7);
  const ArchitectureSpec& base = cfg.base_spec;
  const int per_stage = (int)base.blocks.size() / 3;

  for (int i = 0; i < cfg.num_instances; ++i) {
    const auto widths = sample_widths(cfg, i);
    for (size_t bi = 0; bi < base.blocks.size(); ++bi) {
      const int stage = (int)bi / per_stage;
      const int first_in_stage = stage * per_stage;
      CHECK(widths[base.blocks[bi].site_b] ==
            widths[base.blocks[first_in_stage].site_b]);
    }
    // every residual pair is width-symmetric by construction
    ArchitectureSpec inst = sample_instance(cfg, i);
    for (const auto& p : inst.residual_pairs)
      CHECK(inst.sites[p.site_in].width == inst.sites[p.site_out].width);
    // and the symmetry penalty measures exactly zero at hard widths
    CHECK(reg::symmetry_value(hard_indicators(inst), inst.residual_pairs) ==
          0.0);
  }
}

TEST_CASE("constrained sampling requires a residual base") {
  DesignSpaceConfig cfg;
  cfg.base_spec = build_mobilenet_spec(0.25, 4, 8);
  cfg.kind = SpaceKind::kConstrained;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("an instance with all draws at the top equals the base spec") {
  // sampled_width(c, 1) == c for every width, so a full-width instance's
  // prefix masks keep everything and the pruned spec is the base again
  DesignSpaceConfig cfg = resnet_space(SpaceKind::kRandom, 1, 1);
  std::vector<std::vector<uint8_t>> keep(cfg.base_spec.sites.size());
  for (size_t s = 0; s < keep.size(); ++s)
    keep[s].assign((size_t)sampled_width(cfg.base_spec.sites[s].width, 1.0),
                   1);
  ArchitectureSpec inst = prune_spec(cfg.base_spec, keep);
  CHECK(spec_to_text(inst) == spec_to_text(cfg.base_spec));
}

TEST_CASE("config validation rejects nonsense") {
  DesignSpaceConfig cfg = resnet_space(SpaceKind::kRandom, 0, 1);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = resnet_space(SpaceKind::kRandom, 4, 1);
  cfg.has_band = true;
  cfg.band_low = 100;
  cfg.band_high = 50;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  cfg = resnet_space(SpaceKind::kSlimming, 4, 1);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);  // slimming needs a band

  CHECK_THROWS_AS(space_kind_from_string("best"), ConfigError);
  CHECK(space_kind_from_string("random") == SpaceKind::kRandom);
  CHECK(to_string(SpaceKind::kSlimming) == "slimming");
}

TEST_CASE("slimming keeps the largest BN scales and fits the budget") {
  ArchitectureSpec spec = build_resnet_spec(8, {4, 4, 4}, 3, 8);
  Network net(spec, 5);

  // plant a known ranking on one site's producing conv: channels 1 and 3
  // carry tiny scales, 0 and 2 large ones
  int victim_site = 0;
  int source = -1;
  for (size_t li = 0; li < spec.layers.size(); ++li)
    if (spec.layers[li].out_site == victim_site) source = (int)li;
  REQUIRE(source >= 0);
  net.layer(source).bn_gamma.tensor.data() = {3.0f, 0.01f, 2.5f, 0.02f};

  const long long full = discrete_flops(spec).total;
  auto keep = slimming_keep(net, (long long)(0.7 * full));
  const long long cut = discrete_flops(prune_spec(spec, keep)).total;
  CHECK(cut <= (long long)(0.7 * full));

  // the tiny-scale channels fall first on the planted site
  if (std::count(keep[victim_site].begin(), keep[victim_site].end(), 1) == 2) {
    CHECK(keep[victim_site][0] == 1);
    CHECK(keep[victim_site][2] == 1);
  }
  // no site ever empties
  for (const auto& k : keep)
    CHECK(std::count(k.begin(), k.end(), 1) >= 1);

  // an unreachable budget still terminates with one channel per site
  auto floor_keep = slimming_keep(net, 1);
  for (const auto& k : floor_keep)
    CHECK(std::count(k.begin(), k.end(), 1) == 1);
}

TEST_CASE("evaluate_space trains in-band instances and aggregates") {
  DesignSpaceConfig cfg;
  cfg.base_spec = build_resnet_spec(8, {4, 4, 4}, 2, 8);
  cfg.kind = SpaceKind::kRandom;
  cfg.num_instances = 4;
  cfg.seed = 21;

  SplitDataset data = tiny_bars(31);
  std::ostringstream progress;
  SpaceEvaluation eval =
      evaluate_space(cfg, data, tiny_budget(), &progress);

  REQUIRE(eval.instances.size() == 4);
  CHECK(eval.summary.trained == 4);
  CHECK(eval.summary.status == "ok");
  CHECK(eval.summary.best_id >= 0);
  CHECK(eval.summary.best_accuracy >= eval.summary.mean_accuracy);
  CHECK(eval.summary.stdev_accuracy >= 0.0);
  for (const auto& r : eval.instances) {
    CHECK(r.flops > 0);
    CHECK(r.widths.size() == cfg.base_spec.sites.size());
    CHECK(r.accuracy >= 0.0);
    CHECK_FALSE(r.diverged);
  }

  // the mean is the mean and the best is the max
  double acc = 0.0, best = 0.0;
  for (const auto& r : eval.instances) {
    acc += r.accuracy;
    best = std::max(best, r.accuracy);
  }
  CHECK(eval.summary.mean_accuracy == doctest::Approx(acc / 4));
  CHECK(eval.summary.best_accuracy == doctest::Approx(best));

  // progress stream mentioned every instance
  CHECK(progress.str().find("instance 3") != std::string::npos);

  // csv export: header + one row per instance, each flagged trained
  std::ostringstream csv;
  export_space_csv(eval, csv);
  std::istringstream lines(csv.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "id,seed,widths,flops,accuracy,status");
  int rows = 0;
  while (std::getline(lines, line)) {
    CHECK(line.find("trained") != std::string::npos);
    ++rows;
  }
  CHECK(rows == 4);
}

TEST_CASE("a band no instance can reach reports out-of-band status") {
  DesignSpaceConfig cfg;
  cfg.base_spec = build_resnet_spec(8, {4, 4, 4}, 2, 8);
  cfg.kind = SpaceKind::kRandom;
  cfg.num_instances = 3;
  cfg.seed = 9;
  cfg.has_band = true;
  cfg.band_low = 1;
  cfg.band_high = 2;  // nothing costs this little

  SplitDataset data = tiny_bars(41);
  SpaceEvaluation eval = evaluate_space(cfg, data, tiny_budget());
  CHECK(eval.summary.trained == 0);
  CHECK(eval.summary.out_of_band == 3);
  CHECK(eval.summary.status == "no instances in band");
  CHECK(eval.summary.best_id == -1);

  std::ostringstream csv;
  export_space_csv(eval, csv);
  CHECK(csv.str().find("out_of_band") != std::string::npos);
}

TEST_CASE("slimming sweep produces in-band instances end to end") {
  DesignSpaceConfig cfg;
  cfg.base_spec = build_resnet_spec(8, {4, 4, 4}, 2, 8);
  cfg.kind = SpaceKind::kSlimming;
  cfg.num_instances = 2;
  cfg.seed = 13;
  cfg.has_band = true;
  cfg.band_low = 0;
  cfg.band_high = (long long)(0.7 * discrete_flops(cfg.base_spec).total);

  SplitDataset data = tiny_bars(51);
  SpaceEvaluation eval = evaluate_space(cfg, data, tiny_budget());
  REQUIRE(eval.instances.size() == 2);
  CHECK(eval.summary.trained == 2);
  for (const auto& r : eval.instances) {
    CHECK(r.flops <= cfg.band_high);
    CHECK(r.in_band);
  }

  // deterministic: the same sweep lands on the same widths and accuracies
  SpaceEvaluation again = evaluate_space(cfg, data, tiny_budget());
  for (int i = 0; i < 2; ++i) {
    CHECK(again.instances[i].widths == eval.instances[i].widths);
    CHECK(again.instances[i].accuracy == eval.instances[i].accuracy);
  }
}
