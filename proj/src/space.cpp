#include "aprune/space.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "aprune/errors.hpp"
#include "aprune/ops.hpp"
#include "aprune/optim.hpp"

namespace aprune {

std::string to_string(SpaceKind k) {
  switch (k) {
    case SpaceKind::kRandom: return "random";
    case SpaceKind::kConstrained: return "constrained";
    case SpaceKind::kSlimming: return "slimming";
  }
  return "?";
}

SpaceKind space_kind_from_string(const std::string& s) {
  if (s == "random") return SpaceKind::kRandom;
  if (s == "constrained") return SpaceKind::kConstrained;
  if (s == "slimming") return SpaceKind::kSlimming;
  throw ConfigError("unknown design-space kind '" + s +
                    "' (random|constrained|slimming)");
}

namespace {

int blocks_per_stage(const ArchitectureSpec& spec) {
  return (int)spec.blocks.size() / 3;
}

}  // namespace

void DesignSpaceConfig::validate() const {
  base_spec.validate();
  if (num_instances < 1)
    throw ConfigError("design space needs at least one instance");
  if (has_band) {
    if (band_low < 0 || band_high < band_low)
      throw ConfigError("cost band [" + std::to_string(band_low) + ", " +
                        std::to_string(band_high) + "] is not a band");
  }
  if (kind == SpaceKind::kConstrained) {
    if (base_spec.family != "resnet" || base_spec.blocks.empty() ||
        base_spec.blocks.size() % 3 != 0)
      throw ConfigError(
          "the constrained space needs a three-stage residual base");
  }
  if (kind == SpaceKind::kSlimming) {
    if (!has_band)
      throw ConfigError("the slimming space cuts to a cost band; set one");
    if (slim_lasso < 0.0)
      throw ConfigError("negative slimming lasso weight");
  }
}

uint32_t instance_seed(const DesignSpaceConfig& cfg, int index) {
  return cfg.seed ^ (0x9E3779B9u * (uint32_t)(index + 1));
}

int sampled_width(int base_width, double u) {
  const int w = (int)std::floor(base_width * u + 0.5);
  return std::max(1, w);
}

std::vector<int> sample_widths(const DesignSpaceConfig& cfg, int index) {
  if (cfg.kind == SpaceKind::kSlimming)
    throw ConfigError(
        "slimming widths come from a trained net; use evaluate_space");
  const ArchitectureSpec& base = cfg.base_spec;
  std::mt19937 rng(instance_seed(cfg, index));
  std::uniform_real_distribution<double> u(0.5, 1.0);

  std::vector<int> widths(base.sites.size(), 0);
  if (cfg.kind == SpaceKind::kRandom) {
    for (size_t s = 0; s < base.sites.size(); ++s)
      widths[s] = sampled_width(base.sites[s].width, u(rng));
    return widths;
  }

  // constrained: one draw per stage pins every post-addition stream width
  // in that stage; the in-block widths (site A) then draw independently
  const int per_stage = blocks_per_stage(base);
  double stage_u[3] = {u(rng), u(rng), u(rng)};
  for (size_t bi = 0; bi < base.blocks.size(); ++bi) {
    const BlockDesc& b = base.blocks[bi];
    const int stage = (int)bi / per_stage;
    widths[b.site_b] = sampled_width(base.sites[b.site_b].width,
                                     stage_u[stage]);
  }
  for (size_t bi = 0; bi < base.blocks.size(); ++bi) {
    const BlockDesc& b = base.blocks[bi];
    widths[b.site_a] = sampled_width(base.sites[b.site_a].width, u(rng));
  }
  return widths;
}

ArchitectureSpec sample_instance(const DesignSpaceConfig& cfg, int index) {
  const std::vector<int> widths = sample_widths(cfg, index);
  std::vector<std::vector<uint8_t>> keep(widths.size());
  for (size_t s = 0; s < widths.size(); ++s) {
    keep[s].assign((size_t)cfg.base_spec.sites[s].width, 0);
    for (int c = 0; c < widths[s]; ++c) keep[s][c] = 1;  // prefix mask
  }
  ArchitectureSpec spec = prune_spec(cfg.base_spec, keep);
  spec.validate();
  return spec;
}

std::vector<std::vector<uint8_t>> slimming_keep(const Network& net,
                                                long long budget) {
  const ArchitectureSpec& spec = net.spec();

  // |BN scale| per (site, channel), read from the site's producing conv
  struct Entry {
    float magnitude;
    int site;
    int channel;
  };
  std::vector<Entry> entries;
  for (size_t s = 0; s < spec.sites.size(); ++s) {
    int source = -1;
    for (size_t li = 0; li < spec.layers.size(); ++li) {
      if (spec.layers[li].out_site != (int)s) continue;
      if (source < 0 || spec.layers[li].kind != LayerKind::kDwConv)
        source = (int)li;
      if (spec.layers[li].kind != LayerKind::kDwConv) break;
    }
    if (source < 0)
      throw ConfigError("site " + spec.sites[s].name +
                        " has no producing layer to rank");
    const auto& gamma = net.layer(source).bn_gamma.tensor.data();
    for (size_t c = 0; c < gamma.size(); ++c)
      entries.push_back({std::fabs(gamma[c]), (int)s, (int)c});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
    if (a.site != b.site) return a.site < b.site;
    return a.channel < b.channel;
  });

  std::vector<std::vector<uint8_t>> keep(spec.sites.size());
  std::vector<int> kept_count(spec.sites.size());
  for (size_t s = 0; s < spec.sites.size(); ++s) {
    keep[s].assign((size_t)spec.sites[s].width, 1);
    kept_count[s] = spec.sites[s].width;
  }

  long long cost = discrete_flops(prune_spec(spec, keep)).total;
  for (const Entry& e : entries) {
    if (cost <= budget) break;
    if (kept_count[e.site] <= 1) continue;  // a site never empties
    keep[e.site][e.channel] = 0;
    --kept_count[e.site];
    cost = discrete_flops(prune_spec(spec, keep)).total;
  }
  return keep;
}

namespace {

// the base-net pass for the slimming generator: ordinary supervised
// training plus an L1 pull on every BN scale
void slim_train(Network& net, const SplitDataset& data,
                const FinetuneSettings& budget, double lasso, uint32_t seed) {
  Sgd opt(net.parameters(), budget.momentum, budget.weight_decay);
  Batcher train(data.train, budget.batch_size, seed * 2654435761u + 7,
                /*shuffle=*/true, budget.augment, budget.hflip);
  for (int e = 0; e < budget.epochs; ++e) {
    const double lr =
        warmup_cosine_lr(budget.lr, e, budget.epochs, budget.warmup_epochs);
    train.start_epoch(e);
    Tensor x;
    std::vector<int> y;
    int batch = 0;
    while (train.next(&x, &y)) {
      opt.zero_grad();
      Tensor loss =
          ops::softmax_cross_entropy(net.forward(x, nullptr, true), y);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        std::ostringstream snap;
        snap << "slim-train epoch=" << e << " batch=" << batch << " loss="
             << lv;
        throw DivergenceError("slimming base training is not finite",
                              snap.str());
      }
      backward(loss);
      for (size_t li = 0; li < net.spec().layers.size(); ++li) {
        LayerParams& lp = net.layer((int)li);
        if (!lp.has_bn) continue;
        auto& g = lp.bn_gamma.tensor.grad();
        const auto& v = lp.bn_gamma.tensor.data();
        for (size_t j = 0; j < g.size(); ++j)
          g[j] += (float)lasso * (v[j] > 0.0f ? 1.0f : v[j] < 0.0f ? -1.0f : 0.0f);
      }
      opt.step(lr);
      ++batch;
    }
  }
}

std::vector<int> widths_of(const ArchitectureSpec& spec) {
  std::vector<int> w;
  for (const auto& s : spec.sites) w.push_back(s.width);
  return w;
}

}  // namespace

SpaceEvaluation evaluate_space(const DesignSpaceConfig& cfg,
                               const SplitDataset& data,
                               const FinetuneSettings& budget,
                               std::ostream* progress) {
  cfg.validate();
  SpaceEvaluation eval;

  for (int i = 0; i < cfg.num_instances; ++i) {
    InstanceRecord rec;
    rec.id = i;
    rec.seed = instance_seed(cfg, i);

    ArchitectureSpec inst;
    bool sampled = true;
    if (cfg.kind == SpaceKind::kSlimming) {
      Network base(cfg.base_spec, rec.seed);
      try {
        slim_train(base, data, budget, cfg.slim_lasso, rec.seed);
      } catch (const DivergenceError&) {
        rec.diverged = true;
        sampled = false;
      }
      if (sampled) {
        auto keep = slimming_keep(base, cfg.band_high);
        inst = prune_spec(cfg.base_spec, keep);
        inst.validate();
      }
    } else {
      inst = sample_instance(cfg, i);
    }

    if (sampled) {
      rec.widths = widths_of(inst);
      rec.flops = discrete_flops(inst).total;
      rec.in_band = !cfg.has_band ||
                    (rec.flops >= cfg.band_low && rec.flops <= cfg.band_high);
      if (rec.in_band) {
        Network net(inst, rec.seed ^ 0x5EED5u);
        try {
          rec.accuracy = finetune(net, data, budget).best_val_accuracy;
        } catch (const DivergenceError&) {
          rec.diverged = true;
        }
      }
    }

    if (progress) {
      *progress << "instance " << i << ": flops=" << rec.flops;
      if (!rec.in_band)
        *progress << " (out of band)";
      else if (rec.diverged)
        *progress << " (diverged)";
      else
        *progress << " accuracy=" << rec.accuracy;
      *progress << "\n";
    }
    eval.instances.push_back(std::move(rec));
  }

  SpaceSummary& sum = eval.summary;
  double acc_sum = 0.0;
  for (const auto& r : eval.instances) {
    if (!r.in_band) {
      ++sum.out_of_band;
      continue;
    }
    if (r.diverged) {
      ++sum.diverged;
      continue;
    }
    ++sum.trained;
    acc_sum += r.accuracy;
    if (sum.best_id < 0 || r.accuracy > sum.best_accuracy) {
      sum.best_accuracy = r.accuracy;
      sum.best_id = r.id;
    }
  }
  if (sum.trained > 0) {
    sum.mean_accuracy = acc_sum / sum.trained;
    double var = 0.0;
    for (const auto& r : eval.instances) {
      if (!r.in_band || r.diverged) continue;
      const double d = r.accuracy - sum.mean_accuracy;
      var += d * d;
    }
    sum.stdev_accuracy = std::sqrt(var / sum.trained);
    sum.status = "ok";
  } else {
    sum.status = "no instances in band";
  }
  return eval;
}

void export_space_csv(const SpaceEvaluation& eval, std::ostream& out) {
  out << "id,seed,widths,flops,accuracy,status\n";
  for (const auto& r : eval.instances) {
    out << r.id << "," << r.seed << ",";
    for (size_t i = 0; i < r.widths.size(); ++i) {
      if (i) out << ";";
      out << r.widths[i];
    }
    out << "," << r.flops << "," << r.accuracy << ",";
    out << (!r.in_band ? "out_of_band" : r.diverged ? "diverged" : "trained");
    out << "\n";
  }
}

}  // namespace aprune
