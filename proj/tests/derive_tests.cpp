// Pruned-model derivation: threshold semantics, bit-exact weight slicing,
// collapse detection, logit equivalence between the masked supernet and the
// standalone pruned network, and the on-disk round trip.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "aprune/arch.hpp"
#include "aprune/data.hpp"
#include "aprune/derive.hpp"
#include "aprune/errors.hpp"
#include "aprune/model.hpp"
#include "doctest.h"

using namespace aprune;

namespace {

// stem -> conv1 -> conv2 -> pool -> fc with both gated conv outputs. Small
// enough to enumerate every keep-mask combination. (The first layer must be
// ungated, so a tiny stem fronts the two gated convs.)
ArchitectureSpec tiny_runnable_spec(int w0 = 4, int w1 = 4, int classes = 3) {
  ArchitectureSpec spec;
  spec.family = "plain";
  spec.num_classes = classes;
  spec.input_c = 3;
  spec.input_h = spec.input_w = 6;
  spec.layers.push_back({"stem", LayerKind::kConv, 3, 3, 3, 1, 6, 6, -1, -1});
  spec.layers.push_back({"conv1", LayerKind::kConv, 3, 3, w0, 1, 6, 6, -1, 0});
  spec.layers.push_back({"conv2", LayerKind::kConv, 3, w0, w1, 1, 6, 6, 0, 1});
  spec.layers.push_back({"pool", LayerKind::kPool, 1, w1, w1, 1, 1, 1, 1, 1});
  spec.layers.push_back(
      {"fc", LayerKind::kLinear, 1, w1, classes, 1, 1, 1, 1, -1});
  spec.sites.push_back({"conv1", w0, {1}});
  spec.sites.push_back({"conv2", w1, {2}});
  spec.validate();
  return spec;
}

Tensor sample_batch(int n, int c, int hw, uint32_t seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v((size_t)n * c * hw * hw);
  for (auto& x : v) x = d(rng);
  return Tensor::from_data({n, c, hw, hw}, std::move(v));
}

// nonempty pseudo-random keep mask for every site
std::vector<std::vector<uint8_t>> random_keep(const ArchitectureSpec& spec,
                                              uint32_t seed) {
  std::mt19937 rng(seed);
  std::vector<std::vector<uint8_t>> keep(spec.sites.size());
  for (size_t i = 0; i < spec.sites.size(); ++i) {
    keep[i].assign((size_t)spec.sites[i].width, 0);
    for (auto& b : keep[i]) b = rng() & 1;
    if (std::count(keep[i].begin(), keep[i].end(), 1) == 0)
      keep[i][rng() % keep[i].size()] = 1;
  }
  return keep;
}

// push the running BN statistics away from their init so the equivalence
// check also exercises the sliced stats
void warm_bn(Network& net, int hw, uint32_t seed) {
  Tensor batch = sample_batch(6, net.spec().input_c, hw, seed);
  for (int i = 0; i < 3; ++i) net.forward(batch, nullptr, true);
}

std::vector<int> kept_of(const std::vector<uint8_t>& mask) {
  std::vector<int> out;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back((int)i);
  return out;
}

}  // namespace

TEST_CASE("keep threshold 0.5 is the sign of alpha; 0.55 is stricter") {
  std::vector<IndicatorSite> sites = {{"s", 4, {}}};
  IndicatorSet set(sites, 1);
  set.alpha(0).tensor.data() = {2.0f, -3.0f, 0.1f, -0.05f};
  set.set_temperature(1.0);

  auto at_half = keep_masks(set, 0.5);
  CHECK(at_half[0] == std::vector<uint8_t>{1, 0, 1, 0});
  CHECK(at_half == set.binarize());

  // sigmoid(0.1) ~ 0.525 < 0.55: the borderline channel drops out
  auto strict = keep_masks(set, 0.55);
  CHECK(strict[0] == std::vector<uint8_t>{1, 0, 0, 0});

  // temperature rescales the relaxation but not the 0.5 decision
  set.set_temperature(0.05);
  CHECK(keep_masks(set, 0.5) == at_half);
}

TEST_CASE("derive slices weights bit-exactly by kept channel") {
  ArchitectureSpec spec = build_resnet_spec(8, {4, 6, 8}, 5, 8);
  Network supernet(spec, 31);
  warm_bn(supernet, 8, 9);

  auto keep = random_keep(spec, 17);
  PrunedModel model = derive(supernet, keep);

  // walk every layer and re-derive each sliced value independently from
  // the documented (k, k, c_in, c_out) row-major layout
  for (size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerDesc& ol = spec.layers[li];
    if (ol.kind == LayerKind::kPool) continue;
    const LayerParams& src = supernet.layer((int)li);
    const LayerParams& dst = model.net.layer((int)li);

    std::vector<int> in = ol.in_site >= 0
                              ? kept_of(keep[ol.in_site])
                              : std::vector<int>{};
    if (in.empty())
      for (int i = 0; i < ol.c_in; ++i) in.push_back(i);
    std::vector<int> out = ol.out_site >= 0
                               ? kept_of(keep[ol.out_site])
                               : std::vector<int>{};
    if (out.empty())
      for (int o = 0; o < ol.c_out; ++o) out.push_back(o);

    if (ol.kind == LayerKind::kLinear) {
      for (size_t i = 0; i < in.size(); ++i)
        for (int o = 0; o < ol.c_out; ++o)
          CHECK(dst.weight.tensor.data()[i * ol.c_out + o] ==
                src.weight.tensor.data()[(size_t)in[i] * ol.c_out + o]);
      CHECK(dst.bias.tensor.data() == src.bias.tensor.data());
      continue;
    }
    const int ci = (int)in.size(), co = (int)out.size();
    for (int kh = 0; kh < ol.k; ++kh)
      for (int kw = 0; kw < ol.k; ++kw)
        for (int i = 0; i < ci; ++i)
          for (int o = 0; o < co; ++o) {
            const size_t d = (((size_t)kh * ol.k + kw) * ci + i) * co + o;
            const size_t s =
                (((size_t)kh * ol.k + kw) * ol.c_in + in[i]) * ol.c_out +
                out[o];
            CHECK(dst.weight.tensor.data()[d] == src.weight.tensor.data()[s]);
          }
    for (int o = 0; o < co; ++o) {
      CHECK(dst.bn_gamma.tensor.data()[o] ==
            src.bn_gamma.tensor.data()[out[o]]);
      CHECK(dst.bn_beta.tensor.data()[o] == src.bn_beta.tensor.data()[out[o]]);
      CHECK(dst.bn_stats.mean[o] == src.bn_stats.mean[out[o]]);
      CHECK(dst.bn_stats.var[o] == src.bn_stats.var[out[o]]);
    }
  }

  // provenance and cost bookkeeping
  for (size_t i = 0; i < keep.size(); ++i)
    CHECK(model.kept[i] == kept_of(keep[i]));
  CHECK(model.flops.total == discrete_flops(model.spec).total);
  CHECK(model.flops.ratio_vs_unpruned ==
        doctest::Approx((double)model.flops.total /
                        discrete_flops(spec).total));
  CHECK(model.flops.ratio_vs_unpruned < 1.0);
}

TEST_CASE("an all-zero site collapses with the site named") {
  ArchitectureSpec spec = build_resnet_spec(8, {4, 4, 4}, 3, 8);
  Network supernet(spec, 2);
  auto keep = random_keep(spec, 4);
  keep[2].assign(keep[2].size(), 0);  // site s1.b0.b (index 2s vary; name below)
  const std::string site_name = spec.sites[2].name;
  CHECK_THROWS_WITH_AS(derive(supernet, keep),
                       doctest::Contains(site_name.c_str()), CollapseError);
  CHECK_THROWS_WITH_AS(derive(supernet, keep), doctest::Contains("collapsed"),
                       CollapseError);
}

TEST_CASE("masked supernet and pruned net agree on every mask combination") {
  ArchitectureSpec spec = tiny_runnable_spec();
  Network supernet(spec, 7);
  warm_bn(supernet, 6, 3);
  Tensor batch = sample_batch(4, 3, 6, 11);

  double worst = 0.0;
  int combos = 0;
  for (int m0 = 1; m0 < 16; ++m0) {
    for (int m1 = 1; m1 < 16; ++m1) {
      std::vector<std::vector<uint8_t>> keep = {
          {(uint8_t)(m0 & 1), (uint8_t)((m0 >> 1) & 1), (uint8_t)((m0 >> 2) & 1),
           (uint8_t)((m0 >> 3) & 1)},
          {(uint8_t)(m1 & 1), (uint8_t)((m1 >> 1) & 1), (uint8_t)((m1 >> 2) & 1),
           (uint8_t)((m1 >> 3) & 1)}};
      PrunedModel model = derive(supernet, keep);
      worst = std::max(worst, verify_equivalence(supernet, keep, model, batch));
      ++combos;
    }
  }
  CHECK(combos == 225);
  // dropped channels are exact zeros and x+0.0 is exact, so the gap is zero
  CHECK(worst == 0.0);
}

TEST_CASE("equivalence holds on residual nets with remapped shortcuts") {
  ArchitectureSpec spec = build_resnet_spec(14, {4, 6, 8}, 6, 8);
  Network supernet(spec, 13);
  warm_bn(supernet, 8, 21);
  Tensor batch = sample_batch(5, 3, 8, 23);

  for (uint32_t seed = 1; seed <= 5; ++seed) {
    auto keep = random_keep(spec, seed * 101);
    PrunedModel model = derive(supernet, keep);
    const double gap = verify_equivalence(supernet, keep, model, batch);
    CHECK(gap < 1e-9);
  }
}

TEST_CASE("equivalence holds on the depthwise-separable family") {
  ArchitectureSpec spec = build_mobilenet_spec(0.25, 4, 8);
  Network supernet(spec, 19);
  warm_bn(supernet, 8, 29);
  Tensor batch = sample_batch(3, 3, 8, 31);

  for (uint32_t seed = 1; seed <= 3; ++seed) {
    auto keep = random_keep(spec, seed * 7 + 1);
    PrunedModel model = derive(supernet, keep);
    CHECK(verify_equivalence(supernet, keep, model, batch) < 1e-9);
  }
}

TEST_CASE("keep-all derivation is the identity") {
  ArchitectureSpec spec = build_resnet_spec(8, {4, 4, 4}, 3, 8);
  Network supernet(spec, 3);
  warm_bn(supernet, 8, 5);

  std::vector<std::vector<uint8_t>> keep(spec.sites.size());
  for (size_t i = 0; i < keep.size(); ++i)
    keep[i].assign((size_t)spec.sites[i].width, 1);

  PrunedModel model = derive(supernet, keep);
  CHECK(spec_to_text(model.spec) == spec_to_text(spec));
  CHECK(model.flops.ratio_vs_unpruned == 1.0);

  NoGradGuard ng;
  Tensor batch = sample_batch(4, 3, 8, 6);
  Tensor a = supernet.forward(batch, nullptr, false);
  Tensor b = model.net.forward(batch, nullptr, false);
  CHECK(a.data() == b.data());
}

TEST_CASE("a single kept channel per site still runs") {
  ArchitectureSpec spec = tiny_runnable_spec();
  Network supernet(spec, 23);
  std::vector<std::vector<uint8_t>> keep = {{0, 0, 1, 0}, {0, 1, 0, 0}};
  PrunedModel model = derive(supernet, keep);
  CHECK(model.spec.sites[0].width == 1);
  CHECK(model.spec.sites[1].width == 1);
  Tensor batch = sample_batch(2, 3, 6, 9);
  CHECK(verify_equivalence(supernet, keep, model, batch) == 0.0);
}

TEST_CASE("saved pruned models load back bit-identically") {
  const std::string stem = "/tmp/aprune_derive_roundtrip";
  ArchitectureSpec spec = build_resnet_spec(8, {4, 6, 8}, 5, 8);
  Network supernet(spec, 41);
  warm_bn(supernet, 8, 43);
  auto keep = random_keep(spec, 47);
  PrunedModel model = derive(supernet, keep);
  save_pruned(model, stem);

  PrunedModel back = load_pruned(stem);
  CHECK(spec_to_text(back.spec) == spec_to_text(model.spec));
  CHECK(back.kept == model.kept);
  CHECK(back.flops.total == model.flops.total);
  CHECK(back.flops.ratio_vs_unpruned == model.flops.ratio_vs_unpruned);

  auto orig = model.net.parameters();
  auto loaded = back.net.parameters();
  REQUIRE(orig.size() == loaded.size());
  for (size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i]->name == loaded[i]->name);
    CHECK(orig[i]->tensor.data() == loaded[i]->tensor.data());
  }
  for (size_t li = 0; li < model.spec.layers.size(); ++li) {
    CHECK(model.net.layer((int)li).bn_stats.mean ==
          back.net.layer((int)li).bn_stats.mean);
    CHECK(model.net.layer((int)li).bn_stats.var ==
          back.net.layer((int)li).bn_stats.var);
  }

  NoGradGuard ng;
  Tensor batch = sample_batch(4, 3, 8, 51);
  Tensor a = model.net.forward(batch, nullptr, false);
  Tensor b = back.net.forward(batch, nullptr, false);
  CHECK(a.data() == b.data());

  for (const char* ext : {".arch", ".weights", ".kept"})
    std::remove((stem + ext).c_str());
}

TEST_CASE("loading reports what is wrong with the files") {
  const std::string stem = "/tmp/aprune_derive_badfiles";
  ArchitectureSpec spec = tiny_runnable_spec();
  Network supernet(spec, 1);
  std::vector<std::vector<uint8_t>> keep = {{1, 1, 0, 0}, {1, 0, 1, 0}};
  PrunedModel model = derive(supernet, keep);
  save_pruned(model, stem);

  CHECK_THROWS_AS(load_pruned("/tmp/aprune_derive_missing"), IoError);

  // truncate the weight blob
  {
    std::ifstream in(stem + ".weights", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(stem + ".weights", std::ios::binary);
    out.write(bytes.data(), (std::streamsize)(bytes.size() / 2));
  }
  CHECK_THROWS_WITH_AS(load_pruned(stem), doctest::Contains("truncated"),
                       IoError);

  // rewrite with a bad magic
  {
    std::ofstream out(stem + ".weights", std::ios::binary);
    out << "NOPE";
  }
  CHECK_THROWS_WITH_AS(load_pruned(stem), doctest::Contains("bad magic"),
                       IoError);

  for (const char* ext : {".arch", ".weights", ".kept"})
    std::remove((stem + ext).c_str());
}
