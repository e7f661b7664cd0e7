#include "aprune/model.hpp"

#include <cmath>
#include <random>

#include "aprune/errors.hpp"

namespace aprune {

Network::Network(ArchitectureSpec spec, uint32_t seed)
    : spec_(std::move(spec)) {
  spec_.validate();
  std::mt19937 rng(seed);

  layers_.resize(spec_.layers.size());
  for (size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerDesc& l = spec_.layers[i];
    LayerParams& p = layers_[i];
    if (l.kind == LayerKind::kPool) continue;
    if (l.c_in <= 0 || l.c_out <= 0)
      throw ShapeError("layer " + l.name + " collapsed to " +
                       std::to_string(l.c_in) + "->" +
                       std::to_string(l.c_out) + " channels");

    if (l.kind == LayerKind::kLinear) {
      const float bound = 1.0f / std::sqrt((float)l.c_in);
      std::uniform_real_distribution<float> dist(-bound, bound);
      std::vector<float> w((size_t)l.c_in * l.c_out);
      for (auto& v : w) v = dist(rng);
      p.weight = Parameter(Tensor::from_data({l.c_in, l.c_out}, std::move(w)),
                           l.name + ".w");
      p.bias = Parameter(Tensor::zeros({l.c_out}), l.name + ".b");
      p.has_weight = p.has_bias = true;
      continue;
    }

    // conv variants, Kaiming fan-out
    const bool dw = l.kind == LayerKind::kDwConv;
    const int fan_out = l.k * l.k * (dw ? 1 : l.c_out);
    std::normal_distribution<float> dist(0.0f,
                                         std::sqrt(2.0f / (float)fan_out));
    Shape shape = dw ? Shape{l.k, l.k, l.c_out}
                     : Shape{l.k, l.k, l.c_in, l.c_out};
    std::vector<float> w((size_t)shape_numel(shape));
    for (auto& v : w) v = dist(rng);
    p.weight = Parameter(Tensor::from_data(shape, std::move(w)), l.name + ".w");
    p.bn_gamma = Parameter(Tensor::full({l.c_out}, 1.0f), l.name + ".bn.g");
    p.bn_beta = Parameter(Tensor::zeros({l.c_out}), l.name + ".bn.b");
    p.bn_stats = ops::BnStats(l.c_out);
    p.has_weight = p.has_bn = true;
  }
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : layers_) {
    if (p.has_weight) out.push_back(&p.weight);
    if (p.has_bias) out.push_back(&p.bias);
    if (p.has_bn) {
      out.push_back(&p.bn_gamma);
      out.push_back(&p.bn_beta);
    }
  }
  return out;
}

int64_t Network::param_count() const {
  int64_t total = 0;
  for (const auto& p : layers_) {
    if (p.has_weight) total += p.weight.tensor.numel();
    if (p.has_bias) total += p.bias.tensor.numel();
    if (p.has_bn) total += p.bn_gamma.tensor.numel() + p.bn_beta.tensor.numel();
  }
  return total;
}

Tensor Network::run_layer(int layer_id, const Tensor& x, bool training,
                          bool relu_after) {
  const LayerDesc& l = spec_.layers[layer_id];
  LayerParams& p = layers_[layer_id];
  const int pad = l.k / 2;
  Tensor y;
  switch (l.kind) {
    case LayerKind::kConv:
    case LayerKind::kPwConv:
      y = ops::conv2d(x, p.weight.tensor, l.stride, pad, l.name);
      break;
    case LayerKind::kDwConv:
      y = ops::dwconv2d(x, p.weight.tensor, l.stride, pad, l.name);
      break;
    default:
      throw ShapeError("layer " + l.name + " is not a convolution");
  }
  y = ops::batch_norm(y, p.bn_gamma.tensor, p.bn_beta.tensor, p.bn_stats,
                      training, l.name);
  if (relu_after) y = ops::relu(y);
  return y;
}

Tensor Network::forward(const Tensor& input,
                        const std::vector<Tensor>* site_masks, bool training) {
  if (input.shape().size() != 4 || input.dim(1) != spec_.input_c)
    throw ShapeError("forward: input shape " + shape_str(input.shape()) +
                     ", expected (N," + std::to_string(spec_.input_c) + "," +
                     std::to_string(spec_.input_h) + "," +
                     std::to_string(spec_.input_w) + ")");
  if (site_masks && (int)site_masks->size() != (int)spec_.sites.size())
    throw ShapeError("forward: " + std::to_string(site_masks->size()) +
                     " masks for " + std::to_string(spec_.sites.size()) +
                     " sites");

  auto mask_at = [&](Tensor x, int site) {
    if (!site_masks || site < 0) return x;
    return ops::channel_mask(x, (*site_masks)[site], spec_.sites[site].name);
  };

  Tensor x;
  if (spec_.family == "resnet") {
    x = run_layer(0, input, training, true);  // ungated stem
    for (size_t bi = 0; bi < spec_.blocks.size(); ++bi) {
      const BlockDesc& b = spec_.blocks[bi];
      Tensor inp = x;
      Tensor h = run_layer(b.conv1, inp, training, true);
      h = mask_at(h, b.site_a);
      h = run_layer(b.conv2, h, training, false);
      Tensor sc;
      if (b.proj >= 0) {
        sc = run_layer(b.proj, inp, training, false);
      } else if (!b.shortcut_map.empty()) {
        sc = ops::gather_channels(inp, b.shortcut_map,
                                  "block" + std::to_string(bi) + ".shortcut");
      } else {
        sc = inp;
      }
      x = ops::relu(ops::add(h, sc));
      x = mask_at(x, b.site_b);
    }
  } else {
    x = input;
    for (size_t i = 0; i < spec_.layers.size(); ++i) {
      const LayerDesc& l = spec_.layers[i];
      if (l.kind == LayerKind::kPool || l.kind == LayerKind::kLinear) break;
      x = run_layer((int)i, x, training, true);
      x = mask_at(x, l.out_site);
    }
  }

  x = ops::global_avg_pool(x);
  const int fc = (int)spec_.layers.size() - 1;
  return ops::linear(x, layers_[fc].weight.tensor, layers_[fc].bias.tensor,
                     spec_.layers[fc].name);
}

Tensor forward_masked(Network& net, const IndicatorSet& indicators,
                      const Tensor& input, bool training) {
  const auto& sites = net.spec().sites;
  if (indicators.num_sites() != (int)sites.size())
    throw ShapeError("forward_masked: indicator set has " +
                     std::to_string(indicators.num_sites()) +
                     " sites, spec has " + std::to_string(sites.size()));
  std::vector<Tensor> masks;
  masks.reserve(sites.size());
  for (int i = 0; i < indicators.num_sites(); ++i) {
    if (indicators.site(i).width != sites[i].width)
      throw ShapeError("forward_masked: site " + sites[i].name + " expects " +
                       std::to_string(sites[i].width) + " channels, indicator has " +
                       std::to_string(indicators.site(i).width));
    masks.push_back(indicators.relaxed(i));
  }
  return net.forward(input, &masks, training);
}

std::vector<Tensor> hard_mask_tensors(
    const std::vector<std::vector<uint8_t>>& keep) {
  std::vector<Tensor> masks;
  masks.reserve(keep.size());
  for (const auto& k : keep) {
    std::vector<float> v(k.size());
    for (size_t i = 0; i < k.size(); ++i) v[i] = k[i] ? 1.0f : 0.0f;
    masks.push_back(Tensor::from_data({(int)k.size()}, std::move(v)));
  }
  return masks;
}

}  // namespace aprune
