#include "aprune/derive.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "aprune/errors.hpp"

namespace aprune {

namespace {

std::vector<int> full_range(int n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// kept input/output channel lists for one layer of the original spec
std::vector<int> layer_in_list(const LayerDesc& l,
                               const std::vector<std::vector<int>>& kept) {
  return l.in_site >= 0 ? kept[l.in_site] : full_range(l.c_in);
}
std::vector<int> layer_out_list(const LayerDesc& l,
                                const std::vector<std::vector<int>>& kept) {
  return l.out_site >= 0 ? kept[l.out_site] : full_range(l.c_out);
}

void slice_channel_vector(const std::vector<float>& src,
                          const std::vector<int>& keep,
                          std::vector<float>& dst) {
  dst.resize(keep.size());
  for (size_t i = 0; i < keep.size(); ++i) dst[i] = src[keep[i]];
}

}  // namespace

std::vector<std::vector<uint8_t>> keep_masks(const IndicatorSet& indicators,
                                             double threshold) {
  std::vector<std::vector<uint8_t>> keep(indicators.num_sites());
  for (int i = 0; i < indicators.num_sites(); ++i) {
    const auto& a = indicators.alpha(i).tensor.data();
    keep[i].resize(a.size());
    for (size_t j = 0; j < a.size(); ++j)
      keep[i][j] =
          relaxed_indicator(a[j], indicators.temperature()) > threshold ? 1
                                                                        : 0;
  }
  return keep;
}

PrunedModel derive(const Network& supernet, const IndicatorSet& indicators) {
  return derive(supernet, keep_masks(indicators, 0.5));
}

PrunedModel derive(const Network& supernet,
                   const std::vector<std::vector<uint8_t>>& keep) {
  const ArchitectureSpec& base = supernet.spec();
  if (keep.size() != base.sites.size())
    throw ShapeError("derive: " + std::to_string(keep.size()) +
                     " keep masks for " + std::to_string(base.sites.size()) +
                     " sites");

  std::vector<std::vector<int>> kept(keep.size());
  for (size_t i = 0; i < keep.size(); ++i) {
    for (size_t j = 0; j < keep[i].size(); ++j)
      if (keep[i][j]) kept[i].push_back((int)j);
    if (kept[i].empty())
      throw CollapseError("site " + base.sites[i].name +
                          " collapsed: kept 0 of " +
                          std::to_string(base.sites[i].width) +
                          " channels; rerun with a larger FLOPs target");
  }

  ArchitectureSpec pruned_spec = prune_spec(base, keep);
  pruned_spec.validate();

  Network pruned_net(pruned_spec, 0);
  PrunedModel model{std::move(pruned_spec), std::move(pruned_net),
                    std::move(kept), {}};
  // slice every layer's weights out of the supernet, bit for bit
  for (size_t li = 0; li < base.layers.size(); ++li) {
    const LayerDesc& ol = base.layers[li];
    if (ol.kind == LayerKind::kPool) continue;
    const LayerParams& src = supernet.layer((int)li);
    LayerParams& dst = model.net.layer((int)li);
    const std::vector<int> in = layer_in_list(ol, model.kept);
    const std::vector<int> out = layer_out_list(ol, model.kept);

    if (ol.kind == LayerKind::kLinear) {
      const auto& sw = src.weight.tensor.data();
      auto& dw = dst.weight.tensor.data();
      size_t t = 0;
      for (int i : in)
        for (int o = 0; o < ol.c_out; ++o)
          dw[t++] = sw[(size_t)i * ol.c_out + o];
      dst.bias.tensor.data() = src.bias.tensor.data();
      continue;
    }

    const auto& sw = src.weight.tensor.data();
    auto& dw = dst.weight.tensor.data();
    size_t t = 0;
    if (ol.kind == LayerKind::kDwConv) {
      for (int kh = 0; kh < ol.k; ++kh)
        for (int kw = 0; kw < ol.k; ++kw)
          for (int c : out)
            dw[t++] = sw[((size_t)kh * ol.k + kw) * ol.c_out + c];
    } else {
      for (int kh = 0; kh < ol.k; ++kh)
        for (int kw = 0; kw < ol.k; ++kw)
          for (int i : in)
            for (int o : out)
              dw[t++] =
                  sw[(((size_t)kh * ol.k + kw) * ol.c_in + i) * ol.c_out + o];
    }
    slice_channel_vector(src.bn_gamma.tensor.data(), out,
                         dst.bn_gamma.tensor.data());
    slice_channel_vector(src.bn_beta.tensor.data(), out,
                         dst.bn_beta.tensor.data());
    slice_channel_vector(src.bn_stats.mean, out, dst.bn_stats.mean);
    slice_channel_vector(src.bn_stats.var, out, dst.bn_stats.var);
  }

  model.flops = discrete_flops(model.spec);
  const long long full = discrete_flops(base).total;
  model.flops.ratio_vs_unpruned = full ? (double)model.flops.total / full : 1.0;
  return model;
}

double verify_equivalence(Network& supernet,
                          const std::vector<std::vector<uint8_t>>& keep,
                          PrunedModel& pruned, const Tensor& batch) {
  NoGradGuard eval_only;
  auto masks = hard_mask_tensors(keep);
  Tensor a = supernet.forward(batch, &masks, false);
  Tensor b = pruned.net.forward(batch, nullptr, false);
  if (a.shape() != b.shape())
    throw ShapeError("verify_equivalence: logit shapes differ, " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double worst = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, (double)std::fabs(a.data()[i] - b.data()[i]));
  return worst;
}

namespace {

constexpr char kWeightsMagic[4] = {'A', 'P', 'W', 'T'};

struct BlobEntry {
  Shape shape;
  std::vector<float> data;
};

void write_entry(std::ofstream& out, const std::string& name,
                 const Shape& shape, const std::vector<float>& data) {
  const uint32_t name_len = (uint32_t)name.size();
  out.write((const char*)&name_len, sizeof(name_len));
  out.write(name.data(), name_len);
  const uint32_t rank = (uint32_t)shape.size();
  out.write((const char*)&rank, sizeof(rank));
  for (int d : shape) {
    const int32_t v = d;
    out.write((const char*)&v, sizeof(v));
  }
  out.write((const char*)data.data(), data.size() * sizeof(float));
}

std::map<std::string, BlobEntry> read_blob(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kWeightsMagic, 4) != 0)
    throw IoError(path + ": not a weight blob (bad magic)");
  uint32_t count = 0;
  if (!in.read((char*)&count, sizeof(count)))
    throw IoError(path + ": truncated entry count");

  std::map<std::string, BlobEntry> entries;
  for (uint32_t e = 0; e < count; ++e) {
    auto fail = [&](const std::string& what) {
      throw IoError(path + ": " + what + " in entry " + std::to_string(e) +
                    " at byte offset " + std::to_string((long long)in.tellg()));
    };
    uint32_t name_len = 0;
    if (!in.read((char*)&name_len, sizeof(name_len))) fail("truncated name");
    if (name_len > 4096) fail("implausible name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) fail("truncated name");
    uint32_t rank = 0;
    if (!in.read((char*)&rank, sizeof(rank))) fail("truncated rank");
    if (rank > 8) fail("implausible rank");
    BlobEntry entry;
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      int32_t v = 0;
      if (!in.read((char*)&v, sizeof(v))) fail("truncated dims");
      if (v <= 0) fail("non-positive dimension");
      entry.shape.push_back(v);
      numel *= v;
    }
    entry.data.resize((size_t)numel);
    if (!in.read((char*)entry.data.data(), numel * sizeof(float)))
      fail("truncated data");
    entries.emplace(std::move(name), std::move(entry));
  }
  return entries;
}

}  // namespace

void save_network_weights(Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kWeightsMagic, 4);

  auto params = net.parameters();
  uint32_t count = (uint32_t)params.size();
  for (size_t i = 0; i < net.spec().layers.size(); ++i)
    if (net.layer((int)i).has_bn) count += 2;
  out.write((const char*)&count, sizeof(count));

  for (auto* p : params)
    write_entry(out, p->name, p->tensor.shape(), p->tensor.data());
  for (size_t i = 0; i < net.spec().layers.size(); ++i) {
    const LayerParams& lp = net.layer((int)i);
    if (!lp.has_bn) continue;
    const std::string base = net.spec().layers[i].name + ".bn";
    write_entry(out, base + ".mean", {(int)lp.bn_stats.mean.size()},
                lp.bn_stats.mean);
    write_entry(out, base + ".var", {(int)lp.bn_stats.var.size()},
                lp.bn_stats.var);
  }
}

void load_network_weights(Network& net, const std::string& path) {
  auto entries = read_blob(path);
  auto take = [&](const std::string& name, const Shape& want) -> BlobEntry& {
    auto it = entries.find(name);
    if (it == entries.end())
      throw IoError(path + ": missing entry '" + name + "'");
    if (it->second.shape != want)
      throw IoError(path + ": entry '" + name + "' has shape " +
                    shape_str(it->second.shape) + ", network expects " +
                    shape_str(want));
    return it->second;
  };

  for (auto* p : net.parameters())
    p->tensor.data() = take(p->name, p->tensor.shape()).data;
  for (size_t i = 0; i < net.spec().layers.size(); ++i) {
    LayerParams& lp = net.layer((int)i);
    if (!lp.has_bn) continue;
    const std::string base = net.spec().layers[i].name + ".bn";
    lp.bn_stats.mean =
        take(base + ".mean", {(int)lp.bn_stats.mean.size()}).data;
    lp.bn_stats.var = take(base + ".var", {(int)lp.bn_stats.var.size()}).data;
  }
}

namespace {

std::string kept_list(const std::vector<int>& v) {
  if (v.empty()) return "-";
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    os << v[i];
  }
  return os.str();
}

}  // namespace

void save_pruned(const PrunedModel& model, const std::string& stem) {
  {
    std::ofstream arch(stem + ".arch");
    if (!arch) throw IoError("cannot write " + stem + ".arch");
    arch << spec_to_text(model.spec);
  }
  {
    std::ofstream kept(stem + ".kept");
    if (!kept) throw IoError("cannot write " + stem + ".kept");
    kept << std::setprecision(17);  // ratio survives the text round-trip
    kept << "aprune-kept 1\n";
    kept << "ratio " << model.flops.ratio_vs_unpruned << "\n";
    kept << "sites " << model.kept.size() << "\n";
    for (size_t i = 0; i < model.kept.size(); ++i)
      kept << "K " << model.spec.sites[i].name << " "
           << kept_list(model.kept[i]) << "\n";
    kept << "end\n";
  }
  // parameters() is non-const by design; saving does not mutate
  save_network_weights(const_cast<PrunedModel&>(model).net, stem + ".weights");
}

PrunedModel load_pruned(const std::string& stem) {
  std::ifstream arch(stem + ".arch");
  if (!arch) throw IoError("cannot open " + stem + ".arch");
  std::stringstream buf;
  buf << arch.rdbuf();
  ArchitectureSpec spec = spec_from_text(buf.str());
  spec.validate();

  PrunedModel model{spec, Network(spec, 0), {}, discrete_flops(spec)};
  load_network_weights(model.net, stem + ".weights");

  std::ifstream kept(stem + ".kept");
  if (!kept) throw IoError("cannot open " + stem + ".kept");
  std::string tok;
  int version = 0;
  if (!(kept >> tok >> version) || tok != "aprune-kept" || version != 1)
    throw IoError(stem + ".kept: bad header");
  double ratio = 1.0;
  size_t n = 0;
  if (!(kept >> tok >> ratio) || tok != "ratio")
    throw IoError(stem + ".kept: missing ratio");
  if (!(kept >> tok >> n) || tok != "sites")
    throw IoError(stem + ".kept: missing site count");
  if (n != spec.sites.size())
    throw IoError(stem + ".kept: " + std::to_string(n) + " sites for a spec with " +
                  std::to_string(spec.sites.size()));
  model.flops.ratio_vs_unpruned = ratio;
  model.kept.resize(n);
  for (size_t i = 0; i < n; ++i) {
    std::string name, list;
    if (!(kept >> tok >> name >> list) || tok != "K")
      throw IoError(stem + ".kept: bad site line " + std::to_string(i));
    if (list != "-") {
      std::istringstream ls(list);
      std::string item;
      while (std::getline(ls, item, ','))
        model.kept[i].push_back(std::stoi(item));
    }
    if ((int)model.kept[i].size() != spec.sites[i].width)
      throw IoError(stem + ".kept: site " + name + " keeps " +
                    std::to_string(model.kept[i].size()) +
                    " channels, spec width is " +
                    std::to_string(spec.sites[i].width));
  }
  return model;
}

}  // namespace aprune
