#include "aprune/arch.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "aprune/errors.hpp"

namespace aprune {

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kDwConv: return "dwconv";
    case LayerKind::kPwConv: return "pwconv";
    case LayerKind::kLinear: return "linear";
    case LayerKind::kPool: return "pool";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& s) {
  if (s == "conv") return LayerKind::kConv;
  if (s == "dwconv") return LayerKind::kDwConv;
  if (s == "pwconv") return LayerKind::kPwConv;
  if (s == "linear") return LayerKind::kLinear;
  if (s == "pool") return LayerKind::kPool;
  throw ConfigError("unknown layer kind '" + s + "'");
}

namespace {

int site_width(const ArchitectureSpec& spec, int site, int fallback) {
  return site >= 0 ? spec.sites[site].width : fallback;
}

void check(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

}  // namespace

void ArchitectureSpec::validate() const {
  check(!layers.empty(), "spec has no layers");
  check(num_classes > 0, "spec has no classes");
  for (const auto& s : sites) {
    check(s.width >= 0, "site " + s.name + " has negative width");
    for (int l : s.masked_layers) {
      check(l >= 0 && l < (int)layers.size(),
            "site " + s.name + " masks missing layer " + std::to_string(l));
      check(layers[l].c_out == s.width,
            "site " + s.name + " width " + std::to_string(s.width) +
                " does not gate layer " + layers[l].name + " with c_out " +
                std::to_string(layers[l].c_out));
    }
  }
  for (const auto& p : residual_pairs) {
    check(p.site_in >= 0 && p.site_in < (int)sites.size() && p.site_out >= 0 &&
              p.site_out < (int)sites.size(),
          "residual pair references a missing site");
  }
  for (const auto& l : layers) {
    if (l.kind == LayerKind::kDwConv)
      check(l.c_in == l.c_out, "depthwise layer " + l.name +
                                   " must keep width, has " +
                                   std::to_string(l.c_in) + "->" +
                                   std::to_string(l.c_out));
  }

  const LayerDesc& stem = layers.front();
  check(stem.c_in == input_c, "layer " + stem.name + " expects " +
                                  std::to_string(stem.c_in) +
                                  " input channels, images have " +
                                  std::to_string(input_c));
  check(stem.out_site == -1, "first layer " + stem.name +
                                 " must not carry an indicator site");

  if (family == "resnet") {
    for (size_t bi = 0; bi < blocks.size(); ++bi) {
      const BlockDesc& b = blocks[bi];
      const std::string tag = "block " + std::to_string(bi);
      check(b.conv1 >= 0 && b.conv2 >= 0 && b.site_a >= 0 && b.site_b >= 0,
            tag + " is missing wiring");
      const LayerDesc& c1 = layers[b.conv1];
      const LayerDesc& c2 = layers[b.conv2];
      const int in_w = site_width(*this, b.in_site, stem.c_out);
      check(c1.c_in == in_w, "layer " + c1.name + " input " +
                                 std::to_string(c1.c_in) +
                                 " != stream width " + std::to_string(in_w));
      check(c1.c_out == sites[b.site_a].width,
            "layer " + c1.name + " output does not match its site");
      check(c2.c_in == sites[b.site_a].width,
            "layer " + c2.name + " input does not match site " +
                sites[b.site_a].name);
      check(c2.c_out == sites[b.site_b].width,
            "layer " + c2.name + " output does not match site " +
                sites[b.site_b].name);
      if (b.proj >= 0) {
        const LayerDesc& pr = layers[b.proj];
        check(pr.c_in == in_w, "layer " + pr.name + " input " +
                                   std::to_string(pr.c_in) +
                                   " != stream width " + std::to_string(in_w));
        check(pr.c_out == sites[b.site_b].width,
              "layer " + pr.name + " output does not match site " +
                  sites[b.site_b].name);
        check(b.shortcut_map.empty(), tag + " has both projection and map");
      } else if (!b.shortcut_map.empty()) {
        check((int)b.shortcut_map.size() == sites[b.site_b].width,
              tag + " shortcut map length != output width");
        for (int src : b.shortcut_map)
          check(src >= -1 && src < in_w, tag + " shortcut map source " +
                                             std::to_string(src) +
                                             " outside stream width " +
                                             std::to_string(in_w));
      } else {
        check(in_w == sites[b.site_b].width,
              tag + " identity shortcut joins widths " + std::to_string(in_w) +
                  " and " + std::to_string(sites[b.site_b].width));
      }
    }
  } else {
    // sequential family: channel counts chain layer to layer
    for (size_t i = 1; i < layers.size(); ++i) {
      check(layers[i].c_in == layers[i - 1].c_out,
            "layer " + layers[i].name + " input " +
                std::to_string(layers[i].c_in) + " != " + layers[i - 1].name +
                " output " + std::to_string(layers[i - 1].c_out));
    }
  }

  const LayerDesc& last = layers.back();
  check(last.kind == LayerKind::kLinear, "spec must end in the classifier");
  check(last.c_out == num_classes, "classifier emits " +
                                       std::to_string(last.c_out) +
                                       " classes, spec declares " +
                                       std::to_string(num_classes));
}

FlopsReport discrete_flops(const ArchitectureSpec& spec) {
  FlopsReport report;
  for (const auto& l : spec.layers) {
    long long f = 0;
    const long long hw = (long long)l.h * l.w;
    switch (l.kind) {
      case LayerKind::kConv:
      case LayerKind::kPwConv:
        f = hw * l.k * l.k * l.c_in * l.c_out;
        break;
      case LayerKind::kDwConv:
        f = hw * l.k * l.k * l.c_in;
        break;
      case LayerKind::kLinear:
        f = (long long)l.c_in * l.c_out;
        break;
      case LayerKind::kPool:
        f = 0;
        break;
    }
    report.per_layer.push_back({l.name, f});
    report.total += f;
  }
  return report;
}

ArchitectureSpec build_resnet_spec(int depth, const std::vector<int>& widths,
                                   int num_classes, int input_hw) {
  if (depth < 8 || (depth - 2) % 6 != 0)
    throw ConfigError("residual depth must be 6n+2 (8, 14, 20, 56, 110), got " +
                      std::to_string(depth));
  if (widths.size() != 3)
    throw ConfigError("residual net takes three stage widths, got " +
                      std::to_string(widths.size()));
  const int n = (depth - 2) / 6;

  ArchitectureSpec spec;
  spec.family = "resnet";
  spec.num_classes = num_classes;
  spec.input_c = 3;
  spec.input_h = spec.input_w = input_hw;

  int res = input_hw;
  spec.layers.push_back({"stem", LayerKind::kConv, 3, 3, widths[0], 1, res,
                         res, -1, -1});

  int stream_site = -1;  // site gating the running stream; -1 while unmasked
  for (int s = 0; s < 3; ++s) {
    const int w = widths[s];
    for (int b = 0; b < n; ++b) {
      const bool reduce = s > 0 && b == 0;
      if (reduce) res /= 2;
      const std::string base =
          "s" + std::to_string(s + 1) + ".b" + std::to_string(b);
      const int in_w = stream_site >= 0 ? spec.sites[stream_site].width
                                        : widths[0];

      const int site_a = (int)spec.sites.size();
      const int site_b = site_a + 1;
      const int conv1 = (int)spec.layers.size();
      spec.layers.push_back({base + ".conv1", LayerKind::kConv, 3, in_w, w,
                             reduce ? 2 : 1, res, res, stream_site, site_a});
      const int conv2 = (int)spec.layers.size();
      spec.layers.push_back({base + ".conv2", LayerKind::kConv, 3, w, w, 1,
                             res, res, site_a, site_b});
      int proj = -1;
      if (reduce) {
        proj = (int)spec.layers.size();
        spec.layers.push_back({base + ".proj", LayerKind::kConv, 1, in_w, w, 2,
                               res, res, stream_site, site_b});
      }
      spec.sites.push_back({base + ".a", w, {conv1}});
      SiteDesc sb{base + ".b", w, {conv2}};
      if (proj >= 0) sb.masked_layers.push_back(proj);
      spec.sites.push_back(sb);

      BlockDesc blk;
      blk.conv1 = conv1;
      blk.conv2 = conv2;
      blk.proj = proj;
      blk.site_a = site_a;
      blk.site_b = site_b;
      blk.in_site = stream_site;
      spec.blocks.push_back(blk);

      // identity shortcut between two gated streams: a symmetry pair
      if (!reduce && stream_site >= 0)
        spec.residual_pairs.push_back({stream_site, site_b});

      stream_site = site_b;
    }
  }

  const int w_last = widths[2];
  spec.layers.push_back({"pool", LayerKind::kPool, 1, w_last, w_last, 1, 1, 1,
                         stream_site, stream_site});
  spec.layers.push_back({"fc", LayerKind::kLinear, 1, w_last, num_classes, 1,
                         1, 1, stream_site, -1});
  spec.validate();
  return spec;
}

ArchitectureSpec build_mobilenet_spec(double multiplier, int num_classes,
                                      int input_hw) {
  if (multiplier <= 0.0 || multiplier > 1.0)
    throw ConfigError("width multiplier must be in (0,1], got " +
                      std::to_string(multiplier));
  auto scaled = [multiplier](int base) {
    return std::max(1, (int)std::ceil(multiplier * base));
  };

  ArchitectureSpec spec;
  spec.family = "mobilenet";
  spec.num_classes = num_classes;
  spec.input_c = 3;
  spec.input_h = spec.input_w = input_hw;

  struct Sep { int stride; int pw_base; };
  const std::vector<Sep> seps = {{1, 64},  {2, 128}, {1, 128},
                                 {2, 256}, {1, 256}, {2, 512}};

  int res = input_hw;
  int c = scaled(32);
  spec.layers.push_back({"stem", LayerKind::kConv, 3, 3, c, 1, res, res, -1,
                         -1});

  int stream_site = -1;
  for (size_t i = 0; i < seps.size(); ++i) {
    const std::string base = "sep" + std::to_string(i);
    if (seps[i].stride == 2) res /= 2;
    // depthwise rides the previous pointwise's site on both ends
    spec.layers.push_back({base + ".dw", LayerKind::kDwConv, 3, c, c,
                           seps[i].stride, res, res, stream_site, stream_site});
    if (stream_site >= 0)
      spec.sites[stream_site].masked_layers.push_back(
          (int)spec.layers.size() - 1);

    const int c_next = scaled(seps[i].pw_base);
    const int site = (int)spec.sites.size();
    spec.layers.push_back({base + ".pw", LayerKind::kPwConv, 1, c, c_next, 1,
                           res, res, stream_site, site});
    spec.sites.push_back(
        {base + ".pw", c_next, {(int)spec.layers.size() - 1}});
    c = c_next;
    stream_site = site;
  }

  spec.layers.push_back({"pool", LayerKind::kPool, 1, c, c, 1, 1, 1,
                         stream_site, stream_site});
  spec.layers.push_back({"fc", LayerKind::kLinear, 1, c, num_classes, 1, 1, 1,
                         stream_site, -1});
  spec.validate();
  return spec;
}

ArchitectureSpec prune_spec(const ArchitectureSpec& base,
                            const std::vector<std::vector<uint8_t>>& keep) {
  if (keep.size() != base.sites.size())
    throw ShapeError("prune_spec: " + std::to_string(keep.size()) +
                     " keep masks for " + std::to_string(base.sites.size()) +
                     " sites");
  std::vector<std::vector<int>> kept(keep.size());
  for (size_t i = 0; i < keep.size(); ++i) {
    if ((int)keep[i].size() != base.sites[i].width)
      throw ShapeError("prune_spec: mask length " +
                       std::to_string(keep[i].size()) + " for site " +
                       base.sites[i].name + " of width " +
                       std::to_string(base.sites[i].width));
    for (size_t j = 0; j < keep[i].size(); ++j)
      if (keep[i][j]) kept[i].push_back((int)j);
  }

  ArchitectureSpec out = base;
  for (size_t i = 0; i < kept.size(); ++i)
    out.sites[i].width = (int)kept[i].size();
  for (auto& l : out.layers) {
    if (l.in_site >= 0) l.c_in = out.sites[l.in_site].width;
    if (l.out_site >= 0) l.c_out = out.sites[l.out_site].width;
  }
  // depthwise width follows the single shared site
  for (auto& l : out.layers)
    if (l.kind == LayerKind::kDwConv) l.c_out = l.c_in;

  for (auto& b : out.blocks) {
    b.shortcut_map.clear();
    if (b.proj >= 0) continue;
    const std::vector<int>* in_kept =
        b.in_site >= 0 ? &kept[b.in_site] : nullptr;
    const std::vector<int>& out_kept = kept[b.site_b];
    const int in_w = b.in_site >= 0 ? (int)in_kept->size()
                                    : base.layers.front().c_out;
    std::vector<int> map(out_kept.size(), -1);
    bool identity = (int)out_kept.size() == in_w;
    for (size_t j = 0; j < out_kept.size(); ++j) {
      if (in_kept) {
        // position of the original channel in the pruned input stream
        auto it = std::lower_bound(in_kept->begin(), in_kept->end(),
                                   out_kept[j]);
        if (it != in_kept->end() && *it == out_kept[j])
          map[j] = (int)(it - in_kept->begin());
      } else {
        map[j] = out_kept[j];  // stream is the full-width stem
      }
      if (map[j] != (int)j) identity = false;
    }
    if (!identity) b.shortcut_map = std::move(map);
  }
  return out;
}

namespace {

std::string int_list(const std::vector<int>& v) {
  if (v.empty()) return "-";
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << ",";
    os << v[i];
  }
  return os.str();
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> v;
  if (s == "-") return v;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) v.push_back(std::stoi(tok));
  return v;
}

// "key=value" -> value, enforcing the key
std::string expect_kv(std::istream& in, const std::string& key,
                      const std::string& where) {
  std::string tok;
  if (!(in >> tok))
    throw IoError("architecture text: missing " + key + " in " + where);
  const auto eq = tok.find('=');
  if (eq == std::string::npos || tok.substr(0, eq) != key)
    throw IoError("architecture text: expected " + key + "=... in " + where +
                  ", got '" + tok + "'");
  return tok.substr(eq + 1);
}

}  // namespace

std::string spec_to_text(const ArchitectureSpec& spec) {
  std::ostringstream os;
  os << "aprune-arch 1\n";
  os << "family " << spec.family << "\n";
  os << "classes " << spec.num_classes << "\n";
  os << "input " << spec.input_c << " " << spec.input_h << " " << spec.input_w
     << "\n";
  os << "layers " << spec.layers.size() << "\n";
  for (const auto& l : spec.layers) {
    os << "L " << l.name << " " << to_string(l.kind) << " k=" << l.k
       << " cin=" << l.c_in << " cout=" << l.c_out << " stride=" << l.stride
       << " h=" << l.h << " w=" << l.w << " in=" << l.in_site
       << " out=" << l.out_site << "\n";
  }
  os << "sites " << spec.sites.size() << "\n";
  for (const auto& s : spec.sites)
    os << "S " << s.name << " width=" << s.width
       << " masks=" << int_list(s.masked_layers) << "\n";
  os << "blocks " << spec.blocks.size() << "\n";
  for (const auto& b : spec.blocks)
    os << "B conv1=" << b.conv1 << " conv2=" << b.conv2 << " proj=" << b.proj
       << " a=" << b.site_a << " b=" << b.site_b << " in=" << b.in_site
       << " map=" << int_list(b.shortcut_map) << "\n";
  os << "pairs " << spec.residual_pairs.size() << "\n";
  for (const auto& p : spec.residual_pairs)
    os << "P " << p.site_in << " " << p.site_out << "\n";
  os << "end\n";
  return os.str();
}

ArchitectureSpec spec_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string tok;
  int version = 0;
  if (!(in >> tok >> version) || tok != "aprune-arch" || version != 1)
    throw IoError("architecture text: bad header");

  ArchitectureSpec spec;
  size_t n = 0;
  auto expect_word = [&](const std::string& want) {
    if (!(in >> tok) || tok != want)
      throw IoError("architecture text: expected '" + want + "', got '" + tok +
                    "'");
  };

  expect_word("family");
  in >> spec.family;
  expect_word("classes");
  in >> spec.num_classes;
  expect_word("input");
  in >> spec.input_c >> spec.input_h >> spec.input_w;

  expect_word("layers");
  in >> n;
  for (size_t i = 0; i < n; ++i) {
    expect_word("L");
    LayerDesc l;
    std::string kind;
    in >> l.name >> kind;
    l.kind = layer_kind_from_string(kind);
    const std::string where = "layer " + l.name;
    l.k = std::stoi(expect_kv(in, "k", where));
    l.c_in = std::stoi(expect_kv(in, "cin", where));
    l.c_out = std::stoi(expect_kv(in, "cout", where));
    l.stride = std::stoi(expect_kv(in, "stride", where));
    l.h = std::stoi(expect_kv(in, "h", where));
    l.w = std::stoi(expect_kv(in, "w", where));
    l.in_site = std::stoi(expect_kv(in, "in", where));
    l.out_site = std::stoi(expect_kv(in, "out", where));
    spec.layers.push_back(std::move(l));
  }

  expect_word("sites");
  in >> n;
  for (size_t i = 0; i < n; ++i) {
    expect_word("S");
    SiteDesc s;
    in >> s.name;
    const std::string where = "site " + s.name;
    s.width = std::stoi(expect_kv(in, "width", where));
    s.masked_layers = parse_int_list(expect_kv(in, "masks", where));
    spec.sites.push_back(std::move(s));
  }

  expect_word("blocks");
  in >> n;
  for (size_t i = 0; i < n; ++i) {
    expect_word("B");
    BlockDesc b;
    const std::string where = "block " + std::to_string(i);
    b.conv1 = std::stoi(expect_kv(in, "conv1", where));
    b.conv2 = std::stoi(expect_kv(in, "conv2", where));
    b.proj = std::stoi(expect_kv(in, "proj", where));
    b.site_a = std::stoi(expect_kv(in, "a", where));
    b.site_b = std::stoi(expect_kv(in, "b", where));
    b.in_site = std::stoi(expect_kv(in, "in", where));
    b.shortcut_map = parse_int_list(expect_kv(in, "map", where));
    spec.blocks.push_back(std::move(b));
  }

  expect_word("pairs");
  in >> n;
  for (size_t i = 0; i < n; ++i) {
    expect_word("P");
    ResidualPair p;
    in >> p.site_in >> p.site_out;
    spec.residual_pairs.push_back(p);
  }
  expect_word("end");
  return spec;
}

}  // namespace aprune
