#ifndef APRUNE_ARCH_HPP_
#define APRUNE_ARCH_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace aprune {

enum class LayerKind { kConv, kDwConv, kPwConv, kLinear, kPool };

std::string to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

// One weighted (or pool) layer. h/w are the OUTPUT spatial extent, which is
// what the cost model multiplies by. in_site / out_site name the indicator
// sites governing the layer's input and output widths; -1 means the
// dimension is not prunable and contributes its full channel count.
struct LayerDesc {
  std::string name;
  LayerKind kind = LayerKind::kConv;
  int k = 1;
  int c_in = 0;
  int c_out = 0;
  int stride = 1;
  int h = 0;
  int w = 0;
  int in_site = -1;
  int out_site = -1;
};

struct SiteDesc {
  std::string name;
  int width = 0;
  std::vector<int> masked_layers;  // layers whose output stream this gates
};

// Residual block plumbing. site_a gates the first conv's output, site_b the
// post-addition stream. in_site is the stream feeding the block (-1: the
// ungated stem). proj is -1 for identity shortcuts. shortcut_map is only
// populated on pruned specs whose identity blocks kept different index sets
// on the two ends: entry j is the input-stream channel feeding output
// channel j, or -1 for a zero fill.
struct BlockDesc {
  int conv1 = -1;
  int conv2 = -1;
  int proj = -1;
  int site_a = -1;
  int site_b = -1;
  int in_site = -1;
  std::vector<int> shortcut_map;
};

struct ResidualPair {
  int site_in = -1;
  int site_out = -1;
};

struct ArchitectureSpec {
  std::string family;  // "resnet" | "mobilenet"
  int num_classes = 0;
  int input_c = 3;
  int input_h = 0;
  int input_w = 0;
  std::vector<LayerDesc> layers;
  std::vector<SiteDesc> sites;
  std::vector<BlockDesc> blocks;        // resnet family only
  std::vector<ResidualPair> residual_pairs;

  // Checks channel chaining, site widths, and block wiring; throws
  // ShapeError naming the offending layer or site.
  void validate() const;
};

struct FlopsReport {
  struct Entry {
    std::string layer;
    long long flops = 0;
  };
  std::vector<Entry> per_layer;
  long long total = 0;
  double ratio_vs_unpruned = 1.0;
};

// Multiply-accumulate count: conv h*w*k^2*c_in*c_out, depthwise h*w*k^2*c,
// linear c_in*c_out, pool 0.
FlopsReport discrete_flops(const ArchitectureSpec& spec);

// Three-stage residual net of depth 6n+2. Site A behind each block's first
// conv, site B behind the addition; the stem carries no site.
ArchitectureSpec build_resnet_spec(int depth, const std::vector<int>& widths,
                                   int num_classes, int input_hw);

// Depthwise-separable stack; one site per pointwise output, shared with the
// following depthwise layer. Widths are ceil(multiplier * base).
ArchitectureSpec build_mobilenet_spec(double multiplier, int num_classes,
                                      int input_hw);

// New spec with per-site widths cut to the kept channels. Tolerates empty
// keep sets (zero-width layers) so exhaustive mask enumeration can price
// every corner; building a runnable network from a collapsed spec is
// rejected later by derivation.
ArchitectureSpec prune_spec(const ArchitectureSpec& base,
                            const std::vector<std::vector<uint8_t>>& keep);

// Human-readable structured text, byte-stable for a given spec.
std::string spec_to_text(const ArchitectureSpec& spec);
ArchitectureSpec spec_from_text(const std::string& text);

}  // namespace aprune

#endif  // APRUNE_ARCH_HPP_
