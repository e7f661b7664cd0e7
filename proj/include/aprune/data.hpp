#ifndef APRUNE_DATA_HPP_
#define APRUNE_DATA_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "aprune/tensor.hpp"

namespace aprune {

// An immutable image corpus in (N, C, H, W) float layout. Normalization
// stats are filled by split() from the training portion only; empty stats
// mean "not normalized yet" and batch as identity.
struct Dataset {
  int num_classes = 0;
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> images;  // size() * channels * height * width
  std::vector<int> labels;
  std::vector<float> mean;   // per channel, from the training split
  std::vector<float> stdev;  // per channel, from the training split

  int64_t size() const { return (int64_t)labels.size(); }
  int64_t pixels_per_image() const {
    return (int64_t)channels * height * width;
  }
};

struct SplitDataset {
  Dataset train;
  Dataset val;
};

// FNV-1a over the image bytes and labels, logged on load so two runs can
// prove they read the same corpus.
uint64_t dataset_checksum(const Dataset& ds);

// Two on-disk layouts, both documented in the README:
//   *.csv  — header line "c h w num_classes", then one example per line:
//            "label,p0,p1,..." row-major C*H*W floats.
//   other  — binary: magic "APIX", five little-endian uint32 (N,C,H,W,
//            num_classes), N*C*H*W float32 pixels, N int32 labels.
// Malformed input throws IoError naming the line (csv) or byte offset
// (binary).
Dataset load_small_image_corpus(const std::string& path);
void save_small_image_corpus(const Dataset& ds, const std::string& path);

// Class-conditional oriented bars: class k draws a soft bar through the
// (jittered) image center at angle pi*k/num_classes, plus Gaussian pixel
// noise. Angles are not flip-invariant, which is why horizontal flip
// defaults off in the batcher. Deterministic in the seed.
Dataset make_synthetic_task(int num_classes, int examples_per_class,
                            int image_size, uint32_t seed,
                            double noise = 0.25);

// Seed-deterministic label-stratified split; train gets round(ratio * n_c)
// of each class (clamped so both sides keep at least one example).
// Normalization stats are computed on the training side and stamped on
// both. Throws ConfigError for a class with fewer than 2 examples.
SplitDataset split(const Dataset& ds, double train_ratio, uint32_t seed);

// Epoch-seeded shuffling batch iterator. Augmentation (pad-4 random crop,
// optional horizontal flip) applies only when constructed with
// augment=true; evaluation batchers iterate in corpus order.
class Batcher {
 public:
  Batcher(const Dataset& ds, int batch_size, uint32_t seed, bool shuffle,
          bool augment, bool hflip = false);

  // Deterministic reshuffle for the given epoch; resets the cursor.
  void start_epoch(int epoch);
  // Fills one batch (possibly short at the end); false when exhausted.
  bool next(Tensor* images, std::vector<int>* labels);

  int batches_per_epoch() const;

 private:
  const Dataset* ds_;
  int batch_size_;
  uint32_t seed_;
  bool shuffle_, augment_, hflip_;
  std::vector<int64_t> order_;
  int64_t cursor_ = 0;
  uint64_t draw_state_ = 0;  // per-epoch augmentation stream
};

// Top-1 accuracy of argmax(logits) against labels, logits shape (N, K).
double accuracy(const Tensor& logits, const std::vector<int>& labels);

}  // namespace aprune

#endif  // APRUNE_DATA_HPP_
