#include "aprune/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "aprune/errors.hpp"

namespace aprune {

namespace {

void check_consistent(const Dataset& ds, const std::string& where) {
  if (ds.size() == 0) throw IoError(where + ": zero examples");
  if ((int64_t)ds.images.size() != ds.size() * ds.pixels_per_image())
    throw IoError(where + ": " + std::to_string(ds.images.size()) +
                  " pixels for " + std::to_string(ds.size()) + " examples of " +
                  std::to_string(ds.pixels_per_image()) + " pixels each");
  for (size_t i = 0; i < ds.labels.size(); ++i)
    if (ds.labels[i] < 0 || ds.labels[i] >= ds.num_classes)
      throw IoError(where + ": example " + std::to_string(i) + " has label " +
                    std::to_string(ds.labels[i]) + ", classes are [0," +
                    std::to_string(ds.num_classes) + ")");
}

uint64_t fnv1a(uint64_t h, const void* bytes, size_t n) {
  const auto* p = (const unsigned char*)bytes;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

constexpr char kBinaryMagic[4] = {'A', 'P', 'I', 'X'};

Dataset load_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  auto fail = [&](const std::string& what) {
    throw IoError(path + ": " + what + " at byte offset " +
                  std::to_string((long long)in.tellg() < 0
                                     ? -1LL
                                     : (long long)in.tellg()));
  };

  char magic[4];
  if (!in.read(magic, 4)) fail("truncated magic");
  if (std::memcmp(magic, kBinaryMagic, 4) != 0)
    throw IoError(path + ": bad magic at byte offset 0");

  uint32_t dims[5];
  if (!in.read((char*)dims, sizeof(dims))) fail("truncated header");
  Dataset ds;
  const uint32_t n = dims[0];
  ds.channels = (int)dims[1];
  ds.height = (int)dims[2];
  ds.width = (int)dims[3];
  ds.num_classes = (int)dims[4];
  if (n == 0) throw IoError(path + ": zero examples");
  if (ds.channels <= 0 || ds.height <= 0 || ds.width <= 0 ||
      ds.num_classes <= 0)
    fail("non-positive dimension in header");

  ds.images.resize((size_t)n * ds.pixels_per_image());
  if (!in.read((char*)ds.images.data(), ds.images.size() * sizeof(float)))
    fail("truncated pixel data");
  std::vector<int32_t> raw(n);
  if (!in.read((char*)raw.data(), raw.size() * sizeof(int32_t)))
    fail("truncated labels");
  ds.labels.assign(raw.begin(), raw.end());
  check_consistent(ds, path);
  return ds;
}

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);

  Dataset ds;
  std::string line;
  if (!std::getline(in, line))
    throw IoError(path + ": zero examples (missing header)");
  {
    std::istringstream hs(line);
    if (!(hs >> ds.channels >> ds.height >> ds.width >> ds.num_classes))
      throw IoError(path + " line 1: header must be 'c h w num_classes'");
  }
  if (ds.channels <= 0 || ds.height <= 0 || ds.width <= 0 ||
      ds.num_classes <= 0)
    throw IoError(path + " line 1: non-positive dimension");

  const int64_t per = ds.pixels_per_image();
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    if (!std::getline(ls, tok, ','))
      throw IoError(path + " line " + std::to_string(line_no) +
                    ": missing label");
    try {
      ds.labels.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw IoError(path + " line " + std::to_string(line_no) +
                    ": bad label '" + tok + "'");
    }
    int64_t got = 0;
    while (std::getline(ls, tok, ',')) {
      try {
        ds.images.push_back(std::stof(tok));
      } catch (const std::exception&) {
        throw IoError(path + " line " + std::to_string(line_no) +
                      ": bad pixel '" + tok + "'");
      }
      ++got;
    }
    if (got != per)
      throw IoError(path + " line " + std::to_string(line_no) + ": " +
                    std::to_string(got) + " pixels, expected " +
                    std::to_string(per));
  }
  if (ds.labels.empty()) throw IoError(path + ": zero examples");
  check_consistent(ds, path);
  return ds;
}

bool has_suffix(const std::string& s, const std::string& suf) {
  return s.size() >= suf.size() &&
         s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

}  // namespace

uint64_t dataset_checksum(const Dataset& ds) {
  uint64_t h = 1469598103934665603ULL;
  const int32_t header[5] = {(int32_t)ds.size(), ds.channels, ds.height,
                             ds.width, ds.num_classes};
  h = fnv1a(h, header, sizeof(header));
  h = fnv1a(h, ds.images.data(), ds.images.size() * sizeof(float));
  h = fnv1a(h, ds.labels.data(), ds.labels.size() * sizeof(int));
  return h;
}

Dataset load_small_image_corpus(const std::string& path) {
  return has_suffix(path, ".csv") ? load_csv(path) : load_binary(path);
}

void save_small_image_corpus(const Dataset& ds, const std::string& path) {
  check_consistent(ds, path);
  if (has_suffix(path, ".csv")) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << std::setprecision(9);  // float max_digits10: text round-trips losslessly
    out << ds.channels << " " << ds.height << " " << ds.width << " "
        << ds.num_classes << "\n";
    const int64_t per = ds.pixels_per_image();
    for (int64_t i = 0; i < ds.size(); ++i) {
      out << ds.labels[i];
      for (int64_t j = 0; j < per; ++j) out << "," << ds.images[i * per + j];
      out << "\n";
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kBinaryMagic, 4);
  const uint32_t dims[5] = {(uint32_t)ds.size(), (uint32_t)ds.channels,
                            (uint32_t)ds.height, (uint32_t)ds.width,
                            (uint32_t)ds.num_classes};
  out.write((const char*)dims, sizeof(dims));
  out.write((const char*)ds.images.data(), ds.images.size() * sizeof(float));
  std::vector<int32_t> raw(ds.labels.begin(), ds.labels.end());
  out.write((const char*)raw.data(), raw.size() * sizeof(int32_t));
}

Dataset make_synthetic_task(int num_classes, int examples_per_class,
                            int image_size, uint32_t seed, double noise) {
  if (num_classes < 2 || examples_per_class < 1 || image_size < 4)
    throw ConfigError("synthetic task needs >= 2 classes, >= 1 example each, "
                      "images >= 4px");
  Dataset ds;
  ds.num_classes = num_classes;
  ds.channels = 3;
  ds.height = ds.width = image_size;
  const int64_t n = (int64_t)num_classes * examples_per_class;
  ds.images.resize(n * ds.pixels_per_image());
  ds.labels.resize(n);

  std::mt19937 rng(seed);
  std::normal_distribution<float> pix_noise(0.0f, (float)noise);
  std::uniform_real_distribution<float> jitter(-1.5f, 1.5f);
  std::uniform_real_distribution<float> gain(0.8f, 1.2f);
  constexpr double kPi = 3.14159265358979323846;
  const float half = (image_size - 1) / 2.0f;

  int64_t idx = 0;
  for (int k = 0; k < num_classes; ++k) {
    const double theta = kPi * k / num_classes;
    const float dx = (float)std::cos(theta), dy = (float)std::sin(theta);
    for (int e = 0; e < examples_per_class; ++e, ++idx) {
      ds.labels[idx] = k;
      const float cx = half + jitter(rng), cy = half + jitter(rng);
      const float amp = gain(rng);
      const float ch_gain[3] = {1.0f, gain(rng), gain(rng)};
      float* img = ds.images.data() + idx * ds.pixels_per_image();
      for (int y = 0; y < image_size; ++y) {
        for (int x = 0; x < image_size; ++x) {
          // distance from the bar's center line
          const float d = (x - cx) * dy - (y - cy) * dx;
          const float bar = amp * std::exp(-0.5f * d * d);
          for (int c = 0; c < 3; ++c)
            img[(int64_t)c * image_size * image_size + y * image_size + x] =
                bar * ch_gain[c] + pix_noise(rng);
        }
      }
    }
  }
  return ds;
}

SplitDataset split(const Dataset& ds, double train_ratio, uint32_t seed) {
  if (train_ratio <= 0.0 || train_ratio >= 1.0)
    throw ConfigError("split ratio must lie in (0,1), got " +
                      std::to_string(train_ratio));
  check_consistent(ds, "split");

  std::vector<std::vector<int64_t>> by_class(ds.num_classes);
  for (int64_t i = 0; i < ds.size(); ++i)
    by_class[ds.labels[i]].push_back(i);

  std::mt19937 rng(seed);
  std::vector<int64_t> train_idx, val_idx;
  for (int k = 0; k < ds.num_classes; ++k) {
    auto& idx = by_class[k];
    if (idx.size() < 2)
      throw ConfigError("class " + std::to_string(k) + " has " +
                        std::to_string(idx.size()) +
                        " examples; need >= 2 to split");
    std::shuffle(idx.begin(), idx.end(), rng);
    int64_t take = (int64_t)std::floor(train_ratio * idx.size() + 0.5);
    take = std::max<int64_t>(1, std::min<int64_t>(take, (int64_t)idx.size() - 1));
    train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + take);
    val_idx.insert(val_idx.end(), idx.begin() + take, idx.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());

  auto gather = [&](const std::vector<int64_t>& which) {
    Dataset out;
    out.num_classes = ds.num_classes;
    out.channels = ds.channels;
    out.height = ds.height;
    out.width = ds.width;
    const int64_t per = ds.pixels_per_image();
    out.images.reserve(which.size() * per);
    out.labels.reserve(which.size());
    for (int64_t i : which) {
      out.images.insert(out.images.end(), ds.images.begin() + i * per,
                        ds.images.begin() + (i + 1) * per);
      out.labels.push_back(ds.labels[i]);
    }
    return out;
  };

  SplitDataset out{gather(train_idx), gather(val_idx)};

  // per-channel stats from the training side only
  const int64_t hw = (int64_t)ds.height * ds.width;
  std::vector<float> mean(ds.channels), stdev(ds.channels);
  for (int c = 0; c < ds.channels; ++c) {
    double acc = 0.0;
    for (int64_t i = 0; i < out.train.size(); ++i) {
      const float* img = out.train.images.data() + i * ds.pixels_per_image();
      for (int64_t p = 0; p < hw; ++p) acc += img[c * hw + p];
    }
    const double mu = acc / ((double)out.train.size() * hw);
    double var = 0.0;
    for (int64_t i = 0; i < out.train.size(); ++i) {
      const float* img = out.train.images.data() + i * ds.pixels_per_image();
      for (int64_t p = 0; p < hw; ++p) {
        const double d = img[c * hw + p] - mu;
        var += d * d;
      }
    }
    mean[c] = (float)mu;
    stdev[c] = (float)std::sqrt(var / ((double)out.train.size() * hw) + 1e-8);
  }
  out.train.mean = out.val.mean = mean;
  out.train.stdev = out.val.stdev = stdev;
  return out;
}

Batcher::Batcher(const Dataset& ds, int batch_size, uint32_t seed,
                 bool shuffle, bool augment, bool hflip)
    : ds_(&ds),
      batch_size_(batch_size),
      seed_(seed),
      shuffle_(shuffle),
      augment_(augment),
      hflip_(hflip) {
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  order_.resize((size_t)ds.size());
  for (int64_t i = 0; i < ds.size(); ++i) order_[i] = i;
}

void Batcher::start_epoch(int epoch) {
  cursor_ = 0;
  draw_state_ = (uint64_t)seed_ * 0x9E3779B97F4A7C15ULL + (uint64_t)epoch;
  // rebuild from identity so the order is a function of (seed, epoch) alone,
  // not of which epochs ran before this one
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = (int64_t)i;
  if (shuffle_) {
    std::mt19937 rng(seed_ + 0x517CC1B7u * (uint32_t)(epoch + 1));
    std::shuffle(order_.begin(), order_.end(), rng);
  }
}

int Batcher::batches_per_epoch() const {
  return (int)((ds_->size() + batch_size_ - 1) / batch_size_);
}

bool Batcher::next(Tensor* images, std::vector<int>* labels) {
  if (cursor_ >= (int64_t)order_.size()) return false;
  const int64_t take =
      std::min<int64_t>(batch_size_, (int64_t)order_.size() - cursor_);
  const int c = ds_->channels, h = ds_->height, w = ds_->width;
  const int64_t per = ds_->pixels_per_image();

  std::mt19937_64 draw(draw_state_ + (uint64_t)cursor_ * 0x2545F4914F6CDD1DULL);
  std::uniform_int_distribution<int> shift(-4, 4);
  std::uniform_int_distribution<int> coin(0, 1);

  const bool normalized = !ds_->mean.empty();
  std::vector<float> out((size_t)take * per, 0.0f);
  labels->resize((size_t)take);
  for (int64_t b = 0; b < take; ++b) {
    const int64_t src_idx = order_[cursor_ + b];
    (*labels)[(size_t)b] = ds_->labels[src_idx];
    const float* src = ds_->images.data() + src_idx * per;
    float* dst = out.data() + b * per;

    int ox = 0, oy = 0;
    bool flip = false;
    if (augment_) {
      ox = shift(draw);
      oy = shift(draw);
      if (hflip_) flip = coin(draw) == 1;
    }
    for (int ch = 0; ch < c; ++ch) {
      const float mu = normalized ? ds_->mean[ch] : 0.0f;
      const float sd = normalized ? ds_->stdev[ch] : 1.0f;
      for (int y = 0; y < h; ++y) {
        const int sy = y + oy;
        for (int x = 0; x < w; ++x) {
          int sx = (flip ? w - 1 - x : x) + ox;
          float v = 0.0f;  // pad-4 crop: out-of-frame reads are zero
          if (sx >= 0 && sx < w && sy >= 0 && sy < h)
            v = src[(int64_t)ch * h * w + (int64_t)sy * w + sx];
          dst[(int64_t)ch * h * w + (int64_t)y * w + x] = (v - mu) / sd;
        }
      }
    }
  }
  cursor_ += take;
  *images = Tensor::from_data({(int)take, c, h, w}, std::move(out));
  return true;
}

double accuracy(const Tensor& logits, const std::vector<int>& labels) {
  const int n = logits.dim(0), k = logits.dim(1);
  if ((size_t)n != labels.size())
    throw ShapeError("accuracy: " + std::to_string(n) + " logit rows for " +
                     std::to_string(labels.size()) + " labels");
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const float* row = logits.data().data() + (int64_t)i * k;
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (row[j] > row[best]) best = j;
    if (best == labels[i]) ++hits;
  }
  return n ? (double)hits / n : 0.0;
}

}  // namespace aprune
