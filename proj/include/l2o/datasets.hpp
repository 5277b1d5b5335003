#ifndef L2O_DATASETS_HPP
#define L2O_DATASETS_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "l2o/rng.hpp"
#include "l2o/tensor.hpp"

namespace l2o {

// Flattened image-classification dataset. Pixels are 32-bit reals in [0,1],
// one row of `feature_width` values per example; labels are digits 0..9.
struct LabeledDataset {
  int feature_width = 0;
  std::vector<float> images;  // size() == count * feature_width
  std::vector<uint8_t> labels;

  size_t size() const { return labels.size(); }
  std::span<const float> row(size_t i) const {
    return {&images[i * static_cast<size_t>(feature_width)],
            static_cast<size_t>(feature_width)};
  }
  // Keep only the first n examples (subsetting for desk-scale runs).
  void truncate(size_t n);
};

// Byte-level parsers; the file loaders below feed these after optional gzip
// inflation. Parsing is total: any byte stream yields a dataset or a typed
// parse_error, never a crash or partial state.
LabeledDataset parse_idx(std::span<const uint8_t> image_bytes,
                         std::span<const uint8_t> label_bytes);
LabeledDataset parse_cifar10(const std::vector<std::span<const uint8_t>>& files);

// Inflate a gzip member (magic 0x1f 0x8b); errors map to parse_error.
bool looks_gzip(std::span<const uint8_t> bytes);
std::vector<uint8_t> gunzip(std::span<const uint8_t> bytes);

std::vector<uint8_t> read_file(const std::string& path);

// IDX pair (images + labels), transparently gunzipping either file.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);
// CIFAR-10 binary batches, concatenated in the given order.
LabeledDataset load_cifar10(const std::vector<std::string>& paths);

// Seeded epoch-shuffled batch stream. Each epoch is a fresh permutation of
// the dataset; a trailing partial batch wraps into the next epoch.
class BatchSampler {
 public:
  struct Batch {
    Tensor images;  // batch x feature_width, doubles
    std::vector<int32_t> labels;
  };

  BatchSampler(const LabeledDataset& data, int batch_size, uint64_t seed);
  Batch next();

  int batch_size() const { return batch_size_; }

 private:
  void start_epoch();
  const LabeledDataset* data_;
  int batch_size_;
  uint64_t seed_;
  int64_t epoch_ = -1;
  size_t cursor_ = 0;
  std::vector<uint32_t> perm_;
};

}  // namespace l2o

#endif  // L2O_DATASETS_HPP
