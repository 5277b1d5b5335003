#include "l2o/datasets.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "l2o/errors.hpp"

namespace l2o {

namespace {

constexpr uint32_t kIdxImagesMagic = 0x00000803;  // unsigned byte, 3 dimensions
constexpr uint32_t kIdxLabelsMagic = 0x00000801;  // unsigned byte, 1 dimension
constexpr size_t kCifarRecord = 3073;             // 1 label byte + 32*32*3 pixels
constexpr int kNumClasses = 10;

uint32_t read_be32(std::span<const uint8_t> bytes, size_t offset) {
  if (offset + 4 > bytes.size())
    throw parse_error(parse_error::kind::truncated,
                      "idx: truncated header at offset " + std::to_string(offset), offset);
  return (static_cast<uint32_t>(bytes[offset]) << 24) |
         (static_cast<uint32_t>(bytes[offset + 1]) << 16) |
         (static_cast<uint32_t>(bytes[offset + 2]) << 8) | static_cast<uint32_t>(bytes[offset + 3]);
}

}  // namespace

void LabeledDataset::truncate(size_t n) {
  if (n >= size()) return;
  labels.resize(n);
  images.resize(n * static_cast<size_t>(feature_width));
}

bool looks_gzip(std::span<const uint8_t> bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

std::vector<uint8_t> gunzip(std::span<const uint8_t> bytes) {
  z_stream strm{};
  if (inflateInit2(&strm, 15 + 16) != Z_OK)
    throw parse_error(parse_error::kind::bad_value, "gzip: inflateInit failed");
  std::vector<uint8_t> out;
  std::vector<uint8_t> chunk(1 << 16);
  strm.next_in = const_cast<Bytef*>(bytes.data());
  strm.avail_in = static_cast<uInt>(bytes.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    strm.next_out = chunk.data();
    strm.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&strm, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&strm);
      throw parse_error(parse_error::kind::bad_value,
                        "gzip: corrupt stream (zlib rc " + std::to_string(rc) + ")");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - strm.avail_out));
    if (rc == Z_OK && strm.avail_in == 0 && strm.avail_out != 0) {
      inflateEnd(&strm);
      throw parse_error(parse_error::kind::truncated, "gzip: truncated stream");
    }
  }
  inflateEnd(&strm);
  return out;
}

LabeledDataset parse_idx(std::span<const uint8_t> image_bytes,
                         std::span<const uint8_t> label_bytes) {
  const uint32_t image_magic = read_be32(image_bytes, 0);
  if (image_magic != kIdxImagesMagic) {
    char buf[80];
    std::snprintf(buf, sizeof(buf), "idx: image file magic 0x%08x != 0x00000803 at offset 0",
                  image_magic);
    throw parse_error(parse_error::kind::bad_magic, buf, 0);
  }
  const uint32_t label_magic = read_be32(label_bytes, 0);
  if (label_magic != kIdxLabelsMagic)
    throw parse_error(parse_error::kind::bad_magic,
                      "idx: label file magic != 0x00000801 at offset 0", 0);

  const uint32_t count = read_be32(image_bytes, 4);
  const uint32_t rows = read_be32(image_bytes, 8);
  const uint32_t cols = read_be32(image_bytes, 12);
  const uint32_t label_count = read_be32(label_bytes, 4);
  if (count != label_count)
    throw parse_error(parse_error::kind::count_mismatch,
                      "idx: " + std::to_string(count) + " images but " +
                          std::to_string(label_count) + " labels");
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096)
    throw parse_error(parse_error::kind::bad_value,
                      "idx: implausible image dimensions " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  const uint64_t pixels = static_cast<uint64_t>(count) * rows * cols;
  if (image_bytes.size() != 16 + pixels)
    throw parse_error(parse_error::kind::truncated,
                      "idx: image payload holds " + std::to_string(image_bytes.size() - 16) +
                          " bytes, header promises " + std::to_string(pixels),
                      16);
  if (label_bytes.size() != 8 + static_cast<uint64_t>(count))
    throw parse_error(parse_error::kind::truncated,
                      "idx: label payload holds " + std::to_string(label_bytes.size() - 8) +
                          " bytes, header promises " + std::to_string(count),
                      8);

  LabeledDataset out;
  out.feature_width = static_cast<int>(rows * cols);
  out.images.resize(pixels);
  out.labels.resize(count);
  for (uint64_t i = 0; i < pixels; ++i)
    out.images[i] = static_cast<float>(image_bytes[16 + i]) / 255.0f;
  for (uint32_t i = 0; i < count; ++i) {
    const uint8_t label = label_bytes[8 + i];
    if (label >= kNumClasses)
      throw parse_error(parse_error::kind::label_range,
                        "idx: label " + std::to_string(label) + " out of range at example " +
                            std::to_string(i),
                        8 + i);
    out.labels[i] = label;
  }
  return out;
}

LabeledDataset parse_cifar10(const std::vector<std::span<const uint8_t>>& files) {
  LabeledDataset out;
  out.feature_width = 3072;
  for (size_t f = 0; f < files.size(); ++f) {
    const auto& bytes = files[f];
    if (bytes.size() % kCifarRecord != 0)
      throw parse_error(parse_error::kind::truncated,
                        "cifar10: file " + std::to_string(f) + " length " +
                            std::to_string(bytes.size()) + " is not a multiple of 3073");
    const size_t records = bytes.size() / kCifarRecord;
    out.labels.reserve(out.labels.size() + records);
    out.images.reserve(out.images.size() + records * 3072);
    for (size_t r = 0; r < records; ++r) {
      const uint8_t* rec = bytes.data() + r * kCifarRecord;
      if (rec[0] >= kNumClasses)
        throw parse_error(parse_error::kind::label_range,
                          "cifar10: label " + std::to_string(rec[0]) + " out of range at record " +
                              std::to_string(r),
                          r * kCifarRecord);
      out.labels.push_back(rec[0]);
      for (size_t k = 0; k < 3072; ++k)
        out.images.push_back(static_cast<float>(rec[1 + k]) / 255.0f);
    }
  }
  return out;
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(static_cast<size_t>(len));
  if (len > 0) in.read(reinterpret_cast<char*>(bytes.data()), len);
  if (!in) throw io_error("failed reading " + path);
  return bytes;
}

namespace {

std::vector<uint8_t> load_maybe_gz(const std::string& path) {
  std::vector<uint8_t> bytes = read_file(path);
  if (looks_gzip(bytes)) return gunzip(bytes);
  return bytes;
}

}  // namespace

LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const std::vector<uint8_t> images = load_maybe_gz(images_path);
  const std::vector<uint8_t> labels = load_maybe_gz(labels_path);
  return parse_idx(images, labels);
}

LabeledDataset load_cifar10(const std::vector<std::string>& paths) {
  std::vector<std::vector<uint8_t>> raw;
  raw.reserve(paths.size());
  for (const auto& p : paths) raw.push_back(load_maybe_gz(p));
  std::vector<std::span<const uint8_t>> views(raw.begin(), raw.end());
  return parse_cifar10(views);
}

BatchSampler::BatchSampler(const LabeledDataset& data, int batch_size, uint64_t seed)
    : data_(&data), batch_size_(batch_size), seed_(seed) {
  if (data.size() == 0) throw contract_error("batch sampler: empty dataset");
  if (batch_size < 1) throw contract_error("batch sampler: batch size must be >= 1");
  perm_.resize(data.size());
}

void BatchSampler::start_epoch() {
  ++epoch_;
  cursor_ = 0;
  for (uint32_t i = 0; i < perm_.size(); ++i) perm_[i] = i;
  Rng rng(derive_seed(seed_, static_cast<uint64_t>(epoch_)));
  rng.shuffle(perm_);
}

BatchSampler::Batch BatchSampler::next() {
  Batch out;
  const int width = data_->feature_width;
  out.images = Tensor({batch_size_, width});
  out.labels.resize(batch_size_);
  for (int b = 0; b < batch_size_; ++b) {
    if (epoch_ < 0 || cursor_ >= perm_.size()) start_epoch();
    const uint32_t idx = perm_[cursor_++];
    const std::span<const float> src = data_->row(idx);
    double* dst = &out.images.data[static_cast<size_t>(b) * width];
    for (int k = 0; k < width; ++k) dst[k] = static_cast<double>(src[k]);
    out.labels[b] = data_->labels[idx];
  }
  return out;
}

}  // namespace l2o
