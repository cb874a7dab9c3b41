#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "planter/tensor.hpp"

namespace planter::data {

struct LabeledDataset {
    Tensor4 images;  // (N, c, s, s)
    std::vector<int> labels;
    int class_count = 0;
    std::string name;

    int size() const { return images.empty() ? 0 : images.shape().n; }
    void validate() const;
};

/// Per-channel standardization constants computed on a training split.
struct Normalization {
    std::array<double, 3> mean{};
    std::array<double, 3> stddev{};
};

struct Splits {
    LabeledDataset train, val, test;
    Normalization norm;
};

// Single-record codecs for the official binary formats. Decoded images hold
// raw byte values (0..255) as doubles; encode is the exact inverse.
struct DecodedRecord {
    int label = 0;
    Tensor4 image;  // (1, 3, s, s)
};
DecodedRecord decode_cifar10_record(const std::uint8_t* rec);
std::vector<std::uint8_t> encode_cifar10_record(int label, const Tensor4& image);
DecodedRecord decode_cifar100_record(const std::uint8_t* rec);  // fine label
std::vector<std::uint8_t> encode_cifar100_record(int coarse, int fine, const Tensor4& image);
/// STL-10 stores each channel plane column-major; decode transposes to row-major.
Tensor4 decode_stl10_image(const std::uint8_t* bytes);
std::vector<std::uint8_t> encode_stl10_image(const Tensor4& image);

/// 45,000/5,000/10,000; validation drawn from the 50,000 training records by
/// seeded permutation. Pixels scaled to [0,1], then standardized per channel
/// with constants from the training split.
Splits load_cifar10(const std::filesystem::path& dir, std::uint64_t split_seed);
/// CIFAR-100 fine labels, same shapes and split rule as CIFAR-10.
Splits load_cifar100(const std::filesystem::path& dir, std::uint64_t split_seed);
/// train = the 5,000 labeled training images; val = 1,000 images drawn by
/// seeded permutation from the 8,000-image labeled test set; test = the rest.
Splits load_stl10(const std::filesystem::path& dir, std::uint64_t split_seed);

/// Gaussian class blobs: class k's pixels are N(mu_k, sigma^2) with adjacent
/// class means separation*sigma apart (centered overall). Deterministic from
/// seed; a mean-threshold classifier separates the classes when separation
/// is large.
LabeledDataset make_synthetic(int classes, int per_class, int channels, int size,
                              std::uint64_t seed, double separation = 10.0, double sigma = 1.0);

/// Seeded sample of `count` records (without replacement, load order kept).
LabeledDataset subset(const LabeledDataset& ds, int count, std::uint64_t seed);

/// Copy of the selected records, in the given order.
LabeledDataset gather(const LabeledDataset& ds, const std::vector<int>& indices);

/// Seeded shuffle of [0,N) chopped into batches; the final partial batch is
/// kept, every index appears exactly once.
std::vector<std::vector<int>> batch_indices(int n, int batch_size, std::uint64_t epoch_seed);

namespace detail {
// The loaders above with configurable record counts; the public functions pin
// the official ones. Here so tests can run the identical decode/split/
// normalize pipeline on miniature files.
Splits load_cifar10_counted(const std::filesystem::path& dir, std::uint64_t split_seed,
                            int per_batch, int train_n);
Splits load_cifar100_counted(const std::filesystem::path& dir, std::uint64_t split_seed,
                             int train_records, int test_records, int train_n);
Splits load_stl10_counted(const std::filesystem::path& dir, std::uint64_t split_seed,
                          int train_records, int test_records, int val_n);
}  // namespace detail

}  // namespace planter::data
