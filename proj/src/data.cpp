#include "planter/data.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "planter/io.hpp"
#include "planter/rng.hpp"

namespace planter::data {

namespace fs = std::filesystem;

namespace {

constexpr int kCifarSide = 32;
constexpr int kCifarPixels = 3 * kCifarSide * kCifarSide;  // 3072
constexpr int kStlSide = 96;
constexpr int kStlPixels = 3 * kStlSide * kStlSide;  // 27648

std::vector<std::uint8_t> read_sized(const fs::path& path, std::size_t expected) {
    auto bytes = io::read_file_bytes(path);
    if (bytes.size() != expected)
        throw io::IoError(path.string() + ": " + std::to_string(bytes.size()) +
                          " bytes, expected " + std::to_string(expected));
    return bytes;
}

std::uint8_t pixel_byte(double v, const char* what) {
    const double r = std::nearbyint(v);
    if (!(r >= 0.0 && r <= 255.0) || r != v)
        throw std::invalid_argument(std::string(what) + ": pixel value " + io::format_double(v) +
                                    " is not a byte");
    return std::uint8_t(r);
}

int checked_label(int raw, int classes, const char* what) {
    if (raw < 0 || raw >= classes)
        throw io::IoError(std::string(what) + ": label " + std::to_string(raw) +
                          " out of range [0," + std::to_string(classes) + ")");
    return raw;
}

/// Writes one CIFAR pixel block (channel-major, row-major — the tensor's own
/// layout) into row b of a batch tensor.
void put_cifar_pixels(Tensor4& images, int b, const std::uint8_t* px) {
    double* dst = images.data() + std::size_t(b) * kCifarPixels;
    for (int k = 0; k < kCifarPixels; ++k) dst[k] = double(px[k]);
}

void put_stl_pixels(Tensor4& images, int b, const std::uint8_t* px) {
    double* dst = images.data() + std::size_t(b) * kStlPixels;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < kStlSide; ++y)
            for (int x = 0; x < kStlSide; ++x)
                dst[(c * kStlSide + y) * kStlSide + x] =
                    double(px[c * kStlSide * kStlSide + x * kStlSide + y]);
}

/// Scales to [0,1], computes per-channel stats on `train`, standardizes all
/// splits with them.
Normalization normalize_splits(LabeledDataset& train, LabeledDataset& val,
                               LabeledDataset& test) {
    Normalization norm;
    const int channels = train.images.shape().c;
    if (channels != 3) throw std::invalid_argument("normalize_splits: expected 3 channels");

    for (LabeledDataset* ds : {&train, &val, &test})
        for (auto& v : ds->images.values()) v /= 255.0;

    const Shape4 s = train.images.shape();
    const std::size_t plane = std::size_t(s.h) * s.w;
    for (int c = 0; c < channels; ++c) {
        double sum = 0.0;
        for (int b = 0; b < s.n; ++b) {
            const double* p = train.images.data() + (std::size_t(b) * channels + c) * plane;
            for (std::size_t k = 0; k < plane; ++k) sum += p[k];
        }
        const double mean = sum / (double(s.n) * plane);
        double ss = 0.0;
        for (int b = 0; b < s.n; ++b) {
            const double* p = train.images.data() + (std::size_t(b) * channels + c) * plane;
            for (std::size_t k = 0; k < plane; ++k) ss += (p[k] - mean) * (p[k] - mean);
        }
        const double var = ss / (double(s.n) * plane);
        norm.mean[c] = mean;
        norm.stddev[c] = var > 0.0 ? std::sqrt(var) : 1.0;
    }

    for (LabeledDataset* ds : {&train, &val, &test}) {
        const Shape4 ds_s = ds->images.shape();
        const std::size_t ds_plane = std::size_t(ds_s.h) * ds_s.w;
        for (int b = 0; b < ds_s.n; ++b)
            for (int c = 0; c < channels; ++c) {
                double* p = ds->images.data() + (std::size_t(b) * channels + c) * ds_plane;
                for (std::size_t k = 0; k < ds_plane; ++k)
                    p[k] = (p[k] - norm.mean[c]) / norm.stddev[c];
            }
    }
    return norm;
}

}  // namespace

void LabeledDataset::validate() const {
    if (class_count < 1) throw std::invalid_argument(name + ": class_count must be >= 1");
    if (int(labels.size()) != size())
        throw std::invalid_argument(name + ": " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(size()) + " images");
    for (int l : labels)
        if (l < 0 || l >= class_count)
            throw std::invalid_argument(name + ": label " + std::to_string(l) + " out of range");
}

DecodedRecord decode_cifar10_record(const std::uint8_t* rec) {
    DecodedRecord out;
    out.label = rec[0];
    out.image = Tensor4({1, 3, kCifarSide, kCifarSide});
    put_cifar_pixels(out.image, 0, rec + 1);
    return out;
}

std::vector<std::uint8_t> encode_cifar10_record(int label, const Tensor4& image) {
    if (!(image.shape() == Shape4{1, 3, kCifarSide, kCifarSide}))
        throw std::invalid_argument("encode_cifar10_record: bad image shape " +
                                    image.shape().str());
    std::vector<std::uint8_t> rec(1 + kCifarPixels);
    rec[0] = std::uint8_t(checked_label(label, 10, "encode_cifar10_record"));
    for (int k = 0; k < kCifarPixels; ++k)
        rec[1 + k] = pixel_byte(image[std::size_t(k)], "encode_cifar10_record");
    return rec;
}

DecodedRecord decode_cifar100_record(const std::uint8_t* rec) {
    DecodedRecord out;
    out.label = rec[1];  // fine label
    out.image = Tensor4({1, 3, kCifarSide, kCifarSide});
    put_cifar_pixels(out.image, 0, rec + 2);
    return out;
}

std::vector<std::uint8_t> encode_cifar100_record(int coarse, int fine, const Tensor4& image) {
    if (!(image.shape() == Shape4{1, 3, kCifarSide, kCifarSide}))
        throw std::invalid_argument("encode_cifar100_record: bad image shape " +
                                    image.shape().str());
    std::vector<std::uint8_t> rec(2 + kCifarPixels);
    rec[0] = std::uint8_t(checked_label(coarse, 20, "encode_cifar100_record"));
    rec[1] = std::uint8_t(checked_label(fine, 100, "encode_cifar100_record"));
    for (int k = 0; k < kCifarPixels; ++k)
        rec[2 + k] = pixel_byte(image[std::size_t(k)], "encode_cifar100_record");
    return rec;
}

Tensor4 decode_stl10_image(const std::uint8_t* bytes) {
    Tensor4 img({1, 3, kStlSide, kStlSide});
    put_stl_pixels(img, 0, bytes);
    return img;
}

std::vector<std::uint8_t> encode_stl10_image(const Tensor4& image) {
    if (!(image.shape() == Shape4{1, 3, kStlSide, kStlSide}))
        throw std::invalid_argument("encode_stl10_image: bad image shape " + image.shape().str());
    std::vector<std::uint8_t> bytes(kStlPixels);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < kStlSide; ++y)
            for (int x = 0; x < kStlSide; ++x)
                bytes[c * kStlSide * kStlSide + x * kStlSide + y] =
                    pixel_byte(image(0, c, y, x), "encode_stl10_image");
    return bytes;
}

namespace detail {

Splits load_cifar10_counted(const fs::path& dir, std::uint64_t split_seed, int per_batch,
                            int train_n) {
    constexpr std::size_t kRecord = 1 + kCifarPixels;
    const int pool_n = 5 * per_batch;
    if (train_n < 1 || train_n >= pool_n)
        throw std::invalid_argument("load_cifar10: bad train split size");

    Tensor4 pool_images({pool_n, 3, kCifarSide, kCifarSide});
    std::vector<int> pool_labels(pool_n);
    for (int f = 0; f < 5; ++f) {
        const auto bytes = read_sized(dir / ("data_batch_" + std::to_string(f + 1) + ".bin"),
                                      std::size_t(per_batch) * kRecord);
        for (int r = 0; r < per_batch; ++r) {
            const std::uint8_t* rec = bytes.data() + std::size_t(r) * kRecord;
            const int b = f * per_batch + r;
            pool_labels[b] = checked_label(rec[0], 10, "cifar10");
            put_cifar_pixels(pool_images, b, rec + 1);
        }
    }

    Tensor4 test_images({per_batch, 3, kCifarSide, kCifarSide});
    std::vector<int> test_labels(per_batch);
    {
        const auto bytes = read_sized(dir / "test_batch.bin", std::size_t(per_batch) * kRecord);
        for (int r = 0; r < per_batch; ++r) {
            const std::uint8_t* rec = bytes.data() + std::size_t(r) * kRecord;
            test_labels[r] = checked_label(rec[0], 10, "cifar10");
            put_cifar_pixels(test_images, r, rec + 1);
        }
    }

    Splits out;
    LabeledDataset pool{std::move(pool_images), std::move(pool_labels), 10, "cifar10"};
    const auto perm = rng::permutation(pool.size(), split_seed);
    out.train = gather(pool, {perm.begin(), perm.begin() + train_n});
    out.train.name = "cifar10-train";
    out.val = gather(pool, {perm.begin() + train_n, perm.end()});
    out.val.name = "cifar10-val";
    out.test = {std::move(test_images), std::move(test_labels), 10, "cifar10-test"};
    out.norm = normalize_splits(out.train, out.val, out.test);
    return out;
}

Splits load_cifar100_counted(const fs::path& dir, std::uint64_t split_seed, int train_records,
                             int test_records, int train_n) {
    constexpr std::size_t kRecord = 2 + kCifarPixels;
    if (train_n < 1 || train_n >= train_records)
        throw std::invalid_argument("load_cifar100: bad train split size");

    auto read_set = [&](const fs::path& file, int count, LabeledDataset& ds) {
        const auto bytes = read_sized(file, std::size_t(count) * kRecord);
        ds.images = Tensor4({count, 3, kCifarSide, kCifarSide});
        ds.labels.resize(count);
        ds.class_count = 100;
        for (int r = 0; r < count; ++r) {
            const std::uint8_t* rec = bytes.data() + std::size_t(r) * kRecord;
            ds.labels[r] = checked_label(rec[1], 100, "cifar100");
            put_cifar_pixels(ds.images, r, rec + 2);
        }
    };

    LabeledDataset pool, test;
    read_set(dir / "train.bin", train_records, pool);
    pool.name = "cifar100";
    read_set(dir / "test.bin", test_records, test);
    test.name = "cifar100-test";

    Splits out;
    const auto perm = rng::permutation(pool.size(), split_seed);
    out.train = gather(pool, {perm.begin(), perm.begin() + train_n});
    out.train.name = "cifar100-train";
    out.val = gather(pool, {perm.begin() + train_n, perm.end()});
    out.val.name = "cifar100-val";
    out.test = std::move(test);
    out.norm = normalize_splits(out.train, out.val, out.test);
    return out;
}

Splits load_stl10_counted(const fs::path& dir, std::uint64_t split_seed, int train_records,
                          int test_records, int val_n) {
    if (val_n < 1 || val_n >= test_records)
        throw std::invalid_argument("load_stl10: bad validation split size");

    auto read_set = [&](const fs::path& xfile, const fs::path& yfile, int count,
                        LabeledDataset& ds, const char* name) {
        const auto xbytes = read_sized(xfile, std::size_t(count) * kStlPixels);
        const auto ybytes = read_sized(yfile, std::size_t(count));
        ds.images = Tensor4({count, 3, kStlSide, kStlSide});
        ds.labels.resize(count);
        ds.class_count = 10;
        ds.name = name;
        for (int r = 0; r < count; ++r) {
            // labels are 1-based in the distribution
            ds.labels[r] = checked_label(int(ybytes[r]) - 1, 10, "stl10");
            put_stl_pixels(ds.images, r, xbytes.data() + std::size_t(r) * kStlPixels);
        }
    };

    Splits out;
    read_set(dir / "train_X.bin", dir / "train_y.bin", train_records, out.train, "stl10-train");

    LabeledDataset pool;
    read_set(dir / "test_X.bin", dir / "test_y.bin", test_records, pool, "stl10");
    const auto perm = rng::permutation(pool.size(), split_seed);
    out.val = gather(pool, {perm.begin(), perm.begin() + val_n});
    out.val.name = "stl10-val";
    out.test = gather(pool, {perm.begin() + val_n, perm.end()});
    out.test.name = "stl10-test";
    out.norm = normalize_splits(out.train, out.val, out.test);
    return out;
}

}  // namespace detail

Splits load_cifar10(const fs::path& dir, std::uint64_t split_seed) {
    return detail::load_cifar10_counted(dir, split_seed, 10000, 45000);
}

Splits load_cifar100(const fs::path& dir, std::uint64_t split_seed) {
    return detail::load_cifar100_counted(dir, split_seed, 50000, 10000, 45000);
}

Splits load_stl10(const fs::path& dir, std::uint64_t split_seed) {
    return detail::load_stl10_counted(dir, split_seed, 5000, 8000, 1000);
}

LabeledDataset make_synthetic(int classes, int per_class, int channels, int size,
                              std::uint64_t seed, double separation, double sigma) {
    if (classes < 2 || per_class < 1 || channels < 1 || size < 1)
        throw std::invalid_argument("make_synthetic: bad extents");
    LabeledDataset ds;
    ds.class_count = classes;
    ds.name = "synthetic";
    ds.images = Tensor4({classes * per_class, channels, size, size});
    ds.labels.resize(classes * per_class);

    rng::Prng rng(seed);
    const std::size_t pixels = std::size_t(channels) * size * size;
    for (int k = 0; k < classes; ++k) {
        const double mu = (k - (classes - 1) / 2.0) * separation * sigma;
        for (int s = 0; s < per_class; ++s) {
            const int b = k * per_class + s;
            ds.labels[b] = k;
            double* dst = ds.images.data() + std::size_t(b) * pixels;
            for (std::size_t p = 0; p < pixels; ++p) dst[p] = mu + sigma * rng.normal();
        }
    }
    return ds;
}

LabeledDataset subset(const LabeledDataset& ds, int count, std::uint64_t seed) {
    if (count < 1 || count > ds.size())
        throw std::invalid_argument("subset: count " + std::to_string(count) + " of " +
                                    std::to_string(ds.size()));
    return gather(ds, rng::sample_without_replacement(ds.size(), count, seed));
}

LabeledDataset gather(const LabeledDataset& ds, const std::vector<int>& indices) {
    const Shape4 s = ds.images.shape();
    LabeledDataset out;
    out.class_count = ds.class_count;
    out.name = ds.name;
    out.images = Tensor4({int(indices.size()), s.c, s.h, s.w});
    out.labels.resize(indices.size());
    const std::size_t row = std::size_t(s.c) * s.h * s.w;
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int src = indices[i];
        if (src < 0 || src >= s.n)
            throw std::out_of_range("gather: index " + std::to_string(src));
        const double* from = ds.images.data() + std::size_t(src) * row;
        double* to = out.images.data() + i * row;
        for (std::size_t k = 0; k < row; ++k) to[k] = from[k];
        out.labels[i] = ds.labels[src];
    }
    return out;
}

std::vector<std::vector<int>> batch_indices(int n, int batch_size, std::uint64_t epoch_seed) {
    if (batch_size < 1) throw std::invalid_argument("batch_indices: batch_size must be >= 1");
    const auto perm = rng::permutation(n, epoch_seed);
    std::vector<std::vector<int>> out;
    for (int start = 0; start < n; start += batch_size) {
        const int end = std::min(n, start + batch_size);
        out.emplace_back(perm.begin() + start, perm.begin() + end);
    }
    return out;
}

}  // namespace planter::data
