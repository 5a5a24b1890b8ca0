#include "cimnas/dataset.hpp"

#include "cimnas/error.hpp"
#include "cimnas/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

namespace cimnas {

FeatureShape Dataset::image_shape() const {
    if (images.rank() != 4) return {};
    return {static_cast<int>(images.shape[1]), static_cast<int>(images.shape[2]), static_cast<int>(images.shape[3])};
}

void Dataset::validate() const {
    if (images.rank() != 4) throw DataError("images must be a 4-d (n, c, h, w) tensor");
    if (images.shape[0] != labels.size()) {
        throw DataError("dataset has " + std::to_string(images.shape[0]) + " images but " +
                        std::to_string(labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) {
            throw DataError("label " + std::to_string(labels[i]) + " at record " + std::to_string(i) +
                            " outside [0, " + std::to_string(classes) + ")");
        }
    }
}

Tensor gather_images(const Dataset& data, std::span<const std::size_t> indices) {
    const FeatureShape s = data.image_shape();
    const std::size_t per = s.size();
    Tensor out({indices.size(), static_cast<std::size_t>(s.channels), static_cast<std::size_t>(s.height),
                static_cast<std::size_t>(s.width)});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = data.images.data.begin() + static_cast<std::ptrdiff_t>(indices[i] * per);
        std::copy(src, src + static_cast<std::ptrdiff_t>(per), out.data.begin() + static_cast<std::ptrdiff_t>(i * per));
    }
    return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.classes = classes;
    out.images = gather_images(*this, indices);
    out.labels.reserve(indices.size());
    for (auto i : indices) out.labels.push_back(labels.at(i));
    return out;
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
        std::swap(idx[i - 1], idx[std::min(j, i - 1)]);
    }
    return idx;
}

Dataset synth_dataset(int classes, std::size_t n, FeatureShape image_shape, double separation, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("synthetic dataset needs at least two classes");
    if (separation < 0.0) throw ConfigError("separation must be non-negative");
    const std::size_t dims = image_shape.size();
    if (dims < static_cast<std::size_t>(classes)) {
        throw ConfigError("synthetic dataset needs at least as many pixels as classes");
    }
    constexpr double kPixelSigma = 0.1;
    constexpr double kCenter = 0.5;

    Rng rng(derive_seed(seed, {0}));
    std::normal_distribution<double> normal(0.0, 1.0);

    // Orthonormal class directions by Gram-Schmidt on Gaussian draws.
    std::vector<std::vector<double>> dirs;
    while (dirs.size() < static_cast<std::size_t>(classes)) {
        std::vector<double> v(dims);
        for (double& x : v) x = normal(rng);
        for (const auto& d : dirs) {
            double dot = 0.0;
            for (std::size_t i = 0; i < dims; ++i) dot += v[i] * d[i];
            for (std::size_t i = 0; i < dims; ++i) v[i] -= dot * d[i];
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-9) continue;
        for (double& x : v) x /= norm;
        dirs.push_back(std::move(v));
    }
    // Simplex means: |mu_i - mu_j| = separation * sigma.
    const double radius = separation * kPixelSigma / std::sqrt(2.0);

    Dataset data;
    data.classes = classes;
    data.images = Tensor({n, static_cast<std::size_t>(image_shape.channels), static_cast<std::size_t>(image_shape.height),
                          static_cast<std::size_t>(image_shape.width)});
    data.labels.resize(n);
    Rng sample_rng(derive_seed(seed, {1}));
    for (std::size_t s = 0; s < n; ++s) {
        const int label = static_cast<int>(s % static_cast<std::size_t>(classes));
        data.labels[s] = label;
        double* px = data.images.data.data() + s * dims;
        for (std::size_t i = 0; i < dims; ++i) {
            const double v = kCenter + radius * dirs[static_cast<std::size_t>(label)][i] + kPixelSigma * normal(sample_rng);
            px[i] = std::clamp(v, 0.0, 1.0);
        }
    }
    return data;
}

Dataset decode_cifar10(std::span<const std::uint8_t> bytes) {
    if (bytes.size() % kCifarRecordBytes != 0) {
        throw DataError("CIFAR-10 payload of " + std::to_string(bytes.size()) + " bytes is not a multiple of " +
                        std::to_string(kCifarRecordBytes));
    }
    const std::size_t n = bytes.size() / kCifarRecordBytes;
    constexpr std::size_t kPixels = kCifarRecordBytes - 1;
    Dataset data;
    data.classes = 10;
    data.images = Tensor({n, 3, 32, 32});
    data.labels.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::uint8_t* rec = bytes.data() + r * kCifarRecordBytes;
        if (rec[0] > 9) {
            throw DataError("CIFAR-10 record " + std::to_string(r) + " has label byte " + std::to_string(rec[0]));
        }
        data.labels[r] = rec[0];
        double* px = data.images.data.data() + r * kPixels;
        for (std::size_t i = 0; i < kPixels; ++i) px[i] = static_cast<double>(rec[1 + i]) / 255.0;
    }
    return data;
}

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dataset concat(std::vector<Dataset> parts) {
    Dataset out;
    out.classes = 10;
    std::size_t n = 0;
    for (const auto& p : parts) n += p.size();
    out.images = Tensor({n, 3, 32, 32});
    out.labels.reserve(n);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        std::copy(p.images.data.begin(), p.images.data.end(), out.images.data.begin() + static_cast<std::ptrdiff_t>(offset));
        offset += p.images.size();
        out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    }
    return out;
}

} // namespace

Dataset read_cifar10_file(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    try {
        return decode_cifar10(bytes);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

std::vector<std::size_t> stratified_subset(std::span<const int> labels, int classes, std::size_t count,
                                           std::uint64_t seed) {
    if (classes < 1) throw ConfigError("stratified subset needs at least one class");
    count = std::min(count, labels.size());
    const auto order = shuffled_indices(labels.size(), seed);
    const auto C = static_cast<std::size_t>(classes);
    std::vector<std::size_t> quota(C, count / C);
    for (std::size_t c = 0; c < count % C; ++c) ++quota[c];

    std::vector<char> taken(labels.size(), 0);
    std::vector<std::size_t> picked;
    picked.reserve(count);
    for (auto i : order) {
        const auto c = static_cast<std::size_t>(labels[i]);
        if (c < C && quota[c] > 0) {
            --quota[c];
            taken[i] = 1;
            picked.push_back(i);
        }
    }
    for (auto i : order) {
        if (picked.size() >= count) break;
        if (!taken[i]) {
            taken[i] = 1;
            picked.push_back(i);
        }
    }
    std::sort(picked.begin(), picked.end());
    return picked;
}

DatasetSplits ingest_cifar10(const std::filesystem::path& dir, std::size_t train_subset, std::size_t test_subset,
                             std::uint64_t seed) {
    namespace fs = std::filesystem;
    DatasetSplits splits;
    if (fs::is_regular_file(dir)) {
        Dataset all = read_cifar10_file(dir);
        const auto train_idx = stratified_subset(all.labels, 10, train_subset, derive_seed(seed, {0}));
        std::vector<std::size_t> rest;
        std::vector<int> rest_labels;
        for (std::size_t i = 0, j = 0; i < all.size(); ++i) {
            if (j < train_idx.size() && train_idx[j] == i) {
                ++j;
                continue;
            }
            rest.push_back(i);
            rest_labels.push_back(all.labels[i]);
        }
        const auto test_pos = stratified_subset(rest_labels, 10, test_subset, derive_seed(seed, {1}));
        std::vector<std::size_t> test_idx;
        for (auto p : test_pos) test_idx.push_back(rest[p]);
        splits.train = all.subset(train_idx);
        splits.test = all.subset(test_idx);
        return splits;
    }
    if (!fs::is_directory(dir)) throw DataError("CIFAR-10 path " + dir.string() + " does not exist");

    std::vector<Dataset> train_parts;
    for (int b = 1; b <= 5; ++b) {
        const auto p = dir / ("data_batch_" + std::to_string(b) + ".bin");
        if (fs::exists(p)) train_parts.push_back(read_cifar10_file(p));
    }
    if (train_parts.empty()) throw DataError("no data_batch_*.bin files under " + dir.string());
    const auto test_path = dir / "test_batch.bin";
    if (!fs::exists(test_path)) throw DataError("missing " + test_path.string());

    Dataset train_all = concat(std::move(train_parts));
    Dataset test_all = read_cifar10_file(test_path);
    splits.train = train_all.subset(stratified_subset(train_all.labels, 10, train_subset, derive_seed(seed, {0})));
    splits.test = test_all.subset(stratified_subset(test_all.labels, 10, test_subset, derive_seed(seed, {1})));
    return splits;
}

} // namespace cimnas
