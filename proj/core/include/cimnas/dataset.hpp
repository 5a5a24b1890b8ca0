#pragma once

#include "cimnas/architecture.hpp"
#include "cimnas/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cimnas {

/// Images (n, c, h, w) in [0, 1] with integer class labels.
struct Dataset {
    Tensor images;
    std::vector<int> labels;
    int classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    FeatureShape image_shape() const;
    Dataset subset(std::span<const std::size_t> indices) const;

    /// Throws DataError when labels and images disagree or a label is out of range.
    void validate() const;
};

struct DatasetSplits {
    Dataset train;
    Dataset test;
};

/// Copy the images at `indices` into a (k, c, h, w) batch tensor.
Tensor gather_images(const Dataset& data, std::span<const std::size_t> indices);

/// Gaussian class blobs rendered as images. Class means sit on a regular simplex
/// with pairwise distance `separation` (in units of the per-pixel noise sigma).
Dataset synth_dataset(int classes, std::size_t n, FeatureShape image_shape, double separation, std::uint64_t seed);

/// CIFAR-10 binary layout: 3073-byte records, one label byte then 32x32 R, G, B planes.
inline constexpr std::size_t kCifarRecordBytes = 3073;

Dataset decode_cifar10(std::span<const std::uint8_t> bytes);
Dataset read_cifar10_file(const std::filesystem::path& path);

/// Reads data_batch_*.bin and test_batch.bin from `dir` (or a single .bin file
/// used for both splits) and draws deterministic class-stratified subsets.
DatasetSplits ingest_cifar10(const std::filesystem::path& dir, std::size_t train_subset, std::size_t test_subset,
                             std::uint64_t seed);

/// Deterministic class-stratified sample of `count` indices: an equal quota per
/// class (remainder to the lowest class ids), topped up from any class when one runs short.
std::vector<std::size_t> stratified_subset(std::span<const int> labels, int classes, std::size_t count,
                                           std::uint64_t seed);

/// Fisher-Yates permutation driven by uniform01 (portable across standard libraries).
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

} // namespace cimnas
