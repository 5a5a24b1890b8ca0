#pragma once

#include "cimnas/network.hpp"
#include "cimnas/quantization.hpp"
#include "cimnas/random.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cimnas {

/// A memory cell technology: levels are 2^bits_per_cell currents equally
/// spaced on [current_min, current_max]; every level carries zero-mean
/// Gaussian variation with std-dev level_sigma.
struct DeviceModel {
    std::string name;
    int bits_per_cell = 4;
    double current_min_ua = 0.0;
    double current_max_ua = 16.0;
    double level_sigma_na = 800.0;

    int levels() const noexcept { return 1 << bits_per_cell; }
    /// level_sigma as a fraction of the full current range.
    double relative_sigma() const noexcept;
    void validate() const;

    friend bool operator==(const DeviceModel&, const DeviceModel&) = default;
};

class DeviceLibrary {
public:
    DeviceLibrary() = default;
    explicit DeviceLibrary(std::vector<DeviceModel> devices);

    /// reram4 (4-bit, 0-16 uA, 800 nA) and binary1 (1-bit, same range and sigma).
    static DeviceLibrary defaults();

    std::size_t size() const noexcept { return devices_.size(); }
    const DeviceModel& at(std::size_t i) const { return devices_.at(i); }
    std::optional<std::size_t> find(const std::string& name) const;
    const std::vector<DeviceModel>& devices() const noexcept { return devices_; }

    friend bool operator==(const DeviceLibrary&, const DeviceLibrary&) = default;

private:
    std::vector<DeviceModel> devices_;
};

/// ceil(weight_bits / bits_per_cell), at least one.
int devices_per_weight(int weight_bits, const DeviceModel& device);

/// Base-2^bits_per_cell digits of `code`, most significant first.
std::vector<int> slice_code(std::uint64_t code, int slices, int bits_per_cell);

/// Shift-and-add recombination of per-cell digits (most significant first).
std::uint64_t reassemble(std::span<const int> slices, int bits_per_cell);

/// Slice a weight code over devices_per_weight(weight_data_bits(fmt)) cells.
/// Valid codes are [0, 2^weight_data_bits(fmt) - 1]; throws ConfigError otherwise.
std::vector<int> slice_weight(std::int64_t code, const FixedPointFormat& fmt, const DeviceModel& device);

/// Significance-weighted spread of K cells: (2^b - 1) * sqrt(sum_s 4^(s*b)) / (2^(K*b) - 1).
/// Equals 1 for a single cell.
double slice_composition_factor(int slices, int bits_per_cell);

/// Weight-domain std-dev for weights of `fmt` stored on `device`:
///   relative_sigma * fmt.max() * slice_composition_factor(K, b) * (sqrt(2) if signed).
/// The composite K-cell code spans the format's full-scale magnitude; signed
/// weights sit on a differential column pair whose cells vary independently.
double weight_noise_sigma(const DeviceModel& device, const FixedPointFormat& fmt);

/// One cell-current offset in nA, N(0, level_sigma).
double sample_cell_variation(const DeviceModel& device, Rng& rng);

/// Per-layer weight-domain noise for a network of `layers` layers. Layers
/// without a scheme use default_weight_format().
NoiseSpec make_noise_spec(const DeviceModel& device, const QuantizationScheme* quant, std::size_t layers);

} // namespace cimnas
