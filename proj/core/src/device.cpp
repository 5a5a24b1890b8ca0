#include "cimnas/device.hpp"

#include "cimnas/error.hpp"

#include <cmath>
#include <set>

namespace cimnas {

double DeviceModel::relative_sigma() const noexcept {
    return (level_sigma_na * 1e-3) / (current_max_ua - current_min_ua);
}

void DeviceModel::validate() const {
    if (name.empty()) throw ConfigError("device needs a name");
    if (bits_per_cell < 1 || bits_per_cell > 8) {
        throw ConfigError("device " + name + ": bits_per_cell must be in [1, 8]");
    }
    if (!(current_min_ua >= 0.0) || !(current_max_ua > current_min_ua)) {
        throw ConfigError("device " + name + ": need current_max > current_min >= 0");
    }
    if (!(level_sigma_na >= 0.0)) throw ConfigError("device " + name + ": level_sigma must be >= 0");
}

DeviceLibrary::DeviceLibrary(std::vector<DeviceModel> devices) : devices_(std::move(devices)) {
    std::set<std::string> names;
    for (const auto& d : devices_) {
        d.validate();
        if (!names.insert(d.name).second) throw ConfigError("duplicate device name " + d.name);
    }
}

DeviceLibrary DeviceLibrary::defaults() {
    return DeviceLibrary({
        DeviceModel{"reram4", 4, 0.0, 16.0, 800.0},
        DeviceModel{"binary1", 1, 0.0, 16.0, 800.0},
    });
}

std::optional<std::size_t> DeviceLibrary::find(const std::string& name) const {
    for (std::size_t i = 0; i < devices_.size(); ++i) {
        if (devices_[i].name == name) return i;
    }
    return std::nullopt;
}

int devices_per_weight(int weight_bits, const DeviceModel& device) {
    if (weight_bits < 1) throw ConfigError("weight bit-width must be >= 1");
    return (weight_bits + device.bits_per_cell - 1) / device.bits_per_cell;
}

std::vector<int> slice_code(std::uint64_t code, int slices, int bits_per_cell) {
    std::vector<int> out(static_cast<std::size_t>(slices), 0);
    const std::uint64_t mask = (std::uint64_t{1} << bits_per_cell) - 1;
    for (int s = slices - 1; s >= 0; --s) {
        out[static_cast<std::size_t>(s)] = static_cast<int>(code & mask);
        code >>= bits_per_cell;
    }
    return out;
}

std::uint64_t reassemble(std::span<const int> slices, int bits_per_cell) {
    std::uint64_t code = 0;
    for (int d : slices) code = (code << bits_per_cell) + static_cast<std::uint64_t>(d);
    return code;
}

std::vector<int> slice_weight(std::int64_t code, const FixedPointFormat& fmt, const DeviceModel& device) {
    const int bits = weight_data_bits(fmt);
    const std::int64_t limit = std::int64_t{1} << bits;
    if (code < 0 || code >= limit) {
        throw ConfigError("weight code " + std::to_string(code) + " outside [0, " + std::to_string(limit - 1) +
                          "] for format " + fmt.to_string());
    }
    return slice_code(static_cast<std::uint64_t>(code), devices_per_weight(bits, device), device.bits_per_cell);
}

double slice_composition_factor(int slices, int bits_per_cell) {
    double sum = 0.0;
    for (int s = 0; s < slices; ++s) sum += std::ldexp(1.0, 2 * s * bits_per_cell);
    const double digit_max = std::ldexp(1.0, bits_per_cell) - 1.0;
    const double composite_max = std::ldexp(1.0, slices * bits_per_cell) - 1.0;
    return digit_max * std::sqrt(sum) / composite_max;
}

double weight_noise_sigma(const DeviceModel& device, const FixedPointFormat& fmt) {
    const int slices = devices_per_weight(weight_data_bits(fmt), device);
    const double differential = fmt.is_signed() ? std::sqrt(2.0) : 1.0;
    return device.relative_sigma() * fmt.max() * slice_composition_factor(slices, device.bits_per_cell) * differential;
}

double sample_cell_variation(const DeviceModel& device, Rng& rng) {
    if (device.level_sigma_na == 0.0) return 0.0;
    std::normal_distribution<double> dist(0.0, device.level_sigma_na);
    return dist(rng);
}

NoiseSpec make_noise_spec(const DeviceModel& device, const QuantizationScheme* quant, std::size_t layers) {
    if (quant) quant->validate(layers);
    NoiseSpec spec;
    spec.enabled = true;
    spec.per_layer_sigma.reserve(layers);
    for (std::size_t i = 0; i < layers; ++i) {
        const FixedPointFormat fmt = quant ? quant->weights[i] : default_weight_format();
        spec.per_layer_sigma.push_back(weight_noise_sigma(device, fmt));
    }
    return spec;
}

} // namespace cimnas
