#pragma once

// Analytic weight-stationary crossbar cost model.
//
// Every layer is unrolled onto U x V synaptic arrays: kernel rows (FH*FW*Cin,
// or fan-in for dense layers) run vertically, and each output channel takes
// devices_per_weight cells per weight, doubled for signed weights stored on a
// differential column pair. Inputs stream bit-serially through 1-bit DACs, so
// a layer needs input_positions * ceil(act_bits / dac_bits) array cycles.
// Energy and area are activity counts times per-unit coefficients held in
// TechnologyParams (see presets/*.cost).

#include "cimnas/architecture.hpp"
#include "cimnas/device.hpp"
#include "cimnas/quantization.hpp"

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace cimnas {

struct SynapticArray {
    int rows = 64; ///< U
    int cols = 64; ///< V
    friend bool operator==(const SynapticArray&, const SynapticArray&) = default;
};

struct TechnologyParams {
    double node_nm = 32.0;
    double clock_ghz = 1.0;
    double mem_voltage_v = 0.5;
    double chip_voltage_v = 1.1;
    int adc_bits = 4;
    int dac_bits = 1;
    int arrays_per_pe = 4;
    int columns_per_adc = 8;

    // Area, um^2.
    double cell_area_um2 = 0.02;
    double adc_area_um2 = 600.0;
    double dac_area_um2 = 4.0;
    double shift_add_area_um2 = 150.0;
    double buffer_area_um2_per_byte = 1.5;
    double noc_router_area_um2 = 20000.0;
    double pe_overhead_area_um2 = 1500.0;
    double tile_overhead_area_um2 = 8000.0;

    // Energy, pJ.
    double cell_energy_pj_per_ua = 5e-4; ///< per cell read per cycle, per uA of mean cell current
    double adc_energy_pj = 1.5;          ///< per conversion
    double dac_energy_pj = 0.01;         ///< per row drive per cycle
    double shift_add_energy_pj = 0.05;   ///< per accumulated conversion
    double buffer_energy_pj_per_byte = 0.2;
    double noc_energy_pj_per_byte_hop = 0.6;

    void validate() const;
    /// Multiply every per-unit energy coefficient by k.
    TechnologyParams scaled_energy(double k) const;

    friend bool operator==(const TechnologyParams&, const TechnologyParams&) = default;
};

/// Parse a flat `key = value` preset (`#` starts a comment). Unknown keys are rejected.
TechnologyParams parse_cost_preset(const std::string& text);
TechnologyParams load_cost_preset(const std::filesystem::path& path);
std::string emit_cost_preset(const TechnologyParams& tech);

/// Named access to every TechnologyParams field, in preset order.
std::vector<std::string> technology_keys();
double technology_value(const TechnologyParams& tech, const std::string& key);
/// Throws ConfigError for an unknown key or a non-integral value of an integer field.
void set_technology_value(TechnologyParams& tech, const std::string& key, double value);

struct LayerMapping {
    std::size_t rows_used = 0;
    std::size_t cols_used = 0;
    std::size_t row_blocks = 0;
    std::size_t col_blocks = 0;
    std::size_t arrays_needed = 0;
    std::size_t input_positions = 0; ///< output-pixel dot products per inference
    int devices_per_weight = 1;
    int differential = 1;
    std::size_t macs = 0;

    friend bool operator==(const LayerMapping&, const LayerMapping&) = default;
};

struct TileConfig {
    int m = 1;
    int n = 1;
    std::size_t global_buffer_bytes = 0;
    std::size_t link_bandwidth_bits = 0; ///< per cycle
    friend bool operator==(const TileConfig&, const TileConfig&) = default;
};

struct PeConfig {
    int p = 1;
    int q = 1;
    std::size_t buffer_bytes = 0;
    std::size_t bandwidth_bits = 0; ///< per cycle
    friend bool operator==(const PeConfig&, const PeConfig&) = default;
};

struct ChipDesign {
    TileConfig tiles;
    PeConfig pes;
    SynapticArray array;
    DeviceModel device;
    int arrays_per_pe = 4;

    std::size_t capacity() const noexcept;
    friend bool operator==(const ChipDesign&, const ChipDesign&) = default;
};

struct HardwareMetrics {
    double latency_ns = 0.0;
    double energy_pj = 0.0;
    double area_um2 = 0.0;
    double edp_pj_ns = 0.0;
    double throughput_tops = 0.0;
    double efficiency_tops_per_w = 0.0;
    friend bool operator==(const HardwareMetrics&, const HardwareMetrics&) = default;
};

struct LayerCost {
    double latency_ns = 0.0;
    double energy_pj = 0.0;
    double area_um2 = 0.0;
};

/// Candidate grids searched by optimize_circuit.
inline constexpr int kPeGrid[] = {1, 2, 4, 8};
inline constexpr int kMaxTileSide = 32;

/// `weight_fmt` null means the layer is costed with default_weight_format().
LayerMapping map_layer(const LayerKind& layer, FeatureShape in, const FixedPointFormat* weight_fmt,
                       const DeviceModel& device, const SynapticArray& array);

/// Area of one synaptic array including its DACs, ADCs and shift-add units.
double array_area_um2(const SynapticArray& array, const TechnologyParams& tech);

LayerCost estimate_layer_metrics(const LayerMapping& mapping, const FixedPointFormat& act_fmt,
                                 const TechnologyParams& tech, const DeviceModel& device, const SynapticArray& array);

/// Chip area for a hierarchy shape; used both by the optimizer and the metrics.
double chip_area_um2(const ChipDesign& design, const TechnologyParams& tech);

/// Smallest-area tile/PE hierarchy on the candidate grid whose capacity covers the network.
/// Throws ConfigError for an empty architecture and RuntimeError when nothing on the grid fits.
ChipDesign optimize_circuit(const ArchitectureSpec& arch, FeatureShape input, const QuantizationScheme* quant,
                            const DeviceModel& device, const TechnologyParams& tech, const SynapticArray& array);

/// Total arrays the mapped network needs.
std::size_t arrays_required(const ArchitectureSpec& arch, FeatureShape input, const QuantizationScheme* quant,
                            const DeviceModel& device, const SynapticArray& array);

/// Sequential-layer latency, layer energies plus global-buffer and NoC traffic,
/// and the area of the allocated hierarchy. An empty architecture yields all zeros.
HardwareMetrics estimate_chip_metrics(const ChipDesign& design, const ArchitectureSpec& arch, FeatureShape input,
                                      const QuantizationScheme* quant, const TechnologyParams& tech);

/// optimize_circuit followed by estimate_chip_metrics.
HardwareMetrics evaluate_hardware(const ArchitectureSpec& arch, FeatureShape input, const QuantizationScheme* quant,
                                  const DeviceModel& device, const TechnologyParams& tech,
                                  const SynapticArray& array, ChipDesign* design_out = nullptr);

} // namespace cimnas
