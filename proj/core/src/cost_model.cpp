#include "cimnas/cost_model.hpp"

#include "cimnas/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <tuple>
#include <variant>

namespace cimnas {

namespace {

using Field = std::variant<double TechnologyParams::*, int TechnologyParams::*>;

struct FieldEntry {
    const char* key;
    Field field;
    const char* unit;
};

// Order here is the order emit_cost_preset writes.
const FieldEntry kFields[] = {
    {"node_nm", &TechnologyParams::node_nm, "nm"},
    {"clock_ghz", &TechnologyParams::clock_ghz, "GHz"},
    {"mem_voltage_v", &TechnologyParams::mem_voltage_v, "V"},
    {"chip_voltage_v", &TechnologyParams::chip_voltage_v, "V"},
    {"adc_bits", &TechnologyParams::adc_bits, "bits"},
    {"dac_bits", &TechnologyParams::dac_bits, "bits"},
    {"arrays_per_pe", &TechnologyParams::arrays_per_pe, "arrays"},
    {"columns_per_adc", &TechnologyParams::columns_per_adc, "columns"},
    {"cell_area_um2", &TechnologyParams::cell_area_um2, "um^2 per cell"},
    {"adc_area_um2", &TechnologyParams::adc_area_um2, "um^2 per ADC"},
    {"dac_area_um2", &TechnologyParams::dac_area_um2, "um^2 per row driver"},
    {"shift_add_area_um2", &TechnologyParams::shift_add_area_um2, "um^2 per shift-add unit"},
    {"buffer_area_um2_per_byte", &TechnologyParams::buffer_area_um2_per_byte, "um^2 per byte"},
    {"noc_router_area_um2", &TechnologyParams::noc_router_area_um2, "um^2 per tile router"},
    {"pe_overhead_area_um2", &TechnologyParams::pe_overhead_area_um2, "um^2 per PE"},
    {"tile_overhead_area_um2", &TechnologyParams::tile_overhead_area_um2, "um^2 per tile"},
    {"cell_energy_pj_per_ua", &TechnologyParams::cell_energy_pj_per_ua, "pJ per cell read per uA"},
    {"adc_energy_pj", &TechnologyParams::adc_energy_pj, "pJ per conversion"},
    {"dac_energy_pj", &TechnologyParams::dac_energy_pj, "pJ per row drive"},
    {"shift_add_energy_pj", &TechnologyParams::shift_add_energy_pj, "pJ per accumulation"},
    {"buffer_energy_pj_per_byte", &TechnologyParams::buffer_energy_pj_per_byte, "pJ per byte"},
    {"noc_energy_pj_per_byte_hop", &TechnologyParams::noc_energy_pj_per_byte_hop, "pJ per byte per hop"},
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

int data_bits(const FixedPointFormat& fmt) { return weight_data_bits(fmt); }

FixedPointFormat act_format_of(const QuantizationScheme* quant, std::size_t layer) {
    return quant ? quant->activations[layer] : default_activation_format();
}

const FixedPointFormat* weight_format_of(const QuantizationScheme* quant, std::size_t layer) {
    return quant ? &quant->weights[layer] : nullptr;
}

struct NetworkDemand {
    std::vector<FeatureShape> shapes;
    std::vector<LayerMapping> mappings;
    std::size_t arrays = 0;
    std::size_t max_rows = 0;
    std::size_t max_fmap_bytes = 0;
    std::size_t max_act_bits = 0;
};

NetworkDemand analyze(const ArchitectureSpec& arch, FeatureShape input, const QuantizationScheme* quant,
                      const DeviceModel& device, const SynapticArray& array) {
    NetworkDemand d;
    d.shapes = infer_shapes(arch, input);
    if (quant) quant->validate(arch.size());
    for (std::size_t i = 0; i < arch.size(); ++i) {
        d.mappings.push_back(map_layer(arch.layers[i], d.shapes[i], weight_format_of(quant, i), device, array));
        const auto& m = d.mappings.back();
        d.arrays += m.arrays_needed;
        d.max_rows = std::max(d.max_rows, m.rows_used);
        const auto act_bits = static_cast<std::size_t>(data_bits(act_format_of(quant, i)));
        d.max_act_bits = std::max(d.max_act_bits, act_bits);
        d.max_fmap_bytes = std::max(d.max_fmap_bytes, ceil_div(d.shapes[i].size() * act_bits, 8));
    }
    return d;
}

using DesignKey = std::tuple<double, int, int, int, int>;

} // namespace

void TechnologyParams::validate() const {
    for (const auto& f : kFields) {
        const bool positive = std::visit(
            [&](auto member) { return static_cast<double>(this->*member) > 0.0; }, f.field);
        if (!positive) throw ConfigError(std::string("technology parameter ") + f.key + " must be positive");
    }
}

TechnologyParams TechnologyParams::scaled_energy(double k) const {
    TechnologyParams t = *this;
    t.cell_energy_pj_per_ua *= k;
    t.adc_energy_pj *= k;
    t.dac_energy_pj *= k;
    t.shift_add_energy_pj *= k;
    t.buffer_energy_pj_per_byte *= k;
    t.noc_energy_pj_per_byte_hop *= k;
    return t;
}

TechnologyParams parse_cost_preset(const std::string& text) {
    TechnologyParams tech;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("cost preset line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = std::find_if(std::begin(kFields), std::end(kFields),
                                     [&](const FieldEntry& f) { return key == f.key; });
        if (it == std::end(kFields)) {
            throw ConfigError("cost preset line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        }
        try {
            std::size_t used = 0;
            std::visit(
                [&](auto member) {
                    using T = std::remove_cvref_t<decltype(tech.*member)>;
                    if constexpr (std::is_same_v<T, int>) {
                        tech.*member = std::stoi(value, &used);
                    } else {
                        tech.*member = std::stod(value, &used);
                    }
                },
                it->field);
            if (used != value.size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw ConfigError("cost preset line " + std::to_string(lineno) + ": bad value '" + value + "' for " + key);
        }
    }
    tech.validate();
    return tech;
}

TechnologyParams load_cost_preset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open cost preset " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_cost_preset(ss.str());
}

std::string emit_cost_preset(const TechnologyParams& tech) {
    std::string out;
    char buf[64];
    for (const auto& f : kFields) {
        std::visit(
            [&](auto member) {
                using T = std::remove_cvref_t<decltype(tech.*member)>;
                if constexpr (std::is_same_v<T, int>) {
                    std::snprintf(buf, sizeof buf, "%d", tech.*member);
                } else {
                    std::snprintf(buf, sizeof buf, "%.17g", tech.*member);
                }
            },
            f.field);
        out += std::string(f.key) + " = " + buf + "  # " + f.unit + "\n";
    }
    return out;
}

std::vector<std::string> technology_keys() {
    std::vector<std::string> out;
    for (const auto& f : kFields) out.emplace_back(f.key);
    return out;
}

namespace {

const FieldEntry& field_for(const std::string& key) {
    const auto it =
        std::find_if(std::begin(kFields), std::end(kFields), [&](const FieldEntry& f) { return key == f.key; });
    if (it == std::end(kFields)) throw ConfigError("unknown technology parameter '" + key + "'");
    return *it;
}

} // namespace

double technology_value(const TechnologyParams& tech, const std::string& key) {
    return std::visit([&](auto member) { return static_cast<double>(tech.*member); }, field_for(key).field);
}

void set_technology_value(TechnologyParams& tech, const std::string& key, double value) {
    std::visit(
        [&](auto member) {
            using T = std::remove_cvref_t<decltype(tech.*member)>;
            if constexpr (std::is_same_v<T, int>) {
                if (value != std::floor(value) || std::abs(value) > 1e9) {
                    throw ConfigError("technology parameter " + key + " must be an integer");
                }
                tech.*member = static_cast<int>(value);
            } else {
                tech.*member = value;
            }
        },
        field_for(key).field);
}

std::size_t ChipDesign::capacity() const noexcept {
    return static_cast<std::size_t>(tiles.m) * static_cast<std::size_t>(tiles.n) * static_cast<std::size_t>(pes.p) *
           static_cast<std::size_t>(pes.q) * static_cast<std::size_t>(arrays_per_pe);
}

LayerMapping map_layer(const LayerKind& layer, FeatureShape in, const FixedPointFormat* weight_fmt,
                       const DeviceModel& device, const SynapticArray& array) {
    if (array.rows < 1 || array.cols < 1) throw ConfigError("synaptic array dimensions must be positive");
    const FixedPointFormat fmt = weight_fmt ? *weight_fmt : default_weight_format();
    LayerMapping m;
    m.devices_per_weight = devices_per_weight(weight_data_bits(fmt), device);
    m.differential = fmt.is_signed() ? 2 : 1;
    std::size_t outputs = 0;
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
        m.rows_used = static_cast<std::size_t>(conv->filter_h) * conv->filter_w * in.channels;
        outputs = static_cast<std::size_t>(conv->filters);
        m.input_positions = static_cast<std::size_t>(in.height) * in.width;
    } else {
        m.rows_used = in.size();
        outputs = std::holds_alternative<DenseLayer>(layer) ? static_cast<std::size_t>(std::get<DenseLayer>(layer).neurons)
                                                            : static_cast<std::size_t>(std::get<OutputLayer>(layer).classes);
        m.input_positions = 1;
    }
    m.cols_used = outputs * static_cast<std::size_t>(m.devices_per_weight) * static_cast<std::size_t>(m.differential);
    m.row_blocks = ceil_div(m.rows_used, static_cast<std::size_t>(array.rows));
    m.col_blocks = ceil_div(m.cols_used, static_cast<std::size_t>(array.cols));
    m.arrays_needed = m.row_blocks * m.col_blocks;
    m.macs = m.rows_used * outputs * m.input_positions;
    return m;
}

double array_area_um2(const SynapticArray& array, const TechnologyParams& tech) {
    const double cells = static_cast<double>(array.rows) * array.cols;
    const double adcs = std::ceil(static_cast<double>(array.cols) / tech.columns_per_adc);
    return cells * tech.cell_area_um2 + array.rows * tech.dac_area_um2 +
           adcs * (tech.adc_area_um2 + tech.shift_add_area_um2);
}

LayerCost estimate_layer_metrics(const LayerMapping& mapping, const FixedPointFormat& act_fmt,
                                 const TechnologyParams& tech, const DeviceModel& device, const SynapticArray& array) {
    LayerCost cost;
    if (mapping.arrays_needed == 0) return cost;
    const int act_bits = data_bits(act_fmt);
    const double act_cycles = std::ceil(static_cast<double>(act_bits) / tech.dac_bits);
    const double cycles = static_cast<double>(mapping.input_positions) * act_cycles;
    cost.latency_ns = cycles / tech.clock_ghz;

    const double rows = static_cast<double>(mapping.rows_used);
    const double cols = static_cast<double>(mapping.cols_used);
    const double mean_current_ua = 0.5 * (device.current_min_ua + device.current_max_ua);
    const double cell_reads = rows * cols * cycles;
    const double row_drives = rows * static_cast<double>(mapping.col_blocks) * cycles;
    const double conversions = static_cast<double>(mapping.row_blocks) * cols * cycles;
    const double input_bytes = static_cast<double>(mapping.input_positions) * rows * act_bits / 8.0;
    cost.energy_pj = cell_reads * tech.cell_energy_pj_per_ua * mean_current_ua + row_drives * tech.dac_energy_pj +
                     conversions * (tech.adc_energy_pj + tech.shift_add_energy_pj) +
                     input_bytes * tech.buffer_energy_pj_per_byte;

    cost.area_um2 = static_cast<double>(mapping.arrays_needed) * array_area_um2(array, tech);
    return cost;
}

double chip_area_um2(const ChipDesign& design, const TechnologyParams& tech) {
    const double tiles = static_cast<double>(design.tiles.m) * design.tiles.n;
    const double pes = tiles * design.pes.p * design.pes.q;
    const double arrays = pes * design.arrays_per_pe;
    return arrays * array_area_um2(design.array, tech) +
           pes * (static_cast<double>(design.pes.buffer_bytes) * tech.buffer_area_um2_per_byte + tech.pe_overhead_area_um2) +
           tiles * (static_cast<double>(design.tiles.global_buffer_bytes) * tech.buffer_area_um2_per_byte +
                    tech.noc_router_area_um2 + tech.tile_overhead_area_um2);
}

std::size_t arrays_required(const ArchitectureSpec& arch, FeatureShape input, const QuantizationScheme* quant,
                            const DeviceModel& device, const SynapticArray& array) {
    return analyze(arch, input, quant, device, array).arrays;
}

ChipDesign optimize_circuit(const ArchitectureSpec& arch, FeatureShape input, const QuantizationScheme* quant,
                            const DeviceModel& device, const TechnologyParams& tech, const SynapticArray& array) {
    if (arch.layers.empty()) throw ConfigError("cannot optimize a circuit for an empty architecture");
    tech.validate();
    const NetworkDemand demand = analyze(arch, input, quant, device, array);

    ChipDesign base;
    base.array = array;
    base.device = device;
    base.arrays_per_pe = tech.arrays_per_pe;
    base.tiles.global_buffer_bytes = demand.max_fmap_bytes;
    base.tiles.link_bandwidth_bits = demand.max_rows * static_cast<std::size_t>(tech.dac_bits);
    const std::size_t pe_rows = std::min(demand.max_rows, static_cast<std::size_t>(array.rows) * tech.arrays_per_pe);
    // One input vector slice for the rows a PE drives, at the widest activation format.
    base.pes.buffer_bytes = ceil_div(std::max<std::size_t>(pe_rows, 1) * demand.max_act_bits, 8);
    base.pes.bandwidth_bits = pe_rows * static_cast<std::size_t>(tech.dac_bits);

    const std::size_t pes_needed = ceil_div(demand.arrays, static_cast<std::size_t>(tech.arrays_per_pe));
    bool found = false;
    ChipDesign best = base;
    DesignKey best_key{};
    for (int p : kPeGrid) {
        for (int q : kPeGrid) {
            const std::size_t tiles_needed = ceil_div(pes_needed, static_cast<std::size_t>(p * q));
            // For this PE shape the cheapest tile mesh has the smallest M*N >= tiles_needed.
            for (int m = 1; m <= kMaxTileSide; ++m) {
                const auto n = static_cast<int>(ceil_div(tiles_needed, static_cast<std::size_t>(m)));
                if (n > kMaxTileSide) continue;
                ChipDesign d = base;
                d.pes.p = p;
                d.pes.q = q;
                d.tiles.m = m;
                d.tiles.n = std::max(n, 1);
                const DesignKey key{chip_area_um2(d, tech), std::abs(d.tiles.m - d.tiles.n), d.tiles.m, p, q};
                if (!found || key < best_key) {
                    best = d;
                    best_key = key;
                    found = true;
                }
            }
        }
    }
    if (!found) {
        throw RuntimeError("network needs " + std::to_string(demand.arrays) +
                           " arrays, more than the largest hierarchy on the candidate grid");
    }
    return best;
}

HardwareMetrics estimate_chip_metrics(const ChipDesign& design, const ArchitectureSpec& arch, FeatureShape input,
                                      const QuantizationScheme* quant, const TechnologyParams& tech) {
    HardwareMetrics hw;
    if (arch.layers.empty()) return hw;
    const NetworkDemand demand = analyze(arch, input, quant, design.device, design.array);
    if (demand.arrays > design.capacity()) {
        throw RuntimeError("chip design holds " + std::to_string(design.capacity()) + " arrays, network needs " +
                           std::to_string(demand.arrays));
    }
    const double hops = 0.5 * (design.tiles.m + design.tiles.n);
    double macs = 0.0;
    for (std::size_t i = 0; i < arch.size(); ++i) {
        const LayerCost c =
            estimate_layer_metrics(demand.mappings[i], act_format_of(quant, i), tech, design.device, design.array);
        hw.latency_ns += c.latency_ns;
        hw.energy_pj += c.energy_pj;
        macs += static_cast<double>(demand.mappings[i].macs);

        // Output feature map goes through the global buffer and across the NoC.
        const FixedPointFormat next_fmt = i + 1 < arch.size() ? act_format_of(quant, i + 1) : default_activation_format();
        const double out_bytes = static_cast<double>(demand.shapes[i + 1].size()) * data_bits(next_fmt) / 8.0;
        hw.energy_pj += out_bytes * (2.0 * tech.buffer_energy_pj_per_byte + hops * tech.noc_energy_pj_per_byte_hop);
    }
    hw.area_um2 = chip_area_um2(design, tech);
    hw.edp_pj_ns = hw.energy_pj * hw.latency_ns;
    hw.throughput_tops = 2.0 * macs / hw.latency_ns * 1e-3;
    const double power_w = hw.energy_pj / hw.latency_ns * 1e-3;
    hw.efficiency_tops_per_w = hw.throughput_tops / power_w;
    return hw;
}

HardwareMetrics evaluate_hardware(const ArchitectureSpec& arch, FeatureShape input, const QuantizationScheme* quant,
                                  const DeviceModel& device, const TechnologyParams& tech, const SynapticArray& array,
                                  ChipDesign* design_out) {
    ChipDesign design = optimize_circuit(arch, input, quant, device, tech, array);
    HardwareMetrics hw = estimate_chip_metrics(design, arch, input, quant, tech);
    if (design_out) *design_out = std::move(design);
    return hw;
}

} // namespace cimnas
