#pragma once

#include "cimnas/tensor.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cimnas {

/// Fixed-point format with `int_bits` integer bits, `frac_bits` fraction bits
/// and an optional sign bit that is not counted in either.
class FixedPointFormat {
public:
    /// Largest integer/fraction widths accepted at all (the search itself uses 0..3 / 0..6).
    static constexpr int kMaxIntBits = 15;
    static constexpr int kMaxFracBits = 30;

    FixedPointFormat(int int_bits, int frac_bits, bool is_signed);

    static FixedPointFormat parse(std::string_view text);

    int int_bits() const noexcept { return int_bits_; }
    int frac_bits() const noexcept { return frac_bits_; }
    bool is_signed() const noexcept { return signed_; }

    double step() const noexcept;
    double max() const noexcept;
    double min() const noexcept;

    /// Format within the searchable envelope: int in [0,3], frac in [0,6].
    bool searchable() const noexcept { return int_bits_ <= 3 && frac_bits_ <= 6; }

    std::string to_string() const;

    friend bool operator==(const FixedPointFormat&, const FixedPointFormat&) = default;

private:
    int int_bits_;
    int frac_bits_;
    bool signed_;
};

struct RepresentableRange {
    double min;
    double max;
    double step;
};

RepresentableRange representable_set(const FixedPointFormat& fmt) noexcept;

/// Nearest representable value, ties away from zero, saturating at the range ends.
double quantize_value(double x, const FixedPointFormat& fmt) noexcept;

/// True where the straight-through estimator passes gradient (inside [min, max]).
bool quantizer_passes(double x, const FixedPointFormat& fmt) noexcept;

Tensor quantize_tensor(const Tensor& t, const FixedPointFormat& fmt);

/// Bits the device mapper slices: int + frac (+1 when signed).
int weight_data_bits(const FixedPointFormat& fmt) noexcept;

/// Integer code of a quantized magnitude, |q| / step.
std::int64_t magnitude_code(double quantized, const FixedPointFormat& fmt) noexcept;

/// Per-layer formats for activations (layer inputs) and weights.
struct QuantizationScheme {
    std::vector<FixedPointFormat> activations;
    std::vector<FixedPointFormat> weights;

    std::size_t size() const noexcept { return weights.size(); }

    /// Throws ConfigError when the two lists disagree in length or `layers` differs.
    void validate(std::size_t layers) const;

    friend bool operator==(const QuantizationScheme&, const QuantizationScheme&) = default;
};

/// Same weight and activation format on every one of `layers` layers.
QuantizationScheme uniform_scheme(std::size_t layers, const FixedPointFormat& weight_fmt,
                                  const FixedPointFormat& act_fmt);

} // namespace cimnas

namespace cimnas {

/// Formats assumed by the hardware model for layers without a quantization scheme.
FixedPointFormat default_weight_format();
FixedPointFormat default_activation_format();

} // namespace cimnas
