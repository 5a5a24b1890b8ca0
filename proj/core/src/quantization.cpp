#include "cimnas/quantization.hpp"

#include "cimnas/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace cimnas {

FixedPointFormat::FixedPointFormat(int int_bits, int frac_bits, bool is_signed)
    : int_bits_(int_bits), frac_bits_(frac_bits), signed_(is_signed) {
    if (int_bits < 0 || frac_bits < 0 || int_bits > kMaxIntBits || frac_bits > kMaxFracBits) {
        throw ConfigError("fixed-point widths out of range: int=" + std::to_string(int_bits) +
                          " frac=" + std::to_string(frac_bits));
    }
    if (int_bits + frac_bits < 1) {
        throw ConfigError("fixed-point format needs at least one data bit");
    }
}

FixedPointFormat FixedPointFormat::parse(std::string_view text) {
    auto fail = [&] { return ConfigError("bad fixed-point format '" + std::string(text) + "' (expected e.g. s1.2 or u0.6)"); };
    if (text.size() < 4 || (text[0] != 's' && text[0] != 'u')) throw fail();
    const bool is_signed = text[0] == 's';
    auto dot = text.find('.');
    if (dot == std::string_view::npos) throw fail();
    int m = 0;
    int n = 0;
    auto int_part = text.substr(1, dot - 1);
    auto frac_part = text.substr(dot + 1);
    auto r1 = std::from_chars(int_part.data(), int_part.data() + int_part.size(), m);
    auto r2 = std::from_chars(frac_part.data(), frac_part.data() + frac_part.size(), n);
    if (int_part.empty() || frac_part.empty() || r1.ec != std::errc{} || r2.ec != std::errc{} ||
        r1.ptr != int_part.data() + int_part.size() || r2.ptr != frac_part.data() + frac_part.size()) {
        throw fail();
    }
    return FixedPointFormat(m, n, is_signed);
}

double FixedPointFormat::step() const noexcept { return std::ldexp(1.0, -frac_bits_); }

double FixedPointFormat::max() const noexcept { return std::ldexp(1.0, int_bits_) - step(); }

double FixedPointFormat::min() const noexcept { return signed_ ? -std::ldexp(1.0, int_bits_) : 0.0; }

std::string FixedPointFormat::to_string() const {
    return (signed_ ? "s" : "u") + std::to_string(int_bits_) + "." + std::to_string(frac_bits_);
}

RepresentableRange representable_set(const FixedPointFormat& fmt) noexcept {
    return {fmt.min(), fmt.max(), fmt.step()};
}

double quantize_value(double x, const FixedPointFormat& fmt) noexcept {
    const double step = fmt.step();
    // x / step and the product below are exact: step is a power of two.
    const double q = std::round(x / step) * step;
    return std::clamp(q, fmt.min(), fmt.max());
}

bool quantizer_passes(double x, const FixedPointFormat& fmt) noexcept {
    return x >= fmt.min() && x <= fmt.max();
}

Tensor quantize_tensor(const Tensor& t, const FixedPointFormat& fmt) {
    Tensor out = t;
    for (double& v : out.data) v = quantize_value(v, fmt);
    return out;
}

int weight_data_bits(const FixedPointFormat& fmt) noexcept {
    return fmt.int_bits() + fmt.frac_bits() + (fmt.is_signed() ? 1 : 0);
}

std::int64_t magnitude_code(double quantized, const FixedPointFormat& fmt) noexcept {
    return static_cast<std::int64_t>(std::llround(std::fabs(quantized) / fmt.step()));
}

void QuantizationScheme::validate(std::size_t layers) const {
    if (activations.size() != weights.size()) {
        throw ConfigError("quantization scheme has " + std::to_string(activations.size()) +
                          " activation formats but " + std::to_string(weights.size()) + " weight formats");
    }
    if (weights.size() != layers) {
        throw ConfigError("quantization scheme covers " + std::to_string(weights.size()) +
                          " layers, network has " + std::to_string(layers));
    }
}

QuantizationScheme uniform_scheme(std::size_t layers, const FixedPointFormat& weight_fmt,
                                  const FixedPointFormat& act_fmt) {
    return {std::vector<FixedPointFormat>(layers, act_fmt), std::vector<FixedPointFormat>(layers, weight_fmt)};
}

} // namespace cimnas

namespace cimnas {

FixedPointFormat default_weight_format() { return FixedPointFormat(3, 4, true); }
FixedPointFormat default_activation_format() { return FixedPointFormat(3, 5, false); }

} // namespace cimnas
