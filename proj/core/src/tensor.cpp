#include "cimnas/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace cimnas {

std::size_t shape_product(std::span<const std::size_t> shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : shape(std::move(dims)), data(shape_product(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> values)
    : shape(std::move(dims)), data(std::move(values)) {
    if (shape_product(shape) != data.size()) {
        throw std::invalid_argument("tensor shape " + shape_string() + " does not match " +
                                    std::to_string(data.size()) + " values");
    }
}

bool Tensor::all_finite() const noexcept {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_string() const {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

} // namespace cimnas
