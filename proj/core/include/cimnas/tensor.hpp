#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cimnas {

/// Dense row-major tensor of doubles.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
    Tensor(std::vector<std::size_t> dims, std::vector<double> values);

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    std::span<double> values() noexcept { return data; }
    std::span<const double> values() const noexcept { return data; }

    bool all_finite() const noexcept;
    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t shape_product(std::span<const std::size_t> shape) noexcept;

} // namespace cimnas
