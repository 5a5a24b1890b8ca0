#pragma once

#include <stdexcept>
#include <string>

namespace cimnas {

/// Failure category; the CLI maps each onto a distinct exit code.
enum class ErrorCategory { Config, Data, Runtime };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorCategory::Config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

class RuntimeError : public Error {
public:
    explicit RuntimeError(const std::string& what) : Error(ErrorCategory::Runtime, what) {}
};

/// Raised when a child network's loss stops being finite.
class TrainingDiverged : public RuntimeError {
public:
    using RuntimeError::RuntimeError;
};

/// Architecture/shape incompatibility, carrying the offending layer index.
class ShapeError : public Error {
public:
    ShapeError(std::size_t layer, const std::string& what)
        : Error(ErrorCategory::Config, "layer " + std::to_string(layer) + ": " + what), layer_(layer) {}

    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

} // namespace cimnas
