#pragma once

#include <stdexcept>
#include <string>

namespace cvit {

/// Shapes that cannot be combined by an operation.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid model / training configuration (head split, patch size, config keys).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite values or degenerate numerics detected at runtime.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Binary file problems. Each failure mode carries a distinct kind.
class FormatError : public std::runtime_error {
public:
    enum class Kind { bad_magic, version_mismatch, truncated_payload, bad_header, io };

    FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

}  // namespace cvit
