#pragma once

#include <stdexcept>
#include <string>

namespace van {

// Base class for everything this library throws.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Mismatched or malformed tensor shapes (zero extents, length mismatches).
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Invalid scalar parameters (negative std, out-of-range label, ...).
struct ParamError : Error {
    explicit ParamError(const std::string& msg) : Error(msg) {}
};

// Convolution/stage geometry that yields empty or non-integral outputs.
struct GeometryError : Error {
    explicit GeometryError(const std::string& msg) : Error(msg) {}
};

// Invalid model/LKA configuration.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Non-finite values where an operation guarantees finite output.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Checkpoint file errors, split by failure mode.
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error(msg) {}
};
struct VersionError : Error {
    explicit VersionError(const std::string& msg) : Error(msg) {}
};
struct IntegrityError : Error {
    explicit IntegrityError(const std::string& msg) : Error(msg) {}
};
struct CorruptionError : Error {
    explicit CorruptionError(const std::string& msg) : Error(msg) {}
};

// IO errors outside the checkpoint format itself (missing file, bad image).
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace van
