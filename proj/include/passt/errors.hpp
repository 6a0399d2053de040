#pragma once

#include <stdexcept>
#include <string>

namespace passt {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OutOfBoundsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed serialized data; carries the byte offset where parsing failed.
struct FormatError : std::runtime_error {
    FormatError(const std::string& msg, long long byte_offset = -1)
        : std::runtime_error(byte_offset >= 0
                                 ? msg + " (byte offset " + std::to_string(byte_offset) + ")"
                                 : msg),
          offset(byte_offset) {}
    long long offset;
};

struct VersionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GapError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical integration blow-up; carries the step index where it happened.
struct DivergedError : std::runtime_error {
    DivergedError(const std::string& msg, int step = -1)
        : std::runtime_error(step >= 0 ? msg + " (step " + std::to_string(step) + ")" : msg),
          step_index(step) {}
    int step_index;
};

struct SingularKernelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DeadEndError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace passt
