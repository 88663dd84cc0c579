#pragma once

#include <stdexcept>
#include <string>

namespace relens {

// Error taxonomy mirrored by the CLI exit codes: InputError, FormatError and
// ValidationError are caller mistakes (exit 1); NumericalError is a failed
// computation (exit 2).
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad runtime input: shape mismatch, out-of-range index, missing file.
struct InputError : Error {
    explicit InputError(const std::string& msg) : Error(msg) {}
};

// Malformed file contents: wrong magic, truncated blob, unparseable header.
struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Structurally valid file that fails semantic checks (shape chain, finiteness).
struct ValidationError : Error {
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Computation cannot proceed, e.g. a vanishing LRP-Z denominator.
struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

// Metric undefined for the given input (e.g. single-class labels for ROC-AUC).
struct UndefinedMetricError : InputError {
    explicit UndefinedMetricError(const std::string& msg) : InputError(msg) {}
};

}  // namespace relens
