#pragma once

#include <stdexcept>
#include <string>

namespace flowprobe {

// Shape/dimension violations in tensor arithmetic.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

// Precondition/contract violations (frozen models, missing gradients, bad ranges).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};

// Non-finite values or numeric blowup in a public operation.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error("numeric error: " + msg) {}
};

// A training run failed to meet its required outcome (divergence, accuracy gate).
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error("training failure: " + msg) {}
};

// Incompatible artifacts (block-count mismatch, checksum mismatch).
struct CompatError : std::runtime_error {
    explicit CompatError(const std::string& msg) : std::runtime_error("compatibility error: " + msg) {}
};

// File and serialization problems.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

}  // namespace flowprobe
