#pragma once

#include <stdexcept>
#include <string>

namespace tabudrop {

/// Dimension disagreement between operands.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Malformed file contents (bad magic, bad header fields).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Files that are individually well-formed but disagree with each other.
struct ConsistencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Read/write failure, including truncation.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad experiment configuration; maps to CLI exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Operation called in a state that does not permit it.
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};

}  // namespace tabudrop
