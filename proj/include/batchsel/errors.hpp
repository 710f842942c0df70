#pragma once

#include <stdexcept>
#include <string>

namespace batchsel {

// Invalid caller-supplied argument (sizes, ranges, hyperparameters).
class ArgumentError : public std::invalid_argument {
public:
    explicit ArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed file content (wrong magic number, bad header).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Internal state disagreement (mismatched counts, unknown datapoint index).
class ConsistencyError : public std::runtime_error {
public:
    explicit ConsistencyError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace batchsel
