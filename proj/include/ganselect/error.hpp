#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ganselect {

/// Malformed configuration, checkpoint, or shape mismatch at construction time.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// An API was called out of order or with arguments outside its contract.
class UsageError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// A computation produced a non-finite value. `node()` names the tape node
/// (or training iteration) that produced it.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& what, std::size_t node)
        : std::runtime_error(what), node_(node) {}
    std::size_t node() const noexcept { return node_; }

private:
    std::size_t node_;
};

/// Dataset file could not be read; `row()` is 1-based, 0 when not row specific.
class IngestionError : public std::runtime_error {
public:
    IngestionError(const std::string& what, std::size_t row)
        : std::runtime_error(what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

}  // namespace ganselect
