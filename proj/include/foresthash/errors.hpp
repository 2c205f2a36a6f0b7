#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace foresthash {

/// Input violates a documented precondition (malformed code, length mismatch, empty set).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An index argument is outside its valid range.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// A configuration value is inconsistent with the data or with another setting.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A file could not be parsed. offset is the byte (or row, for text formats) where parsing failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what), offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

class UnsupportedVersionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checksum mismatch on a model or code file.
class CorruptionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace foresthash
