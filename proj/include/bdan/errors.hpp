#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bdan {

/// Malformed file contents; `offset()` is the byte position of the problem.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Filesystem failure (open, read, write).
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown when sealed (target-domain) labels are read.
class LabelTripwire : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace bdan
