#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace minnsa {

using Vec = std::vector<double>;

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised by file readers; the message carries "<source>:<line>: ..." context.
class ParseError : public Error {
public:
    explicit ParseError(const std::string& what) : Error(what) {}
};

/// Formats a double with 9 significant digits, the precision used by every
/// CSV writer in this project. Idempotent under a write/parse round trip.
std::string format_g9(double value);

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace minnsa
