// Copyright the mtrank authors. Licensed under the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mtr {

/// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor extents do not conform to an operation's shape rule.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A numeric or state precondition was violated (non-finite input,
/// all-masked sequence, probability outside (0,1), ...).
class ValueError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, long line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
    long line() const { return line_; }

private:
    long line_;
};

/// Bad command-line usage (unknown subcommand, missing flag, bad enum value).
class UsageError : public Error {
public:
    using Error::Error;
};

namespace detail {
inline void concat_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void concat_into(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    concat_into(os, rest...);
}
}  // namespace detail

/// Builds a message from heterogeneous pieces, e.g. msg("got ", n, " rows").
template <typename... Args>
std::string msg(const Args&... args) {
    std::ostringstream os;
    detail::concat_into(os, args...);
    return os.str();
}

using Rng = std::mt19937_64;

inline double uniform_real(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(rng);
}

/// Uniform Glorot bound for a weight matrix with the given fan-in/out.
inline double glorot_limit(int fan_in, int fan_out) {
    return std::sqrt(6.0 / (static_cast<double>(fan_in) + static_cast<double>(fan_out)));
}

/// FNV-1a, used for config hashes and dataset fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    return fnv1a(s.data(), s.size(), seed);
}

}  // namespace mtr
