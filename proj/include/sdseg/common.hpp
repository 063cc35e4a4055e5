#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sdseg {

// Error taxonomy. CLI exit codes map DataError -> 2 and NumericalError -> 3;
// usage errors are handled by the argument parser (exit 1).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad or missing input data: unreadable files, layout violations, shape
// mismatches, invalid masks.
class DataError : public Error {
public:
    using Error::Error;
};

class ShapeError : public DataError {
public:
    using DataError::DataError;
};

// Invalid configuration values (non-positive sigma, unknown provider, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Non-finite losses or other numerical breakdowns during optimization.
class NumericalError : public Error {
public:
    using Error::Error;
};

// FNV-1a, used for cue-cache content hashes and parameter fingerprints.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 14695981039346656037ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 14695981039346656037ull) {
    return fnv1a(s.data(), s.size(), h);
}

} // namespace sdseg
