#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace imae {

using i64 = std::int64_t;
using u64 = std::uint64_t;

// Error categories map onto CLI exit codes: config=2, data=3, numeric=4.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(what) {}
};

class DimensionError : public ConfigError {
public:
    explicit DimensionError(const std::string& what) : ConfigError(what) {}
};

// splitmix64 finalizer; used to derive independent rng streams from (seed, tag).
inline u64 hash_mix(u64 x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline u64 hash_mix(u64 a, u64 b) { return hash_mix(hash_mix(a) ^ b); }

}  // namespace imae
