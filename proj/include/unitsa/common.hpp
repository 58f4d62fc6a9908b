#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace unitsa {

/// Base class for every error raised by the library. Callers that only care
/// about "something was rejected" catch this; the subclasses narrow it down.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid intersection, demand, plan or other user-supplied configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in a state where it is not allowed (step after done,
/// double injection, ...).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Malformed or incompatible on-disk artifact.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// 64-bit FNV-1a, used for config fingerprints and checkpoint identity.
constexpr std::uint64_t fnv1a64(std::string_view data,
                                std::uint64_t hash = 14695981039346656037ULL) {
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return out;
}

}  // namespace unitsa
