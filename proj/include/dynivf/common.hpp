#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace dynivf {

using VectorId = std::uint64_t;
using PartitionId = std::uint32_t;

// Sentinel partition id used in the id map for vectors parked in the delta store.
inline constexpr PartitionId kDeltaPartition = std::numeric_limits<PartitionId>::max();

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class InvalidK : public Error {
 public:
  using Error::Error;
};
class DuplicateId : public Error {
 public:
  using Error::Error;
};
class NotFound : public Error {
 public:
  using Error::Error;
};
class EmptyIndex : public Error {
 public:
  using Error::Error;
};
class Underflow : public Error {
 public:
  using Error::Error;
};
class EmptyDelta : public Error {
 public:
  using Error::Error;
};
class NoProbes : public Error {
 public:
  using Error::Error;
};
class SpecError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class InvariantError : public Error {
 public:
  using Error::Error;
};

// Deterministic RNG helpers. std::uniform_int_distribution is
// implementation-defined, so sampling goes through these instead.
inline std::uint64_t rng_u64(std::mt19937_64& g) { return g(); }

// Uniform index in [0, n) via rejection sampling.
inline std::size_t rng_index(std::mt19937_64& g, std::size_t n) {
  if (n == 0) throw Error("rng_index: empty range");
  const std::uint64_t span = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t r = g();
  while (r >= limit) r = g();
  return static_cast<std::size_t>(r % span);
}

// Uniform double in [0, 1) with 53 bits of entropy.
inline double rng_unit(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
  value ^= value >> 33;
  value *= 0xff51afd7ed558ccdULL;
  value ^= value >> 33;
  return seed ^ (value + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

}  // namespace dynivf
