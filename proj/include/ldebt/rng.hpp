#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ldebt {

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Order-sensitive hash of a key tuple, seeded by `master`. Every random
/// stream in the simulation is seeded by one of these so that any stream can
/// be regenerated in isolation.
std::uint64_t stream_seed(std::uint64_t master, std::initializer_list<std::uint64_t> key);

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t master, std::initializer_list<std::uint64_t> key) {
  return Engine(stream_seed(master, key));
}

}  // namespace ldebt
