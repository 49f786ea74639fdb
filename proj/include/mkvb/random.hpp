#pragma once

// Label-addressed random streams. Every (replica, label, purpose, cell)
// quadruple maps to its own generator through a keyed hash of the master
// seed, so the same noise is reproduced whenever the same particle is
// simulated again: across Picard iterates, perturbed coefficient sets and
// worker counts.

#include <array>
#include <cstdint>
#include <limits>

#include "mkvb/genealogy.hpp"

namespace mkvb {

enum class StreamPurpose : std::uint8_t { brownian = 1, event = 2, offspring = 3, initial = 4 };

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// xoshiro256** seeded from a 64-bit key; satisfies UniformRandomBitGenerator.
class Stream {
 public:
  using result_type = std::uint64_t;

  explicit Stream(std::uint64_t seed) noexcept {
    std::uint64_t z = seed;
    for (auto& s : state_) {
      z += 0x9e3779b97f4a7c15ULL;
      s = mix64(z);
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }
  std::array<std::uint64_t, 4> state_{};
};

class RandomnessSource {
 public:
  explicit RandomnessSource(std::uint64_t master_seed) noexcept : seed_(master_seed) {}

  std::uint64_t master_seed() const noexcept { return seed_; }

  /// Key of the stream family (replica, k, purpose).
  std::uint64_t key(std::uint64_t replica, const Label& k, StreamPurpose purpose) const noexcept;

  /// Generator for one cell (e.g. one time step) of a stream family.
  static Stream cell(std::uint64_t key, std::uint64_t counter) noexcept {
    return Stream(mix64(key ^ mix64(counter + 0x632be59bd9b4e019ULL)));
  }

  Stream stream(std::uint64_t replica, const Label& k, StreamPurpose purpose,
                std::uint64_t counter) const noexcept {
    return cell(key(replica, k, purpose), counter);
  }

  /// Independent source for a derived run (e.g. one system replica).
  RandomnessSource derive(std::uint64_t salt) const noexcept {
    return RandomnessSource(mix64(seed_ ^ mix64(salt ^ 0xd1b54a32d192ed03ULL)));
  }

 private:
  std::uint64_t seed_;
};

}  // namespace mkvb
