// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

namespace ddpm {

/// Counter-based pseudorandom stream with cheap deterministic splitting.
///
/// Output i of a stream with key k is a fixed 64-bit mix of (k, i), so a
/// stream can be re-created at any point from (key, ctr) alone and substreams
/// derived with child() never share draws with the parent. The standard
/// library's distributions are implementation-defined, which would break the
/// byte-identity contracts, so sampling is done here explicitly.
class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ kSeedTweak)) {}

  /// Independent substream i. Children of distinct (key, i) pairs are
  /// distinct with overwhelming probability; derivation uses a different
  /// tweak than next_u64 so a child never replays its parent's outputs.
  Rng child(std::uint64_t i) const {
    Rng r;
    r.key_ = mix((key_ ^ kChildTweak) + kGolden * (i + 1));
    return r;
  }

  std::uint64_t next_u64() { return mix(key_ + kGolden * (++ctr_)); }

  /// Uniform draw in (0, 1]. Never returns 0, so log(uniform()) is finite.
  double uniform() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller. Consumes exactly two 64-bit outputs per
  /// call and keeps no cached state, so paired streams stay aligned.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * kPi * u2);
  }

  std::uint64_t key() const { return key_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
  static constexpr std::uint64_t kSeedTweak = 0x5DEECE66DB1563A5ull;
  static constexpr std::uint64_t kChildTweak = 0xA5A5A5A5A5A5A5A5ull;
  static constexpr double kPi = 3.14159265358979323846;

  // splitmix64 finalizer.
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t ctr_ = 0;
};

}  // namespace ddpm
