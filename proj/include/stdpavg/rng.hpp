#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace stdpavg {

// Independent stream ids. One generator per (seed, replica, stream) triple.
enum class Stream : std::uint64_t {
  pre_spikes = 1,     // P1: pre-synaptic epochs
  post_spikes = 2,    // P2: candidate epochs and marks
  shot_noise = 3,
  interacting = 4,
  discrete_fast = 5,
  discrete_weight = 6,
  equilibrium = 7,
  generic = 8,
};

inline std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// xoshiro256** seeded through splitmix64 from (seed, replica, stream).
// Satisfies UniformRandomBitGenerator so it also plugs into <random>.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0, std::uint64_t replica = 0,
               Stream stream = Stream::generic)
      : Rng(seed, replica, static_cast<std::uint64_t>(stream)) {}

  Rng(std::uint64_t seed, std::uint64_t replica, std::uint64_t stream) {
    std::uint64_t mix = seed;
    std::uint64_t a = splitmix64(mix);
    mix ^= replica * 0xD1B54A32D192ED03ULL;
    std::uint64_t b = splitmix64(mix);
    mix ^= stream * 0xABC98388FB8FAC03ULL;
    std::uint64_t c = splitmix64(mix);
    std::uint64_t sm = a ^ (b << 1) ^ (c << 2) ^ 0x5851F42D4C957F2DULL;
    for (auto& w : s_) w = splitmix64(sm);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform on the open interval (0,1).
  double uniform() {
    for (;;) {
      double u = static_cast<double>((*this)() >> 11) * 0x1.0p-53;
      if (u > 0.0) return u;
    }
  }

  // Exponential with the given rate; +inf when rate == 0.
  double exponential(double rate) {
    if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
    return -std::log(uniform()) / rate;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t s_[4]{};
};

}  // namespace stdpavg
