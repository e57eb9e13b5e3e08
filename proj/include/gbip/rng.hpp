#pragma once

#include <cstdint>
#include <random>

namespace gbip {

/// Stage tags used to key independent random streams.
enum class Stage : std::uint64_t {
  cloud = 1,
  prior = 2,
  forward = 3,
  posterior = 4,
  data = 5,
  noise = 6,
  pcn = 7,
  test = 8,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Mixes (seed, a, b, c) into a stream seed. Streams keyed by distinct tuples
/// are independent for practical purposes, and a stream never depends on
/// which thread or in which order it is consumed.
std::uint64_t stream_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                         std::uint64_t c = 0);

inline std::uint64_t stream_key(std::uint64_t seed, Stage stage, std::uint64_t b = 0,
                                std::uint64_t c = 0) {
  return stream_key(seed, static_cast<std::uint64_t>(stage), b, c);
}

/// mt19937_64 with portable uniform / normal transforms (the std
/// distributions are implementation defined, which would break
/// cross-toolchain reproducibility of the reports).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal (Box-Muller, second value cached).
  double normal();

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace gbip
