#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace memvr {

/// Seedable 64-bit generator. Independent streams are obtained with split(),
/// which derives a child seed from (seed, stream) so that runs are
/// reproducible regardless of how many streams are created.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  Rng split(std::uint64_t stream) const { return Rng(seed_, stream_ * 0x9E3779B97F4A7C15ULL + stream + 1); }

  std::uint64_t seed() const { return seed_; }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);
  /// Uniform real in [0, 1).
  double uniform();
  double normal();

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
};

}  // namespace memvr
