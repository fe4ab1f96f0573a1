#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>

namespace acorn {

/// Deterministic random stream. std::mt19937_64's output sequence is fixed by
/// the standard, but the standard distributions are not, so bounded draws are
/// done here by rejection sampling to stay identical across toolchains.
class SeededStream {
 public:
  explicit SeededStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::size_t uniform_index(std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - (max % bound + 1) % bound;
    std::uint64_t x = 0;
    do {
      x = engine_();
    } while (x > limit);
    return static_cast<std::size_t>(x % bound);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace acorn
