#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace zssbir {

// xoshiro256** seeded through splitmix64. Normals come from the Box-Muller
// transform; the second value of each pair is kept for the next call. The
// stream is identical on every platform for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent stream derived from (seed, stream) without touching any
  // existing generator; used to give every query its own generator.
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform on {0, ..., n - 1}; unbiased (rejection sampling). n >= 1.
  std::size_t uniform_index(std::size_t n);
  double normal();

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

// In-place Fisher-Yates shuffle driven by `rng`.
template <typename T>
void shuffle(T& range, Rng& rng) {
  const std::size_t n = range.size();
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    using std::swap;
    swap(range[i - 1], range[j]);
  }
}

}  // namespace zssbir
