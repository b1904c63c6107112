#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace mohn {

// xoshiro256++ seeded through splitmix64.  Chosen over std::mt19937_64 so
// that streams are identical across standard libraries and the full
// generator state is four words, which checkpoints serialize verbatim.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();

  // Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Unbiased integer in [0, n); n must be nonzero.
  std::uint64_t below(std::uint64_t n);

  // Standard normal via Box-Muller.  One value per call (the usual cached
  // spare would leak hidden state past the four serialized words).
  double gaussian();

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<std::uint64_t, 4> s_{};
};

// Derives a stream seed for a worker or subsystem; disjoint ids give
// statistically independent streams from one master seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace mohn
