#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace mhs {

// splitmix64 finalizer; derives independent stream seeds from a run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Seeded generator with library-independent sampling, so runs reproduce
// bit-exactly across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on the open interval (lo, hi).
  double uniform(double lo, double hi) {
    const double u =
        (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

  // Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do r = engine_();
    while (r >= limit);
    return r % n;
  }

  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i)
      std::swap(items[i - 1], items[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mhs
