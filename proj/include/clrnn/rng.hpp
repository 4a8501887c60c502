#pragma once

// Seeded splitmix64 generator. Standard-library distributions are
// implementation defined, so uniform sampling is done here by hand; the
// same seed produces the same stream on every platform.

#include <cstdint>

namespace clrnn {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), n > 0
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(next_u64() % n);
  }

  // Independent stream derived from this seed; used so that e.g. dropout
  // and batch shuffling do not perturb each other.
  Rng split(std::uint64_t stream) const {
    return Rng(state_ ^ (0xa0761d6478bd642fULL * (stream + 1)));
  }

 private:
  std::uint64_t state_;
};

template <class T>
void shuffle(T& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace clrnn
