#ifndef JUMPY_RANDOM_H_
#define JUMPY_RANDOM_H_

#include <cstdint>
#include <random>

namespace jumpy {

// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Child seed for `stream` under `parent`. Distinct (parent, stream) pairs give
// unrelated seeds, so per-episode / per-step streams never overlap.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  return mix_seed(mix_seed(parent) ^ mix_seed(stream + 0x5851f42d4c957f2dULL));
}

// A seeded engine bundled with the distributions the code base draws from.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(mix_seed(seed)) {}

  double gaussian() { return normal_(engine_); }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01_(engine_);
  }
  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform01_{0.0, 1.0};
};

}  // namespace jumpy

#endif  // JUMPY_RANDOM_H_
