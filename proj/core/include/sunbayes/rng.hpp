#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sunbayes {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Seedable random stream. Independent streams are derived deterministically
// with derive(), so concurrent consumers never share state.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : seed_(seed) {
    std::uint64_t s = seed;
    engine_.seed(detail::splitmix64(s));
  }

  std::uint64_t seed() const { return seed_; }

  // Child stream identified by (seed, id); stable across runs.
  RngStream derive(std::uint64_t id) const {
    std::uint64_t s = seed_ ^ (0xd1b54a32d192ed03ULL * (id + 1));
    return RngStream(detail::splitmix64(s));
  }

  double uniform() { return unit_(engine_); }
  double normal() { return normal_(engine_); }
  double exponential() { return -std::log1p(-unit_(engine_)); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_ = 0;
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace sunbayes
