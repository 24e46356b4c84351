// braintalker/rng.hpp
//
// Deterministic random streams. Everything random in the project (synthetic
// corpora, weight init, epoch shuffles) is derived from a base seed plus a
// stream path, so runs are reproducible and independent streams never
// interact. std::mt19937_64 output is fully specified by the standard; the
// distributions are hand-rolled because the std ones are not portable.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace bt {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stable 64-bit hash of a label, for name-keyed parameter substreams.
std::uint64_t hash_label(const std::string& label);

// Mix a base seed with a stream path, e.g. derive_seed(seed, {word, trial}).
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal via Box-Muller.
  double gaussian();

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  // Fisher-Yates with the portable integer draw above.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = std::size_t(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace bt
