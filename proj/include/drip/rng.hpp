#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace drip {

// Seeded random stream. All distributions are mapped from the raw engine
// output by hand so that results are identical across standard-library
// implementations. Sub-streams are derived by name so consumers stay
// independent of scheduling order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)), seed_hash_(mix(seed)) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^64.
    return engine_() % n;
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
  }

  // Standard normal via Box-Muller (fresh pair every two draws).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Derive an independent child stream from a name and index.
  Rng substream(std::string_view name, std::uint64_t index = 0) const {
    std::uint64_t h = seed_hash_;
    for (char c : name) h = mix(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    h = mix(h ^ index);
    return Rng(h, Tag{});
  }

  std::uint64_t state_hash() const { return seed_hash_; }

 private:
  struct Tag {};
  Rng(std::uint64_t derived, Tag) : engine_(derived), seed_hash_(derived) {}

  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
  std::uint64_t seed_hash_ = 0x9e3779b97f4a7c15ULL;
  double spare_ = 0.0;
  bool have_spare_ = false;
};


}  // namespace drip
