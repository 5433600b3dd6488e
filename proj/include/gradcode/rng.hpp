#pragma once

#include <cstdint>
#include <string_view>

namespace gradcode {

// Counter-based splitmix64 stream. Every draw is a pure function of
// (seed, draw index), so runs are reproducible bit for bit on any platform;
// std::random distributions are implementation-defined and are avoided on
// purpose.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller. Consumes two uniforms per call and keeps
  // no cached spare, so the draw count stays a simple function of call count.
  double normal();

  // Independent substream for trial/run `index` under the same top seed.
  // The affine map gives distinct (seed, index) pairs distinct start states
  // for any realistic index range; a plain xor would hand neighboring seeds
  // the same multiset of substreams, making averaged statistics collide.
  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    return Rng(seed + (index + 1) * 0xd1342543de82ef95ULL);
  }

  // Module/purpose seeds derived from one top-level seed by fixed labels.
  static std::uint64_t label_seed(std::uint64_t seed, std::string_view label);

 private:
  std::uint64_t state_;
};

}  // namespace gradcode
