#include "gradcode/rng.hpp"

#include <cmath>
#include <numbers>

namespace gradcode {

double Rng::normal() {
  // u1 in (0, 1] so the log is finite.
  double u1 = 1.0 - next_double();
  double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::label_seed(std::uint64_t seed, std::string_view label) {
  // FNV-1a over the label, folded into the seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return seed ^ h;
}

}  // namespace gradcode
