#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "gradcode/rng.hpp"

namespace gradcode {

// Worker straggling model: worker i fails to deliver within the deadline with
// probability p_i, independently across workers and iterations.
//
// Workers are kept sorted ascending by p_i (most reliable first);
// original_index[i] is the caller-side identity of sorted slot i.
struct StragglerProfile {
  int k = 0;
  Eigen::VectorXd p;
  std::vector<int> original_index;
  std::optional<Eigen::VectorXd> psi;   // aligned with the sorted order
  std::optional<double> tau_th;
  std::optional<std::uint64_t> seed;

  // Validates each p_i in (0,1), sorts ascending, records the permutation.
  static StragglerProfile from_probabilities(const Eigen::VectorXd& p);
};

// Probability that an exponential worker with rate psi misses a deadline at
// tau_th times the mean compute time: exp(-psi * (tau_th - 1)).
double straggler_probability(double psi, double tau_th);

// Draws psi_i ~ U[psi_min, psi_max] and maps through straggler_probability.
// tau_th must exceed 1, otherwise every p_i would be 1 and no valid profile
// exists.
StragglerProfile sample_profile(int k, double psi_min, double psi_max, double tau_th,
                                std::uint64_t seed);

// One Bernoulli indicator per worker: 0 with probability p_i (straggled),
// 1 otherwise. Consumes exactly k draws from rng.
Eigen::VectorXi sample_indicators(const StragglerProfile& profile, Rng& rng);

double delta(double p);          // p / (1 - p)
double delta_inverse(double p);  // (1 - p) / p

nlohmann::json profile_to_json(const StragglerProfile& profile);
StragglerProfile profile_from_json(const nlohmann::json& j);

}  // namespace gradcode
