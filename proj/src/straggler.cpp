#include "gradcode/straggler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace gradcode {

namespace {

void check_probability(double p) {
  if (!(p > 0.0) || !(p < 1.0)) {
    throw std::invalid_argument("straggler probability must lie strictly in (0,1), got " +
                                std::to_string(p));
  }
}

}  // namespace

StragglerProfile StragglerProfile::from_probabilities(const Eigen::VectorXd& p) {
  if (p.size() < 1) throw std::invalid_argument("profile needs at least one worker");
  for (Eigen::Index i = 0; i < p.size(); ++i) check_probability(p(i));

  std::vector<int> order(static_cast<std::size_t>(p.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return p(a) < p(b); });

  StragglerProfile out;
  out.k = static_cast<int>(p.size());
  out.p.resize(p.size());
  for (int i = 0; i < out.k; ++i) out.p(i) = p(order[static_cast<std::size_t>(i)]);
  out.original_index = std::move(order);
  return out;
}

double straggler_probability(double psi, double tau_th) {
  if (!(psi > 0.0)) throw std::invalid_argument("psi must be positive");
  if (!(tau_th >= 1.0)) throw std::invalid_argument("tau_th must be at least 1");
  return std::exp(-psi * (tau_th - 1.0));
}

StragglerProfile sample_profile(int k, double psi_min, double psi_max, double tau_th,
                                std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("k must be at least 1");
  if (!(psi_min > 0.0) || !(psi_max >= psi_min)) {
    throw std::invalid_argument("need 0 < psi_min <= psi_max");
  }
  if (!(tau_th > 1.0)) {
    throw std::invalid_argument("tau_th must exceed 1 for a valid profile (tau_th = 1 makes "
                                "every straggler probability equal to 1)");
  }

  Rng rng(seed);
  Eigen::VectorXd psi(k), p(k);
  for (int i = 0; i < k; ++i) {
    psi(i) = rng.uniform(psi_min, psi_max);
    p(i) = straggler_probability(psi(i), tau_th);
    check_probability(p(i));
  }

  StragglerProfile out = StragglerProfile::from_probabilities(p);
  Eigen::VectorXd psi_sorted(k);
  for (int i = 0; i < k; ++i) psi_sorted(i) = psi(out.original_index[static_cast<std::size_t>(i)]);
  out.psi = psi_sorted;
  out.tau_th = tau_th;
  out.seed = seed;
  return out;
}

Eigen::VectorXi sample_indicators(const StragglerProfile& profile, Rng& rng) {
  Eigen::VectorXi ind(profile.k);
  for (int i = 0; i < profile.k; ++i) ind(i) = rng.next_double() < profile.p(i) ? 0 : 1;
  return ind;
}

double delta(double p) {
  check_probability(p);
  return p / (1.0 - p);
}

double delta_inverse(double p) {
  check_probability(p);
  return (1.0 - p) / p;
}

nlohmann::json profile_to_json(const StragglerProfile& profile) {
  nlohmann::json j;
  j["k"] = profile.k;
  j["p"] = std::vector<double>(profile.p.begin(), profile.p.end());
  if (profile.psi) j["psi"] = std::vector<double>(profile.psi->begin(), profile.psi->end());
  if (profile.tau_th) j["tau_th"] = *profile.tau_th;
  if (profile.seed) j["seed"] = *profile.seed;
  return j;
}

StragglerProfile profile_from_json(const nlohmann::json& j) {
  if (!j.contains("k") || !j.contains("p")) {
    throw std::invalid_argument("profile JSON needs fields 'k' and 'p'");
  }
  const auto pv = j.at("p").get<std::vector<double>>();
  if (static_cast<int>(pv.size()) != j.at("k").get<int>()) {
    throw std::invalid_argument("profile JSON: length of 'p' disagrees with 'k'");
  }
  StragglerProfile out =
      StragglerProfile::from_probabilities(Eigen::Map<const Eigen::VectorXd>(pv.data(), pv.size()));
  if (j.contains("psi")) {
    const auto psv = j.at("psi").get<std::vector<double>>();
    if (psv.size() != pv.size()) throw std::invalid_argument("profile JSON: bad 'psi' length");
    // psi is stored aligned with the sorted p; re-apply the sort permutation in
    // case the file was edited into unsorted order.
    Eigen::VectorXd psi(out.k);
    for (int i = 0; i < out.k; ++i) psi(i) = psv[static_cast<std::size_t>(out.original_index[i])];
    out.psi = psi;
  }
  if (j.contains("tau_th")) out.tau_th = j.at("tau_th").get<double>();
  if (j.contains("seed")) out.seed = j.at("seed").get<std::uint64_t>();
  return out;
}

}  // namespace gradcode
