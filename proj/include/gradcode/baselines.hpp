#pragma once

#include <cstdint>

#include "gradcode/codebook.hpp"

namespace gradcode {

// Benchmark codes. All return a deployable GradientCode on the given
// profile; none of them adapts weights to the straggler probabilities except
// sgc_code, which rescales for unbiasedness.

// Disjoint contiguous blocks, one owner per partition, unit weights.
// Computation load 1; biased whenever any p_i > 0.
GradientCode is_sgd_code(const StragglerProfile& profile, int n);

// Bernoulli(d/k) binary encoding matrix, unit weights. Rejects d/k < 1/(kn)
// (expected support below one entry) and d > k.
GradientCode bgc_code(const StragglerProfile& profile, int n, double d, std::uint64_t seed);

// Fixed groups of d workers replicating contiguous partition blocks, unit
// weights. Requires d to divide k.
GradientCode fr_code(const StragglerProfile& profile, int n, int d);

// Each partition handed to exactly d workers (balanced, seeded), entries
// 1/(d (1-p_i)), unit weights; unbiased by construction.
GradientCode sgc_code(const StragglerProfile& profile, int n, int d, std::uint64_t seed);

// Binary encoding for the per-iteration optimal decoder; identical sampler
// (and matrix, for equal seeds) as bgc_code.
Eigen::MatrixXd od_encoding(const StragglerProfile& profile, int n, double d, std::uint64_t seed);

// Least-squares decoding weights against the survivor rows:
// min ||1_n - A_S^T w_S||^2, minimum-norm solution, zeros on stragglers.
// Singular values below 1e-10 of the largest are truncated.
Eigen::VectorXd od_decode(const Eigen::MatrixXd& a, const Eigen::VectorXi& indicators);

}  // namespace gradcode
