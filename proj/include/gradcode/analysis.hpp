#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gradcode/codebook.hpp"
#include "gradcode/simulator.hpp"

namespace gradcode {

struct MonteCarloReport {
  std::int64_t trials = 0;
  Eigen::VectorXd empirical_mean_error;  // mean(ghat) - g, componentwise
  Eigen::VectorXd ci_halfwidth;          // 4 standard errors, componentwise
  double empirical_resid = 0.0;          // mean ||g - ghat||^2
  double analytic_resid = 0.0;           // NaN for biased codes
  bool mean_within_ci = false;
};

// Straggler-indicator Monte Carlo against fixed gradients. Trial t draws its
// indicators from Rng::stream(seed, t), so a parallel evaluation with a fixed
// reduction order reproduces this result exactly.
MonteCarloReport monte_carlo(const GradientCode& code, const Eigen::MatrixXd& gradients,
                             std::int64_t trials, std::uint64_t seed);

// Independent check on the optimal row sums: projected gradient descent on
//   minimize sum_i delta_i (sum_j alpha_ij)^2  s.t. column sums = 1,
// never consulting row_targets. Step size 1/(2 n max delta), start at the
// uniform feasible point, stop when the per-iteration objective decrease
// falls below tol.
struct P3Result {
  AlphaMatrix alpha;
  double objective = 0.0;
  long iterations = 0;
  bool converged = false;
};

P3Result p3_numeric_solve(const StragglerProfile& profile, int n, long max_iters = 200000,
                          double tol = 1e-12);

// sum_i delta_i (row sum)^2 - n^2/s for a column-feasible alpha; zero iff
// the row sums hit the optimal targets.
double optimality_gap(const AlphaMatrix& alpha, const StragglerProfile& profile);

struct MethodSummary {
  std::string method;
  double d = 0.0;
  bool unbiased = false;
  double mean_final_loss = 0.0;
  double mean_resid = 0.0;
  double bound_resid = 0.0;
  bool pass = false;
};

// One row per method: trace averages against the residual ceiling
// n^2 C / s. pass = unbiased and mean_resid <= bound_resid.
MethodSummary summarize_method(const BuiltMethod& method, const std::vector<TrainTrace>& traces,
                               const RowTargets& targets);

// CSV with header method,d,unbiased,mean_final_loss,mean_resid,bound_resid,pass.
std::string comparison_csv(const std::vector<MethodSummary>& rows);

}  // namespace gradcode
