#pragma once

#include <Eigen/Core>
#include <vector>

#include <json.hpp>

#include "gradcode/straggler.hpp"

namespace gradcode {

// Tolerance for structural checks (row/column sums, unbiasedness residuals).
inline constexpr double kStructureTol = 1e-9;
// Entries with |value| above this count as support when inferring support
// from a dense matrix.
inline constexpr double kSupportTol = 1e-12;

// Optimal per-worker row sums: worker i of a k-worker profile over n
// partitions should carry total weight y_i = delta_inverse(p_i) * n / s,
// where s = sum_i delta_inverse(p_i). Column sums must be 1; the y_i then
// sum to n and minimize sum_i delta_i * (row sum)^2.
struct RowTargets {
  Eigen::VectorXd y;
  double s = 0.0;
  int n = 0;
};

RowTargets row_targets(const StragglerProfile& profile, int n);

// Combined-weight matrix alpha (k x n) plus its support. Support is decided
// by whoever allocated the matrix: a partition assigned to a worker stays in
// the support even if its entry happens to be exactly zero.
struct AlphaMatrix {
  Eigen::MatrixXd entries;
  std::vector<std::vector<int>> support;  // per row, ascending column ids

  int k() const { return static_cast<int>(entries.rows()); }
  int n() const { return static_cast<int>(entries.cols()); }

  // Infers support as {j : |alpha_ij| > kSupportTol}.
  static AlphaMatrix from_dense(Eigen::MatrixXd entries);
  static AlphaMatrix with_support(Eigen::MatrixXd entries,
                                  std::vector<std::vector<int>> support);
};

struct StructureReport {
  double max_column_deviation = 0.0;  // max_j |col sum - 1|
  double max_row_deviation = 0.0;     // max_i |row sum - y_i|
  double tol = kStructureTol;
  bool pass = false;
};

StructureReport verify_optimal_structure(const AlphaMatrix& alpha, const RowTargets& targets,
                                         double tol = kStructureTol);

// Deployable code: worker i computes f_i = sum_j a_ij g_j, the master forms
// ghat = sum_i I_i w_i f_i over the non-straggled workers.
struct GradientCode {
  Eigen::MatrixXd a;        // k x n encoding matrix
  Eigen::VectorXd w;        // k decoding weights
  Eigen::VectorXd w_tilde;  // w_tilde_i = (1 - p_i) w_i
  StragglerProfile profile;
  std::vector<std::vector<int>> support;
};

// Splits alpha_ij = w_tilde_i * a_ij into (a, w). Any strictly nonzero
// w_tilde gives the same estimator; all-ones is the default elsewhere.
GradientCode extract_code(const AlphaMatrix& alpha, const StragglerProfile& profile,
                          const Eigen::VectorXd& w_tilde);

// gradients: n x l, one partition gradient per row.
Eigen::MatrixXd worker_messages(const Eigen::MatrixXd& a, const Eigen::MatrixXd& gradients);
Eigen::VectorXd decode_messages(const Eigen::MatrixXd& messages, const Eigen::VectorXd& w,
                                const Eigen::VectorXi& indicators);
Eigen::VectorXd estimate(const GradientCode& code, const Eigen::VectorXi& indicators,
                         const Eigen::MatrixXd& gradients);

// Per-partition residuals sum_i (1-p_i) w_i a_ij - 1; all zero iff
// E[ghat] = sum_j g_j for every gradient set.
Eigen::VectorXd unbiasedness_residuals(const GradientCode& code);
bool is_unbiased(const GradientCode& code, double tol = kStructureTol);

// Exact E||g - ghat||^2 for an unbiased code with independent indicators:
// sum_i p_i (1-p_i) w_i^2 ||sum_j a_ij g_j||^2. Throws if the code fails the
// unbiasedness check.
double analytic_residual_error(const GradientCode& code, const Eigen::MatrixXd& gradients,
                               double tol = kStructureTol);

// C * sum_i p_i (1-p_i) w_i^2 (sum_j a_ij)^2 for gradients with
// ||g_j||^2 <= C all pointing the same way; a ceiling on the above for
// nonnegative rows.
double lemma1_bound(const GradientCode& code, double c, double tol = kStructureTol);

struct ResidualBounds {
  double residual_bound = 0.0;  // n^2 C / s
  double norm_bound = 0.0;      // n^2 C (1 + 1/s), ceiling on E||ghat||^2
};

ResidualBounds lemma2_bounds(const RowTargets& targets, double c);

// Combined artifact {k, n, alpha, w_tilde, A, w, profile}.
nlohmann::json code_to_json(const GradientCode& code, const AlphaMatrix& alpha);
GradientCode code_from_json(const nlohmann::json& j);
AlphaMatrix alpha_from_json(const nlohmann::json& j);

}  // namespace gradcode
