#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gradcode/baselines.hpp"
#include "gradcode/codebook.hpp"
#include "gradcode/loss.hpp"
#include "gradcode/schemes.hpp"

namespace gradcode {

enum class Schedule {
  constant,          // gamma
  inverse_lambda_t,  // 1 / (lambda_sc * t), t = 1, 2, ...
  inv_sqrt_total,    // 1 / sqrt(T + 1), fixed over the run
  inv_sqrt_t,        // 1 / sqrt(t + 1), t = 0, 1, ...
};

enum class MethodKind { gd, scheme1, scheme2, sparse, dense, is_sgd, bgc, ehd, od, sgc };

std::string method_name(MethodKind kind);

struct MethodSpec {
  MethodKind kind = MethodKind::scheme2;
  double d = 2.0;                      // density for bgc / ehd / od / sgc
  std::optional<std::vector<int>> b;   // batch-size override for the schemes
  std::uint64_t code_seed = 0;         // sampling seed for bgc / od / sgc
};

// A method ready to run: gd has no code, od re-decodes every iteration.
struct BuiltMethod {
  MethodKind kind = MethodKind::gd;
  std::string name;
  std::optional<GradientCode> code;
  std::optional<AlphaMatrix> alpha;  // present for constructions with a combined matrix
  double load = 0.0;
};

BuiltMethod build_method(const MethodSpec& spec, const StragglerProfile& profile, int n);

struct AdamOptions {
  double lambda2 = 1.0;  // two-track penalty weight
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd s;
  int t = 0;
};

struct TrainConfig {
  explicit TrainConfig(LossModel model) : loss(std::move(model)) {}

  LossModel loss;
  int n = 1;
  StragglerProfile profile;
  MethodSpec method;
  Schedule schedule = Schedule::constant;
  double gamma = 0.01;  // rate for Schedule::constant
  int iterations = 100;
  int runs = 10;
  std::uint64_t seed = 0;
  std::optional<double> clip_c;  // default: 4 x max initial partition-gradient squared norm
  std::optional<Eigen::VectorXd> beta0;  // default zeros
  std::optional<AdamOptions> adam;       // two-track adaptive optimizer
  std::optional<double> minibatch_fraction;  // within-partition subsampling
  bool record_indicators = false;
};

struct TrainTrace {
  std::vector<double> loss;
  std::vector<double> dist_sq_opt;
  std::vector<double> resid_sq;
  std::vector<double> gamma;
  std::vector<double> g_norm_sq;
  std::vector<int> n_stragglers;
  std::vector<std::vector<int>> straggler_sets;  // filled when record_indicators
  Eigen::VectorXd final_beta;
  double final_loss = 0.0;
  double final_dist_sq = 0.0;
  int all_straggler_events = 0;
  double c_used = 0.0;
  double sigma2_hat = 0.0;  // mini-batch variance estimate, 0 when disabled
};

// One trace per run; run r draws indicators from Rng::stream(seed, r). The
// training estimator is codebook estimate() on the built code, so simulator
// and library agree bit for bit.
std::vector<TrainTrace> train(const TrainConfig& config);

// Second-moment decoding weights v minimizing
//   lambda2 (n - sum_i (1-p_i) r_i v_i)^2 + sum_i p_i (1-p_i) r_i^2 v_i^2,
// r_i the encoding row sums: v_i = n lambda2 / (p_i r_i (1 + lambda2 s)).
// lambda2 = 0 degenerates to v = 0 (documented, not an error).
Eigen::VectorXd two_track_decoder(const GradientCode& code, double lambda2);

// The objective above; exposed for verification.
double two_track_objective(const GradientCode& code, double lambda2, const Eigen::VectorXd& v);

// One Adam step with separate first/second-moment gradient estimates.
void adam_two_track_step(AdamState& state, Eigen::VectorXd& beta,
                         const Eigen::VectorXd& g_first, const Eigen::VectorXd& g_second,
                         double gamma, const AdamOptions& opt);

// Dense mini-batch weights alpha_ij = delta_inverse(p_i)/s: every worker
// touches every partition.
AlphaMatrix minibatch_dense_alpha(const StragglerProfile& profile, int n);

// n^2 C / s + n sigma^2 (1 + n/s) for within-partition sampling with
// per-partition gradient noise sigma^2.
double minibatch_residual_bound(const RowTargets& targets, double c, double sigma_sq);

// CSV with header run,t,loss,dist_sq_opt,resid_sq,gamma,n_stragglers.
std::string traces_to_csv(const std::vector<TrainTrace>& traces);

}  // namespace gradcode
