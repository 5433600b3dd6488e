#include "gradcode/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "gradcode/rng.hpp"

namespace gradcode {

MonteCarloReport monte_carlo(const GradientCode& code, const Eigen::MatrixXd& gradients,
                             std::int64_t trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("need at least one trial");
  const Eigen::MatrixXd messages = worker_messages(code.a, gradients);
  const Eigen::VectorXd g = gradients.colwise().sum().transpose();
  const int l = static_cast<int>(gradients.cols());

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(l);
  Eigen::VectorXd second = Eigen::VectorXd::Zero(l);  // componentwise sum of squares
  double resid_sum = 0.0;

  for (std::int64_t t = 0; t < trials; ++t) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(t));
    const Eigen::VectorXi indicators = sample_indicators(code.profile, rng);
    const Eigen::VectorXd ghat = decode_messages(messages, code.w, indicators);
    mean += ghat;
    second += ghat.array().square().matrix();
    resid_sum += (g - ghat).squaredNorm();
  }

  MonteCarloReport rep;
  rep.trials = trials;
  mean /= static_cast<double>(trials);
  rep.empirical_mean_error = mean - g;
  // Componentwise standard error of the mean from the sample variance.
  Eigen::ArrayXd var =
      (second.array() / static_cast<double>(trials) - mean.array().square()).max(0.0);
  rep.ci_halfwidth = (4.0 * (var / static_cast<double>(trials)).sqrt()).matrix();
  rep.empirical_resid = resid_sum / static_cast<double>(trials);
  rep.analytic_resid = is_unbiased(code)
                           ? analytic_residual_error(code, gradients)
                           : std::numeric_limits<double>::quiet_NaN();
  rep.mean_within_ci =
      (rep.empirical_mean_error.cwiseAbs().array() <= rep.ci_halfwidth.array() + 1e-15).all();
  return rep;
}

P3Result p3_numeric_solve(const StragglerProfile& profile, int n, long max_iters, double tol) {
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  if (max_iters < 1) throw std::invalid_argument("need at least one iteration");
  const int k = profile.k;
  Eigen::VectorXd delta_vec(k);
  for (int i = 0; i < k; ++i) delta_vec(i) = delta(profile.p(i));
  const double step = 1.0 / (2.0 * delta_vec.maxCoeff() * n);

  // Feasible start: uniform columns.
  Eigen::MatrixXd alpha = Eigen::MatrixXd::Constant(k, n, 1.0 / k);
  auto objective = [&](const Eigen::MatrixXd& a) {
    return (delta_vec.array() * a.rowwise().sum().array().square()).sum();
  };

  double obj = objective(alpha);
  P3Result out;
  for (long it = 0; it < max_iters; ++it) {
    const Eigen::VectorXd row_sums = alpha.rowwise().sum();
    // d/d alpha_ij = 2 delta_i row_sum_i, constant along each row.
    const Eigen::VectorXd grad_row = 2.0 * delta_vec.array() * row_sums.array();
    alpha.colwise() -= step * grad_row;
    // Re-project onto column sums = 1.
    const Eigen::RowVectorXd col_err = (alpha.colwise().sum().array() - 1.0) / k;
    alpha.rowwise() -= col_err;
    const double next = objective(alpha);
    out.iterations = it + 1;
    if (obj - next < tol) {
      obj = next;
      out.converged = true;
      break;
    }
    obj = next;
  }
  out.objective = obj;
  out.alpha = AlphaMatrix::from_dense(std::move(alpha));
  return out;
}

double optimality_gap(const AlphaMatrix& alpha, const StragglerProfile& profile) {
  if (alpha.k() != profile.k) throw std::invalid_argument("alpha rows disagree with profile");
  for (int j = 0; j < alpha.n(); ++j) {
    if (std::abs(alpha.entries.col(j).sum() - 1.0) > kStructureTol) {
      throw std::invalid_argument("optimality gap needs column sums equal to 1");
    }
  }
  double value = 0.0;
  double s = 0.0;
  for (int i = 0; i < profile.k; ++i) {
    const double rs = alpha.entries.row(i).sum();
    value += delta(profile.p(i)) * rs * rs;
    s += delta_inverse(profile.p(i));
  }
  const double n = static_cast<double>(alpha.n());
  return value - n * n / s;
}

MethodSummary summarize_method(const BuiltMethod& method, const std::vector<TrainTrace>& traces,
                               const RowTargets& targets) {
  if (traces.empty()) throw std::invalid_argument("no traces to summarize");
  MethodSummary row;
  row.method = method.name;
  row.d = method.load;
  row.unbiased = method.kind == MethodKind::gd ||
                 (method.code && method.kind != MethodKind::od && is_unbiased(*method.code));

  double loss_sum = 0.0, resid_sum = 0.0;
  long resid_count = 0;
  for (const TrainTrace& trace : traces) {
    loss_sum += trace.final_loss;
    for (double r : trace.resid_sq) {
      resid_sum += r;
      resid_count += 1;
    }
  }
  row.mean_final_loss = loss_sum / static_cast<double>(traces.size());
  row.mean_resid = resid_sum / static_cast<double>(resid_count);
  row.bound_resid = lemma2_bounds(targets, traces.front().c_used).residual_bound;
  row.pass = row.unbiased && row.mean_resid <= row.bound_resid;
  return row;
}

std::string comparison_csv(const std::vector<MethodSummary>& rows) {
  std::string out = "method,d,unbiased,mean_final_loss,mean_resid,bound_resid,pass\n";
  char buf[160];
  for (const MethodSummary& row : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%d,%.17g,%.17g,%.17g,%d\n", row.method.c_str(),
                  row.d, row.unbiased ? 1 : 0, row.mean_final_loss, row.mean_resid,
                  row.bound_resid, row.pass ? 1 : 0);
    out += buf;
  }
  return out;
}

}  // namespace gradcode
