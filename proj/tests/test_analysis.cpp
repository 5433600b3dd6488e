#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "gradcode/analysis.hpp"
#include "gradcode/baselines.hpp"
#include "gradcode/rng.hpp"
#include "gradcode/schemes.hpp"

using namespace gradcode;

namespace {

StragglerProfile explicit_profile(std::initializer_list<double> ps) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(ps.size()));
  int i = 0;
  for (double v : ps) p(i++) = v;
  return StragglerProfile::from_probabilities(p);
}

GradientCode scheme2_code(const StragglerProfile& prof, int n) {
  RowTargets targets = row_targets(prof, n);
  AlphaMatrix alpha = scheme2_alpha(
      scheme2_allocate(default_batch_sizes(targets, prof.k, n), n, prof.k), targets);
  return extract_code(alpha, prof, Eigen::VectorXd::Ones(prof.k));
}

Eigen::MatrixXd random_gradients(int n, int l, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd g(n, l);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < l; ++j) g(i, j) = rng.normal();
  return g;
}

}  // namespace

TEST_CASE("monte carlo confirms unbiasedness and the analytic residual") {
  StragglerProfile prof = explicit_profile({0.15, 0.3, 0.45, 0.6});
  GradientCode code = scheme2_code(prof, 7);
  Eigen::MatrixXd g = random_gradients(7, 5, 2024);
  MonteCarloReport rep = monte_carlo(code, g, 100000, 55);
  CHECK(rep.trials == 100000);
  CHECK(rep.mean_within_ci);
  CHECK(rep.empirical_mean_error.cwiseAbs().maxCoeff() <=
        rep.ci_halfwidth.maxCoeff() + 1e-12);
  const double analytic = analytic_residual_error(code, g);
  CHECK(rep.analytic_resid == doctest::Approx(analytic).epsilon(1e-12));
  CHECK(std::abs(rep.empirical_resid - analytic) / analytic <= 0.03);
}

TEST_CASE("monte carlo is reproducible and seed-sensitive") {
  StragglerProfile prof = explicit_profile({0.2, 0.4, 0.6});
  GradientCode code = scheme2_code(prof, 5);
  Eigen::MatrixXd g = random_gradients(5, 4, 11);
  MonteCarloReport a = monte_carlo(code, g, 20000, 9);
  MonteCarloReport b = monte_carlo(code, g, 20000, 9);
  CHECK(a.empirical_resid == b.empirical_resid);
  CHECK((a.empirical_mean_error - b.empirical_mean_error).cwiseAbs().maxCoeff() == 0.0);
  MonteCarloReport c = monte_carlo(code, g, 20000, 10);
  CHECK(a.empirical_resid != c.empirical_resid);
}

TEST_CASE("monte carlo on near-certain workers shows near-zero residual") {
  StragglerProfile prof =
      StragglerProfile::from_probabilities(Eigen::VectorXd::Constant(3, 1e-9));
  GradientCode code = scheme2_code(prof, 6);
  Eigen::MatrixXd g = random_gradients(6, 4, 31);
  MonteCarloReport rep = monte_carlo(code, g, 20000, 3);
  CHECK(rep.empirical_resid <= 1e-6);
}

TEST_CASE("monte carlo flags biased codes") {
  StragglerProfile prof = explicit_profile({0.2, 0.35, 0.5});
  GradientCode code = is_sgd_code(prof, 6);
  Eigen::MatrixXd g = random_gradients(6, 4, 47);
  MonteCarloReport rep = monte_carlo(code, g, 50000, 21);
  CHECK(std::isnan(rep.analytic_resid));
  CHECK_FALSE(rep.mean_within_ci);
}

TEST_CASE("the numeric solver lands on the closed-form optimum") {
  // Single worker: no freedom, objective delta n^2 = n^2/s.
  StragglerProfile solo = explicit_profile({0.4});
  P3Result rs = p3_numeric_solve(solo, 5);
  CHECK(rs.converged);
  CHECK(rs.objective == doctest::Approx(delta(0.4) * 25.0).epsilon(1e-9));

  // Equal workers, k=2, n=2: optimum 4/(2 delta_inv) = 2 delta.
  StragglerProfile pair = explicit_profile({0.5, 0.5});
  P3Result rp = p3_numeric_solve(pair, 2);
  CHECK(rp.converged);
  CHECK(rp.objective == doctest::Approx(2.0).epsilon(1e-9));

  Rng rng(606);
  for (int inst = 0; inst < 20; ++inst) {
    const int k = 1 + static_cast<int>(rng.next_u64() % 10);
    const int n = k + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(21 - k));
    Eigen::VectorXd p(k);
    for (int i = 0; i < k; ++i) p(i) = rng.uniform(0.05, 0.85);
    StragglerProfile prof = StragglerProfile::from_probabilities(p);
    P3Result res = p3_numeric_solve(prof, n);
    CHECK(res.converged);
    const double opt = static_cast<double>(n) * n / row_targets(prof, n).s;
    CHECK(std::abs(res.objective - opt) / opt <= 1e-6);
    // The numeric minimizer is column-feasible and its gap is tiny.
    CHECK(optimality_gap(res.alpha, prof) <= 1e-6 * opt);
  }
}

TEST_CASE("optimality gap separates constructed and off-target matrices") {
  StragglerProfile prof = explicit_profile({0.2, 1.0 / 3.0, 0.5});
  RowTargets targets = row_targets(prof, 5);
  AlphaMatrix alpha = scheme2_alpha(
      scheme2_allocate(default_batch_sizes(targets, 3, 5), 5, 3), targets);
  CHECK(optimality_gap(alpha, prof) <= 1e-9);
  CHECK(verify_optimal_structure(alpha, targets).pass);

  // Shift mass between rows, keeping columns feasible: gap strictly positive,
  // structure check fails.
  AlphaMatrix off = alpha;
  off.entries(0, 0) += 1e-3;
  off.entries(1, 0) -= 1e-3;
  CHECK(optimality_gap(off, prof) > 1e-9);
  CHECK_FALSE(verify_optimal_structure(off, targets).pass);

  // All mass on the first worker.
  AlphaMatrix lopsided = alpha;
  lopsided.entries.setZero();
  lopsided.entries.row(0).setOnes();
  const double expected = delta(prof.p(0)) * 25.0 - 25.0 / targets.s;
  CHECK(optimality_gap(lopsided, prof) == doctest::Approx(expected).epsilon(1e-12));

  // Column-infeasible input is rejected.
  AlphaMatrix broken = alpha;
  broken.entries(0, 0) += 0.5;
  CHECK_THROWS_AS(optimality_gap(broken, prof), std::invalid_argument);
}

TEST_CASE("random column-feasible matrices never beat the optimum") {
  Rng rng(909);
  StragglerProfile prof = explicit_profile({0.1, 0.3, 0.5, 0.7});
  for (int inst = 0; inst < 50; ++inst) {
    const int n = 4 + static_cast<int>(rng.next_u64() % 9);
    Eigen::MatrixXd m(4, n);
    for (int j = 0; j < n; ++j) {
      double colsum = 0.0;
      for (int i = 0; i < 4; ++i) {
        m(i, j) = rng.uniform(-1.0, 1.0);
        colsum += m(i, j);
      }
      for (int i = 0; i < 4; ++i) m(i, j) -= (colsum - 1.0) / 4.0;
    }
    CHECK(optimality_gap(AlphaMatrix::from_dense(m), prof) >= -1e-12);
  }
}

TEST_CASE("method summaries compare residuals against the ceiling") {
  LossModel loss = make_synthetic_ridge(40, 5, 1.0, 0.4, 17);
  StragglerProfile prof = explicit_profile({0.15, 0.3, 0.45, 0.6});
  const int n = 8;
  RowTargets targets = row_targets(prof, n);

  std::vector<MethodSummary> rows;
  for (MethodKind kind : {MethodKind::gd, MethodKind::scheme2, MethodKind::bgc}) {
    TrainConfig cfg(loss);
    cfg.n = n;
    cfg.profile = prof;
    cfg.method.kind = kind;
    cfg.method.d = 2.0;
    cfg.method.code_seed = 12;
    cfg.schedule = Schedule::constant;
    cfg.gamma = 0.05;
    cfg.iterations = 40;
    cfg.runs = 3;
    cfg.seed = 5150;
    rows.push_back(summarize_method(build_method(cfg.method, prof, n), train(cfg), targets));
  }

  CHECK(rows[0].method == "gd");
  CHECK(rows[0].unbiased);
  CHECK(rows[0].mean_resid == 0.0);
  CHECK(rows[0].pass);

  CHECK(rows[1].method == "scheme2");
  CHECK(rows[1].unbiased);
  CHECK(rows[1].mean_resid > 0.0);
  CHECK(rows[1].mean_resid <= rows[1].bound_resid);
  CHECK(rows[1].pass);

  CHECK(rows[2].method == "bgc");
  CHECK_FALSE(rows[2].unbiased);
  CHECK_FALSE(rows[2].pass);

  std::string csv = comparison_csv(rows);
  std::istringstream in(csv);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "method,d,unbiased,mean_final_loss,mean_resid,bound_resid,pass");
  int count = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++count;
  CHECK(count == 3);
}
