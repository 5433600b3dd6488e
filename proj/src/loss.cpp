#include "gradcode/loss.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

#include "gradcode/rng.hpp"

namespace gradcode {

namespace {

void check_shapes(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() < 1 || x.cols() < 1) throw std::invalid_argument("empty design matrix");
  if (y.size() != x.rows()) throw std::invalid_argument("one target per sample required");
}

// log(1 + exp(-z)) without overflow.
double log1pexp_neg(double z) {
  if (z > 0.0) return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

LossModel LossModel::quadratic(Eigen::MatrixXd x, Eigen::VectorXd y) {
  check_shapes(x, y);
  LossModel m;
  m.kind_ = LossKind::quadratic;
  m.x_ = std::move(x);
  m.y_ = std::move(y);
  m.lambda_reg_ = 0.0;
  m.finalize();
  return m;
}

LossModel LossModel::ridge(Eigen::MatrixXd x, Eigen::VectorXd y, double lambda_reg) {
  check_shapes(x, y);
  if (!(lambda_reg > 0.0)) throw std::invalid_argument("ridge needs lambda_reg > 0");
  LossModel m;
  m.kind_ = LossKind::ridge;
  m.x_ = std::move(x);
  m.y_ = std::move(y);
  m.lambda_reg_ = lambda_reg;
  m.finalize();
  return m;
}

LossModel LossModel::logistic(Eigen::MatrixXd x, Eigen::VectorXd y, double lambda_reg) {
  check_shapes(x, y);
  if (!(lambda_reg > 0.0)) throw std::invalid_argument("logistic needs lambda_reg > 0");
  for (Eigen::Index s = 0; s < y.size(); ++s) {
    if (y(s) != 1.0 && y(s) != -1.0) throw std::invalid_argument("logistic labels must be +-1");
  }
  LossModel m;
  m.kind_ = LossKind::logistic;
  m.x_ = std::move(x);
  m.y_ = std::move(y);
  m.lambda_reg_ = lambda_reg;
  m.finalize();
  return m;
}

void LossModel::finalize() {
  const Eigen::MatrixXd gram = x_.transpose() * x_;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double gram_min = eig.eigenvalues().minCoeff();
  const double gram_max = eig.eigenvalues().maxCoeff();

  if (kind_ == LossKind::logistic) {
    // Hessian is sum sigma'' x x^T + lambda_reg I with sigma'' <= 1/4.
    lambda_sc_ = lambda_reg_;
    mu_ = 0.25 * gram_max + lambda_reg_;
    // Deterministic full-gradient descent; fast enough at desk scale and
    // independent of any iterative solver choices elsewhere.
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(dim());
    const double step = 1.0 / mu_;
    const double target = 1e-12;
    bool converged = false;
    for (long it = 0; it < 2'000'000; ++it) {
      Eigen::VectorXd g = gradient(beta);
      if (g.norm() <= target) {
        converged = true;
        break;
      }
      beta -= step * g;
    }
    if (!converged && gradient(beta).norm() > target) {
      throw std::runtime_error("logistic minimizer did not reach gradient norm 1e-12");
    }
    beta_star_ = beta;
    return;
  }

  lambda_sc_ = gram_min + lambda_reg_;
  mu_ = gram_max + lambda_reg_;
  if (!(lambda_sc_ > 0.0)) {
    throw std::invalid_argument("objective is not strongly convex: rank-deficient quadratic "
                                "without regularization");
  }
  Eigen::MatrixXd h = gram;
  h.diagonal().array() += lambda_reg_;
  beta_star_ = h.ldlt().solve(x_.transpose() * y_);
}

double LossModel::loss(const Eigen::VectorXd& beta) const {
  if (beta.size() != dim()) throw std::invalid_argument("beta has wrong dimension");
  const Eigen::VectorXd z = x_ * beta;
  double value = 0.0;
  if (kind_ == LossKind::logistic) {
    for (Eigen::Index s = 0; s < y_.size(); ++s) value += log1pexp_neg(y_(s) * z(s));
  } else {
    value = 0.5 * (z - y_).squaredNorm();
  }
  return value + 0.5 * lambda_reg_ * beta.squaredNorm();
}

Eigen::VectorXd LossModel::gradient(const Eigen::VectorXd& beta) const {
  if (beta.size() != dim()) throw std::invalid_argument("beta has wrong dimension");
  const Eigen::VectorXd z = x_ * beta;
  Eigen::VectorXd g;
  if (kind_ == LossKind::logistic) {
    Eigen::VectorXd coeff(y_.size());
    for (Eigen::Index s = 0; s < y_.size(); ++s) coeff(s) = -y_(s) * sigmoid(-y_(s) * z(s));
    g = x_.transpose() * coeff;
  } else {
    g = x_.transpose() * (z - y_);
  }
  return g + lambda_reg_ * beta;
}

Eigen::VectorXd LossModel::partition_gradient(const Partition& part,
                                              const Eigen::VectorXd& beta) const {
  if (part.begin < 0 || part.count < 1 || part.begin + part.count > samples()) {
    throw std::invalid_argument("partition out of range");
  }
  if (beta.size() != dim()) throw std::invalid_argument("beta has wrong dimension");
  const auto xb = x_.middleRows(part.begin, part.count);
  const auto yb = y_.segment(part.begin, part.count);
  const Eigen::VectorXd z = xb * beta;
  Eigen::VectorXd g;
  if (kind_ == LossKind::logistic) {
    Eigen::VectorXd coeff(part.count);
    for (Eigen::Index s = 0; s < coeff.size(); ++s) coeff(s) = -yb(s) * sigmoid(-yb(s) * z(s));
    g = xb.transpose() * coeff;
  } else {
    g = xb.transpose() * (z - yb);
  }
  const double share = static_cast<double>(part.count) / samples();
  return g + share * lambda_reg_ * beta;
}

Eigen::VectorXd LossModel::subset_gradient(const Partition& part, const std::vector<int>& rows,
                                           const Eigen::VectorXd& beta) const {
  if (rows.empty()) throw std::invalid_argument("subset must be nonempty");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim());
  for (int r : rows) {
    if (r < part.begin || r >= part.begin + part.count) {
      throw std::invalid_argument("subset row outside partition");
    }
    const double z = x_.row(r).dot(beta);
    if (kind_ == LossKind::logistic) {
      g += x_.row(r).transpose() * (-y_(r) * sigmoid(-y_(r) * z));
    } else {
      g += x_.row(r).transpose() * (z - y_(r));
    }
  }
  const double scale = static_cast<double>(part.count) / static_cast<double>(rows.size());
  const double share = static_cast<double>(part.count) / samples();
  return scale * g + share * lambda_reg_ * beta;
}

std::vector<Partition> partition_dataset(const LossModel& loss, int n) {
  if (n < 1 || n > loss.samples()) {
    throw std::invalid_argument("need 1 <= n <= number of samples");
  }
  std::vector<Partition> parts;
  int base = loss.samples() / n, extra = loss.samples() % n, start = 0;
  for (int j = 0; j < n; ++j) {
    Partition p{start, base + (j < extra ? 1 : 0)};
    start += p.count;
    parts.push_back(p);
  }
  return parts;
}

Eigen::VectorXd local_gradient(const LossModel& loss, const Partition& part,
                               const Eigen::VectorXd& beta, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("clip level C must be positive");
  Eigen::VectorXd g = loss.partition_gradient(part, beta);
  const double norm_sq = g.squaredNorm();
  if (norm_sq > c) g *= std::sqrt(c / norm_sq);
  return g;
}

LossModel make_synthetic_ridge(int m, int l, double lambda_reg, double noise,
                               std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(m, l);
  for (int s = 0; s < m; ++s) {
    for (int f = 0; f < l; ++f) x(s, f) = rng.normal() / std::sqrt(static_cast<double>(m));
  }
  Eigen::VectorXd beta_true(l);
  for (int f = 0; f < l; ++f) beta_true(f) = rng.uniform(-2.0, 2.0);
  Eigen::VectorXd y = x * beta_true;
  for (int s = 0; s < m; ++s) y(s) += noise * rng.normal();
  return LossModel::ridge(std::move(x), std::move(y), lambda_reg);
}

LossModel make_synthetic_quadratic(int m, int l, double noise, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(m, l);
  for (int s = 0; s < m; ++s) {
    for (int f = 0; f < l; ++f) x(s, f) = rng.normal() / std::sqrt(static_cast<double>(m));
  }
  Eigen::VectorXd beta_true(l);
  for (int f = 0; f < l; ++f) beta_true(f) = rng.uniform(-2.0, 2.0);
  Eigen::VectorXd y = x * beta_true;
  for (int s = 0; s < m; ++s) y(s) += noise * rng.normal();
  return LossModel::quadratic(std::move(x), std::move(y));
}

LossModel make_synthetic_logistic(int m, int l, double lambda_reg, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(m, l);
  for (int s = 0; s < m; ++s) {
    for (int f = 0; f < l; ++f) x(s, f) = rng.normal();
  }
  Eigen::VectorXd beta_true(l);
  for (int f = 0; f < l; ++f) beta_true(f) = rng.uniform(-1.5, 1.5);
  Eigen::VectorXd y(m);
  for (int s = 0; s < m; ++s) {
    const double margin = x.row(s).dot(beta_true);
    // Labels drawn from the model itself, so a fraction near the boundary
    // flips and the optimum is interior.
    y(s) = rng.next_double() < sigmoid(margin) ? 1.0 : -1.0;
  }
  return LossModel::logistic(std::move(x), std::move(y), lambda_reg);
}

}  // namespace gradcode
