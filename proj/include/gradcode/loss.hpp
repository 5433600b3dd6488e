#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace gradcode {

enum class LossKind { quadratic, ridge, logistic };

// Contiguous slice of dataset rows handled as one partition.
struct Partition {
  int begin = 0;
  int count = 0;
};

// Convex training objectives over an (m x l) design matrix.
//
//   quadratic/ridge:  0.5 sum_s (x_s . beta - y_s)^2 + 0.5 lambda_reg |beta|^2
//   logistic:         sum_s log(1 + exp(-y_s x_s . beta)) + 0.5 lambda_reg |beta|^2,
//                     labels in {-1, +1}
//
// The regularizer is spread over partitions proportionally to their sample
// counts so that the partition gradients sum exactly to the full gradient.
// lambda_sc / mu are a strong-convexity / smoothness pair for the objective;
// beta_star is the exact minimizer (closed-form for quadratic/ridge, a
// deterministic full-gradient descent to gradient norm 1e-12 for logistic).
class LossModel {
 public:
  static LossModel quadratic(Eigen::MatrixXd x, Eigen::VectorXd y);
  static LossModel ridge(Eigen::MatrixXd x, Eigen::VectorXd y, double lambda_reg);
  static LossModel logistic(Eigen::MatrixXd x, Eigen::VectorXd y, double lambda_reg);

  LossKind kind() const { return kind_; }
  int samples() const { return static_cast<int>(x_.rows()); }
  int dim() const { return static_cast<int>(x_.cols()); }
  double lambda_reg() const { return lambda_reg_; }
  double lambda_sc() const { return lambda_sc_; }
  double mu() const { return mu_; }
  const Eigen::VectorXd& beta_star() const { return beta_star_; }

  double loss(const Eigen::VectorXd& beta) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& beta) const;
  Eigen::VectorXd partition_gradient(const Partition& part, const Eigen::VectorXd& beta) const;
  // Gradient of the partition objective evaluated on a row subset of the
  // partition, rescaled by count/|subset| (unbiased under uniform sampling).
  Eigen::VectorXd subset_gradient(const Partition& part, const std::vector<int>& rows,
                                  const Eigen::VectorXd& beta) const;

 private:
  LossModel() = default;
  void finalize();

  LossKind kind_ = LossKind::quadratic;
  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  double lambda_reg_ = 0.0;
  double lambda_sc_ = 0.0;
  double mu_ = 0.0;
  Eigen::VectorXd beta_star_;
};

// n contiguous near-equal partitions over the model's samples.
std::vector<Partition> partition_dataset(const LossModel& loss, int n);

// Partition gradient clipped to norm sqrt(c).
Eigen::VectorXd local_gradient(const LossModel& loss, const Partition& part,
                               const Eigen::VectorXd& beta, double c);

// Synthetic tasks with standard-normal features, a planted coefficient
// vector, and additive noise (label flips for logistic).
LossModel make_synthetic_ridge(int m, int l, double lambda_reg, double noise,
                               std::uint64_t seed);
LossModel make_synthetic_quadratic(int m, int l, double noise, std::uint64_t seed);
LossModel make_synthetic_logistic(int m, int l, double lambda_reg, std::uint64_t seed);

}  // namespace gradcode
