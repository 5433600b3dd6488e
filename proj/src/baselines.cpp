#include "gradcode/baselines.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "gradcode/rng.hpp"

namespace gradcode {

namespace {

// Contiguous near-equal blocks: the first (total mod parts) blocks take the
// extra element.
std::vector<std::pair<int, int>> contiguous_blocks(int total, int parts) {
  std::vector<std::pair<int, int>> out;
  int base = total / parts, extra = total % parts, start = 0;
  for (int b = 0; b < parts; ++b) {
    int len = base + (b < extra ? 1 : 0);
    out.emplace_back(start, len);
    start += len;
  }
  return out;
}

GradientCode finish_code(const StragglerProfile& profile, Eigen::MatrixXd a, Eigen::VectorXd w) {
  GradientCode code;
  code.w_tilde = ((1.0 - profile.p.array()) * w.array()).matrix();
  code.a = std::move(a);
  code.w = std::move(w);
  code.profile = profile;
  for (Eigen::Index i = 0; i < code.a.rows(); ++i) {
    std::vector<int> row;
    for (Eigen::Index j = 0; j < code.a.cols(); ++j) {
      if (std::abs(code.a(i, j)) > kSupportTol) row.push_back(static_cast<int>(j));
    }
    code.support.push_back(std::move(row));
  }
  return code;
}

Eigen::MatrixXd bernoulli_matrix(int k, int n, double q, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd a(k, n);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = rng.next_double() < q ? 1.0 : 0.0;
  }
  return a;
}

}  // namespace

GradientCode is_sgd_code(const StragglerProfile& profile, int n) {
  if (n < profile.k) throw std::invalid_argument("need n >= k so every worker owns a block");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(profile.k, n);
  auto blocks = contiguous_blocks(n, profile.k);
  for (int i = 0; i < profile.k; ++i) {
    for (int j = blocks[static_cast<std::size_t>(i)].first;
         j < blocks[static_cast<std::size_t>(i)].first + blocks[static_cast<std::size_t>(i)].second;
         ++j) {
      a(i, j) = 1.0;
    }
  }
  return finish_code(profile, std::move(a), Eigen::VectorXd::Ones(profile.k));
}

GradientCode bgc_code(const StragglerProfile& profile, int n, double d, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  const double q = d / profile.k;
  if (q < 1.0 / (static_cast<double>(profile.k) * n)) {
    throw std::invalid_argument("density d/k below the 1/(kn) floor");
  }
  if (q > 1.0) throw std::invalid_argument("density d/k may not exceed 1");
  return finish_code(profile, bernoulli_matrix(profile.k, n, q, seed),
                     Eigen::VectorXd::Ones(profile.k));
}

GradientCode fr_code(const StragglerProfile& profile, int n, int d) {
  if (d < 1 || d > profile.k || profile.k % d != 0) {
    throw std::invalid_argument("group size d must divide k");
  }
  const int groups = profile.k / d;
  if (n < groups) throw std::invalid_argument("need n >= k/d so every group owns a block");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(profile.k, n);
  auto blocks = contiguous_blocks(n, groups);
  for (int i = 0; i < profile.k; ++i) {
    const auto& block = blocks[static_cast<std::size_t>(i / d)];
    for (int j = block.first; j < block.first + block.second; ++j) a(i, j) = 1.0;
  }
  return finish_code(profile, std::move(a), Eigen::VectorXd::Ones(profile.k));
}

GradientCode sgc_code(const StragglerProfile& profile, int n, int d, std::uint64_t seed) {
  if (d < 1 || d > profile.k) throw std::invalid_argument("need 1 <= d <= k");
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  Rng rng(seed);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(profile.k, n);
  std::vector<int> load(static_cast<std::size_t>(profile.k), 0);
  std::vector<int> order(static_cast<std::size_t>(profile.k));
  std::vector<double> tie(static_cast<std::size_t>(profile.k));
  for (int j = 0; j < n; ++j) {
    // Hand partition j to the d least-loaded workers, random tie-break. This
    // keeps max(load) - min(load) <= 1 throughout, so per-worker batches stay
    // within one of n d / k.
    for (int i = 0; i < profile.k; ++i) tie[static_cast<std::size_t>(i)] = rng.next_double();
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) {
      if (load[static_cast<std::size_t>(x)] != load[static_cast<std::size_t>(y)]) {
        return load[static_cast<std::size_t>(x)] < load[static_cast<std::size_t>(y)];
      }
      return tie[static_cast<std::size_t>(x)] < tie[static_cast<std::size_t>(y)];
    });
    for (int t = 0; t < d; ++t) {
      const int i = order[static_cast<std::size_t>(t)];
      a(i, j) = 1.0 / (d * (1.0 - profile.p(i)));
      load[static_cast<std::size_t>(i)] += 1;
    }
  }
  return finish_code(profile, std::move(a), Eigen::VectorXd::Ones(profile.k));
}

Eigen::MatrixXd od_encoding(const StragglerProfile& profile, int n, double d, std::uint64_t seed) {
  return bgc_code(profile, n, d, seed).a;
}

Eigen::VectorXd od_decode(const Eigen::MatrixXd& a, const Eigen::VectorXi& indicators) {
  if (indicators.size() != a.rows()) {
    throw std::invalid_argument("indicator count disagrees with worker count");
  }
  const int survivors = indicators.sum();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(a.rows());
  if (survivors == 0) return w;

  Eigen::MatrixXd at_s(a.cols(), survivors);  // columns of A^T for survivor workers
  std::vector<int> ids;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (indicators(i)) {
      at_s.col(static_cast<Eigen::Index>(ids.size())) = a.row(i).transpose();
      ids.push_back(static_cast<int>(i));
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(at_s, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(1e-10);
  Eigen::VectorXd ws = svd.solve(Eigen::VectorXd::Ones(a.cols()));
  for (std::size_t t = 0; t < ids.size(); ++t) {
    w(ids[t]) = ws(static_cast<Eigen::Index>(t));
  }
  return w;
}

}  // namespace gradcode
