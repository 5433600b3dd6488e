#include "gradcode/codebook.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace gradcode {

namespace {

std::vector<std::vector<int>> threshold_support(const Eigen::MatrixXd& entries) {
  std::vector<std::vector<int>> support(static_cast<std::size_t>(entries.rows()));
  for (Eigen::Index i = 0; i < entries.rows(); ++i) {
    for (Eigen::Index j = 0; j < entries.cols(); ++j) {
      if (std::abs(entries(i, j)) > kSupportTol) {
        support[static_cast<std::size_t>(i)].push_back(static_cast<int>(j));
      }
    }
  }
  return support;
}

void check_support_shape(const Eigen::MatrixXd& entries,
                         const std::vector<std::vector<int>>& support) {
  if (support.size() != static_cast<std::size_t>(entries.rows())) {
    throw std::invalid_argument("support must have one column list per row");
  }
  for (const auto& row : support) {
    int prev = -1;
    for (int j : row) {
      if (j <= prev || j >= entries.cols()) {
        throw std::invalid_argument("support columns must be ascending and in range");
      }
      prev = j;
    }
  }
}

std::vector<double> to_vec(const Eigen::VectorXd& v) {
  return std::vector<double>(v.begin(), v.end());
}

std::vector<std::vector<double>> to_rows(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows[static_cast<std::size_t>(i)].assign(m.row(i).begin(), m.row(i).end());
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, const char* field) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw std::invalid_argument(std::string(field) + ": empty matrix");
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) {
      throw std::invalid_argument(std::string(field) + ": ragged matrix");
    }
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
  }
  return m;
}

}  // namespace

RowTargets row_targets(const StragglerProfile& profile, int n) {
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  RowTargets out;
  out.n = n;
  out.y.resize(profile.k);
  double s = 0.0;
  for (int i = 0; i < profile.k; ++i) s += delta_inverse(profile.p(i));
  for (int i = 0; i < profile.k; ++i) out.y(i) = delta_inverse(profile.p(i)) * n / s;
  out.s = s;
  return out;
}

AlphaMatrix AlphaMatrix::from_dense(Eigen::MatrixXd entries) {
  AlphaMatrix out;
  out.support = threshold_support(entries);
  out.entries = std::move(entries);
  return out;
}

AlphaMatrix AlphaMatrix::with_support(Eigen::MatrixXd entries,
                                      std::vector<std::vector<int>> support) {
  check_support_shape(entries, support);
  AlphaMatrix out;
  out.entries = std::move(entries);
  out.support = std::move(support);
  return out;
}

StructureReport verify_optimal_structure(const AlphaMatrix& alpha, const RowTargets& targets,
                                         double tol) {
  if (alpha.k() != targets.y.size() || alpha.n() != targets.n) {
    throw std::invalid_argument("alpha shape disagrees with row targets");
  }
  StructureReport rep;
  rep.tol = tol;
  for (int j = 0; j < alpha.n(); ++j) {
    rep.max_column_deviation =
        std::max(rep.max_column_deviation, std::abs(alpha.entries.col(j).sum() - 1.0));
  }
  for (int i = 0; i < alpha.k(); ++i) {
    rep.max_row_deviation =
        std::max(rep.max_row_deviation, std::abs(alpha.entries.row(i).sum() - targets.y(i)));
  }
  rep.pass = rep.max_column_deviation <= tol && rep.max_row_deviation <= tol;
  return rep;
}

GradientCode extract_code(const AlphaMatrix& alpha, const StragglerProfile& profile,
                          const Eigen::VectorXd& w_tilde) {
  if (alpha.k() != profile.k) throw std::invalid_argument("alpha rows disagree with profile");
  if (w_tilde.size() != profile.k) throw std::invalid_argument("w_tilde needs one entry per worker");
  for (int i = 0; i < profile.k; ++i) {
    if (w_tilde(i) == 0.0 || !std::isfinite(w_tilde(i))) {
      throw std::invalid_argument("w_tilde entries must be finite and nonzero");
    }
  }
  GradientCode code;
  code.a = alpha.entries.array().colwise() / w_tilde.array();
  code.w = (w_tilde.array() / (1.0 - profile.p.array())).matrix();
  code.w_tilde = w_tilde;
  code.profile = profile;
  code.support = alpha.support;
  return code;
}

Eigen::MatrixXd worker_messages(const Eigen::MatrixXd& a, const Eigen::MatrixXd& gradients) {
  if (a.cols() != gradients.rows()) {
    throw std::invalid_argument("encoding width disagrees with gradient count");
  }
  return a * gradients;
}

Eigen::VectorXd decode_messages(const Eigen::MatrixXd& messages, const Eigen::VectorXd& w,
                                const Eigen::VectorXi& indicators) {
  if (messages.rows() != w.size() || w.size() != indicators.size()) {
    throw std::invalid_argument("messages, weights and indicators disagree on worker count");
  }
  Eigen::VectorXd out = Eigen::VectorXd::Zero(messages.cols());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (indicators(i)) out += w(i) * messages.row(i).transpose();
  }
  return out;
}

Eigen::VectorXd estimate(const GradientCode& code, const Eigen::VectorXi& indicators,
                         const Eigen::MatrixXd& gradients) {
  return decode_messages(worker_messages(code.a, gradients), code.w, indicators);
}

Eigen::VectorXd unbiasedness_residuals(const GradientCode& code) {
  Eigen::VectorXd effective = ((1.0 - code.profile.p.array()) * code.w.array()).matrix();
  return (code.a.transpose() * effective).array() - 1.0;
}

bool is_unbiased(const GradientCode& code, double tol) {
  return unbiasedness_residuals(code).cwiseAbs().maxCoeff() <= tol;
}

double analytic_residual_error(const GradientCode& code, const Eigen::MatrixXd& gradients,
                               double tol) {
  if (!is_unbiased(code, tol)) {
    throw std::invalid_argument("analytic residual error is only defined for unbiased codes");
  }
  Eigen::MatrixXd messages = worker_messages(code.a, gradients);
  double out = 0.0;
  for (int i = 0; i < code.profile.k; ++i) {
    double pi = code.profile.p(i);
    out += pi * (1.0 - pi) * code.w(i) * code.w(i) * messages.row(i).squaredNorm();
  }
  return out;
}

double lemma1_bound(const GradientCode& code, double c, double tol) {
  if (!(c >= 0.0)) throw std::invalid_argument("gradient norm bound C must be nonnegative");
  if (!is_unbiased(code, tol)) {
    throw std::invalid_argument("bound is only defined for unbiased codes");
  }
  double out = 0.0;
  for (int i = 0; i < code.profile.k; ++i) {
    double pi = code.profile.p(i);
    double rs = code.a.row(i).sum();
    out += pi * (1.0 - pi) * code.w(i) * code.w(i) * rs * rs;
  }
  return c * out;
}

ResidualBounds lemma2_bounds(const RowTargets& targets, double c) {
  if (!(c >= 0.0)) throw std::invalid_argument("gradient norm bound C must be nonnegative");
  ResidualBounds out;
  double n2c = static_cast<double>(targets.n) * targets.n * c;
  out.residual_bound = n2c / targets.s;
  out.norm_bound = n2c * (1.0 + 1.0 / targets.s);
  return out;
}

nlohmann::json code_to_json(const GradientCode& code, const AlphaMatrix& alpha) {
  nlohmann::json j;
  j["k"] = code.profile.k;
  j["n"] = static_cast<int>(code.a.cols());
  j["alpha"] = to_rows(alpha.entries);
  j["w_tilde"] = to_vec(code.w_tilde);
  j["A"] = to_rows(code.a);
  j["w"] = to_vec(code.w);
  j["profile"] = profile_to_json(code.profile);
  return j;
}

GradientCode code_from_json(const nlohmann::json& j) {
  for (const char* field : {"k", "n", "A", "w", "w_tilde", "profile"}) {
    if (!j.contains(field)) {
      throw std::invalid_argument(std::string("code JSON missing field '") + field + "'");
    }
  }
  GradientCode code;
  code.profile = profile_from_json(j.at("profile"));
  code.a = matrix_from_json(j.at("A"), "A");
  const auto w = j.at("w").get<std::vector<double>>();
  const auto wt = j.at("w_tilde").get<std::vector<double>>();
  if (code.a.rows() != j.at("k").get<int>() || code.a.cols() != j.at("n").get<int>() ||
      static_cast<int>(w.size()) != code.profile.k ||
      static_cast<int>(wt.size()) != code.profile.k || code.a.rows() != code.profile.k) {
    throw std::invalid_argument("code JSON: inconsistent shapes");
  }
  code.w = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  code.w_tilde = Eigen::Map<const Eigen::VectorXd>(wt.data(), static_cast<Eigen::Index>(wt.size()));
  code.support = threshold_support(code.a);
  return code;
}

AlphaMatrix alpha_from_json(const nlohmann::json& j) {
  if (!j.contains("alpha")) throw std::invalid_argument("JSON missing field 'alpha'");
  return AlphaMatrix::from_dense(matrix_from_json(j.at("alpha"), "alpha"));
}

}  // namespace gradcode
