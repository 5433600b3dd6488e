#include "gradcode/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <stdexcept>

#include "gradcode/rng.hpp"

namespace gradcode {

namespace {

void append_float(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

// Partial Fisher-Yates: the first `take` entries of a shuffled 0..count-1,
// offset by `begin`.
std::vector<int> sample_rows(Rng& rng, int begin, int count, int take) {
  std::vector<int> pool(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) pool[static_cast<std::size_t>(i)] = begin + i;
  for (int i = 0; i < take; ++i) {
    const int j = i + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(count - i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(take));
  return pool;
}

}  // namespace

std::string method_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::gd: return "gd";
    case MethodKind::scheme1: return "scheme1";
    case MethodKind::scheme2: return "scheme2";
    case MethodKind::sparse: return "sparse";
    case MethodKind::dense: return "dense";
    case MethodKind::is_sgd: return "issgd";
    case MethodKind::bgc: return "bgc";
    case MethodKind::ehd: return "ehd";
    case MethodKind::od: return "od";
    case MethodKind::sgc: return "sgc";
  }
  throw std::logic_error("unknown method kind");
}

BuiltMethod build_method(const MethodSpec& spec, const StragglerProfile& profile, int n) {
  BuiltMethod out;
  out.kind = spec.kind;
  out.name = method_name(spec.kind);

  auto from_alpha = [&](AlphaMatrix alpha) {
    out.code = extract_code(alpha, profile, Eigen::VectorXd::Ones(profile.k));
    out.load = computation_load(alpha);
    out.alpha = std::move(alpha);
  };

  switch (spec.kind) {
    case MethodKind::gd:
      out.load = 1.0;
      return out;
    case MethodKind::scheme1:
    case MethodKind::scheme2: {
      RowTargets targets = row_targets(profile, n);
      std::vector<int> b = spec.b ? *spec.b : default_batch_sizes(targets, profile.k, n);
      if (spec.kind == MethodKind::scheme1) {
        from_alpha(scheme1_alpha(scheme1_allocate(b, n, profile.k), targets));
      } else {
        from_alpha(scheme2_alpha(scheme2_allocate(b, n, profile.k), targets));
      }
      return out;
    }
    case MethodKind::sparse: {
      RowTargets targets = row_targets(profile, n);
      from_alpha(sparse_construct(targets, partition_row_targets(targets)));
      return out;
    }
    case MethodKind::dense:
      from_alpha(minibatch_dense_alpha(profile, n));
      return out;
    case MethodKind::is_sgd:
      out.code = is_sgd_code(profile, n);
      break;
    case MethodKind::bgc:
      out.code = bgc_code(profile, n, spec.d, spec.code_seed);
      break;
    case MethodKind::ehd:
      out.code = fr_code(profile, n, static_cast<int>(spec.d));
      break;
    case MethodKind::od:
      out.code = bgc_code(profile, n, spec.d, spec.code_seed);  // same sampler; w ignored
      break;
    case MethodKind::sgc:
      out.code = sgc_code(profile, n, static_cast<int>(spec.d), spec.code_seed);
      break;
  }
  AlphaMatrix eff = AlphaMatrix::with_support(
      (out.code->a.array().colwise() * out.code->w_tilde.array()).matrix(), out.code->support);
  out.load = computation_load(eff);
  out.alpha = std::move(eff);
  return out;
}

std::vector<TrainTrace> train(const TrainConfig& config) {
  const LossModel& loss = config.loss;
  const int n = config.n;
  const int k = config.profile.k;
  const int l = loss.dim();
  if (config.iterations < 1 || config.runs < 1) {
    throw std::invalid_argument("iterations and runs must be positive");
  }
  if ((config.schedule == Schedule::inverse_lambda_t) && !(loss.lambda_sc() > 0.0)) {
    throw std::invalid_argument("1/(lambda t) schedule needs a strongly convex objective");
  }
  if (config.minibatch_fraction &&
      !(*config.minibatch_fraction > 0.0 && *config.minibatch_fraction <= 1.0)) {
    throw std::invalid_argument("minibatch fraction must lie in (0, 1]");
  }

  const std::vector<Partition> parts = partition_dataset(loss, n);
  const Eigen::VectorXd beta0 =
      config.beta0 ? *config.beta0 : Eigen::VectorXd::Zero(l);
  if (beta0.size() != l) throw std::invalid_argument("beta0 has wrong dimension");

  BuiltMethod method = build_method(config.method, config.profile, n);
  if (method.code && !is_unbiased(*method.code) && method.kind != MethodKind::od) {
    const bool proposed = config.method.kind == MethodKind::scheme1 ||
                          config.method.kind == MethodKind::scheme2 ||
                          config.method.kind == MethodKind::sparse ||
                          config.method.kind == MethodKind::dense;
    if (proposed) throw std::invalid_argument("constructed code failed the unbiasedness check");
    std::cerr << "warning: method " << method.name << " is biased (max residual "
              << unbiasedness_residuals(*method.code).cwiseAbs().maxCoeff() << ")\n";
  }

  // Clip level: fixed per task from the initial partition gradients.
  double c = 0.0;
  if (config.clip_c) {
    c = *config.clip_c;
    if (!(c > 0.0)) throw std::invalid_argument("clip level C must be positive");
  } else {
    for (const Partition& part : parts) {
      c = std::max(c, loss.partition_gradient(part, beta0).squaredNorm());
    }
    c *= 4.0;
    if (!(c > 0.0)) c = 1.0;  // beta0 already optimal; any positive level works
  }

  std::optional<Eigen::VectorXd> v_track;
  if (config.adam && method.code) {
    v_track = two_track_decoder(*method.code, config.adam->lambda2);
  }

  const bool has_opt = true;  // all supported losses expose beta_star
  std::vector<TrainTrace> traces;
  traces.reserve(static_cast<std::size_t>(config.runs));

  for (int r = 0; r < config.runs; ++r) {
    Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(r));
    Eigen::VectorXd beta = beta0;
    AdamState adam_state;
    if (config.adam) {
      adam_state.m = Eigen::VectorXd::Zero(l);
      adam_state.s = Eigen::VectorXd::Zero(l);
    }

    TrainTrace trace;
    trace.c_used = c;
    const int T = config.iterations;
    trace.loss.reserve(static_cast<std::size_t>(T));
    double sigma2_sum = 0.0;
    long sigma2_count = 0;

    for (int t = 0; t < T; ++t) {
      double gamma = 0.0;
      switch (config.schedule) {
        case Schedule::constant: gamma = config.gamma; break;
        case Schedule::inverse_lambda_t: gamma = 1.0 / (loss.lambda_sc() * (t + 1)); break;
        case Schedule::inv_sqrt_total: gamma = 1.0 / std::sqrt(static_cast<double>(T) + 1.0); break;
        case Schedule::inv_sqrt_t: gamma = 1.0 / std::sqrt(static_cast<double>(t) + 1.0); break;
      }

      const Eigen::VectorXi indicators = sample_indicators(config.profile, rng);

      Eigen::MatrixXd gradients(n, l);
      for (int j = 0; j < n; ++j) {
        gradients.row(j) = local_gradient(loss, parts[static_cast<std::size_t>(j)], beta, c);
      }
      if (config.minibatch_fraction) {
        for (int j = 0; j < n; ++j) {
          const Partition& part = parts[static_cast<std::size_t>(j)];
          const int take = std::max(
              1, static_cast<int>(std::ceil(*config.minibatch_fraction * part.count)));
          const std::vector<int> rows = sample_rows(rng, part.begin, part.count, take);
          Eigen::VectorXd sampled = loss.subset_gradient(part, rows, beta);
          const double norm_sq = sampled.squaredNorm();
          if (norm_sq > c) sampled *= std::sqrt(c / norm_sq);
          sigma2_sum += (sampled - gradients.row(j).transpose()).squaredNorm();
          sigma2_count += 1;
          gradients.row(j) = sampled;
        }
      }
      const Eigen::VectorXd g_true = gradients.colwise().sum().transpose();

      Eigen::VectorXd ghat;
      Eigen::VectorXd ghat_second;
      if (method.kind == MethodKind::gd) {
        ghat = g_true;
        if (config.adam) ghat_second = g_true;
      } else if (method.kind == MethodKind::od) {
        const Eigen::MatrixXd messages = worker_messages(method.code->a, gradients);
        const Eigen::VectorXd w_t = od_decode(method.code->a, indicators);
        ghat = decode_messages(messages, w_t, indicators);
        if (config.adam) ghat_second = ghat;
      } else {
        ghat = estimate(*method.code, indicators, gradients);
        if (config.adam) {
          ghat_second = v_track ? decode_messages(worker_messages(method.code->a, gradients),
                                                  *v_track, indicators)
                                : ghat;
        }
      }

      const int responded = indicators.sum();
      if (responded == 0) trace.all_straggler_events += 1;

      trace.loss.push_back(loss.loss(beta));
      trace.dist_sq_opt.push_back(has_opt ? (beta - loss.beta_star()).squaredNorm() : 0.0);
      trace.resid_sq.push_back((g_true - ghat).squaredNorm());
      trace.gamma.push_back(gamma);
      trace.g_norm_sq.push_back(g_true.squaredNorm());
      trace.n_stragglers.push_back(k - responded);
      if (config.record_indicators) {
        std::vector<int> stragglers;
        for (int i = 0; i < k; ++i) {
          if (!indicators(i)) stragglers.push_back(i);
        }
        trace.straggler_sets.push_back(std::move(stragglers));
      }

      if (config.adam) {
        adam_two_track_step(adam_state, beta, ghat, ghat_second, gamma, *config.adam);
      } else {
        beta -= gamma * ghat;
      }
    }

    trace.final_beta = beta;
    trace.final_loss = loss.loss(beta);
    trace.final_dist_sq = has_opt ? (beta - loss.beta_star()).squaredNorm() : 0.0;
    trace.sigma2_hat = sigma2_count > 0 ? sigma2_sum / static_cast<double>(sigma2_count) : 0.0;
    traces.push_back(std::move(trace));
  }
  return traces;
}

Eigen::VectorXd two_track_decoder(const GradientCode& code, double lambda2) {
  if (!(lambda2 >= 0.0)) throw std::invalid_argument("lambda2 must be nonnegative");
  const int k = code.profile.k;
  const int n = static_cast<int>(code.a.cols());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(k);
  if (lambda2 == 0.0) return v;  // degenerate objective, all weight on the variance term
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += delta_inverse(code.profile.p(i));
  for (int i = 0; i < k; ++i) {
    const double r = code.a.row(i).sum();
    if (std::abs(r) <= kSupportTol) {
      throw std::invalid_argument("two-track decoder needs nonzero encoding row sums");
    }
    v(i) = n * lambda2 / (code.profile.p(i) * r * (1.0 + lambda2 * s));
  }
  return v;
}

double two_track_objective(const GradientCode& code, double lambda2, const Eigen::VectorXd& v) {
  const int n = static_cast<int>(code.a.cols());
  double bias = static_cast<double>(n);
  double variance = 0.0;
  for (int i = 0; i < code.profile.k; ++i) {
    const double r = code.a.row(i).sum();
    const double pi = code.profile.p(i);
    bias -= (1.0 - pi) * r * v(i);
    variance += pi * (1.0 - pi) * r * r * v(i) * v(i);
  }
  return lambda2 * bias * bias + variance;
}

void adam_two_track_step(AdamState& state, Eigen::VectorXd& beta,
                         const Eigen::VectorXd& g_first, const Eigen::VectorXd& g_second,
                         double gamma, const AdamOptions& opt) {
  if (state.m.size() == 0) state.m = Eigen::VectorXd::Zero(g_first.size());
  if (state.s.size() == 0) state.s = Eigen::VectorXd::Zero(g_second.size());
  state.t += 1;
  state.m = opt.beta1 * state.m + (1.0 - opt.beta1) * g_first;
  state.s = opt.beta2 * state.s + (1.0 - opt.beta2) * g_second.array().square().matrix();
  const double bc1 = 1.0 - std::pow(opt.beta1, state.t);
  const double bc2 = 1.0 - std::pow(opt.beta2, state.t);
  const Eigen::ArrayXd m_hat = state.m.array() / bc1;
  const Eigen::ArrayXd s_hat = state.s.array() / bc2;
  beta.array() -= gamma * m_hat / (s_hat.sqrt() + opt.eps);
}

AlphaMatrix minibatch_dense_alpha(const StragglerProfile& profile, int n) {
  if (n < 1) throw std::invalid_argument("n must be at least 1");
  double s = 0.0;
  for (int i = 0; i < profile.k; ++i) s += delta_inverse(profile.p(i));
  Eigen::MatrixXd entries(profile.k, n);
  std::vector<std::vector<int>> support(static_cast<std::size_t>(profile.k));
  for (int i = 0; i < profile.k; ++i) {
    const double value = delta_inverse(profile.p(i)) / s;
    for (int j = 0; j < n; ++j) {
      entries(i, j) = value;
      support[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  return AlphaMatrix::with_support(std::move(entries), std::move(support));
}

double minibatch_residual_bound(const RowTargets& targets, double c, double sigma_sq) {
  if (!(c >= 0.0) || !(sigma_sq >= 0.0)) {
    throw std::invalid_argument("C and sigma^2 must be nonnegative");
  }
  const double n = static_cast<double>(targets.n);
  return n * n * c / targets.s + n * sigma_sq * (1.0 + n / targets.s);
}

std::string traces_to_csv(const std::vector<TrainTrace>& traces) {
  std::string out = "run,t,loss,dist_sq_opt,resid_sq,gamma,n_stragglers\n";
  for (std::size_t r = 0; r < traces.size(); ++r) {
    const TrainTrace& trace = traces[r];
    for (std::size_t t = 0; t < trace.loss.size(); ++t) {
      out += std::to_string(r);
      out += ',';
      out += std::to_string(t);
      out += ',';
      append_float(out, trace.loss[t]);
      out += ',';
      append_float(out, trace.dist_sq_opt[t]);
      out += ',';
      append_float(out, trace.resid_sq[t]);
      out += ',';
      append_float(out, trace.gamma[t]);
      out += ',';
      out += std::to_string(trace.n_stragglers[t]);
      out += '\n';
    }
  }
  return out;
}

}  // namespace gradcode
