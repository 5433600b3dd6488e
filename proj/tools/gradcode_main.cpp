// Command-line front end: construct codes, verify structure, estimate
// residual error, run straggler training simulations, and cross-check the
// optimal row sums numerically.
//
// Exit codes: 0 success, 1 verification failure, 2 bad input, 3 solver did
// not converge.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gradcode/analysis.hpp"
#include "gradcode/io.hpp"
#include "gradcode/rng.hpp"

namespace {

using nlohmann::json;
using namespace gradcode;

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitNoConverge = 3;

struct ProfileArgs {
  std::vector<double> p;
  double psi_min = 0.1;
  double psi_max = 2.0;
  double tau = 1.1;
  std::uint64_t seed = 1;
  int k = 0;
};

void add_profile_flags(CLI::App* cmd, ProfileArgs& args) {
  cmd->add_option("--k", args.k, "number of workers");
  cmd->add_option("--p", args.p, "explicit straggler probabilities (comma separated)")
      ->delimiter(',');
  cmd->add_option("--psi-min", args.psi_min, "lower end of the worker rate range");
  cmd->add_option("--psi-max", args.psi_max, "upper end of the worker rate range");
  cmd->add_option("--tau", args.tau, "deadline as a multiple of the mean compute time");
  cmd->add_option("--seed", args.seed, "top-level seed");
}

StragglerProfile resolve_profile(const ProfileArgs& args) {
  if (!args.p.empty()) {
    Eigen::VectorXd p =
        Eigen::Map<const Eigen::VectorXd>(args.p.data(), static_cast<Eigen::Index>(args.p.size()));
    if (args.k != 0 && args.k != static_cast<int>(args.p.size())) {
      throw std::invalid_argument("--k disagrees with the number of --p entries");
    }
    return StragglerProfile::from_probabilities(p);
  }
  if (args.k < 1) throw std::invalid_argument("need --k (or explicit --p)");
  return sample_profile(args.k, args.psi_min, args.psi_max, args.tau,
                        Rng::label_seed(args.seed, "profile"));
}

Schedule parse_lr(const std::string& spec, double& gamma) {
  if (spec.rfind("const:", 0) == 0) {
    gamma = std::stod(spec.substr(6));
    return Schedule::constant;
  }
  if (spec == "inv-lambda-t") return Schedule::inverse_lambda_t;
  if (spec == "inv-sqrt-total") return Schedule::inv_sqrt_total;
  if (spec == "inv-sqrt-t") return Schedule::inv_sqrt_t;
  throw std::invalid_argument("unknown --lr spec '" + spec +
                              "' (use const:GAMMA, inv-lambda-t, inv-sqrt-total, inv-sqrt-t)");
}

MethodKind parse_method(const std::string& scheme, const std::string& baseline) {
  if (!scheme.empty() && !baseline.empty()) {
    throw std::invalid_argument("--scheme and --baseline are mutually exclusive");
  }
  if (scheme == "I") return MethodKind::scheme1;
  if (scheme == "II") return MethodKind::scheme2;
  if (scheme == "sparse") return MethodKind::sparse;
  if (scheme == "dense") return MethodKind::dense;
  if (!scheme.empty()) throw std::invalid_argument("unknown --scheme '" + scheme + "'");
  if (baseline == "gd") return MethodKind::gd;
  if (baseline == "issgd") return MethodKind::is_sgd;
  if (baseline == "bgc") return MethodKind::bgc;
  if (baseline == "ehd") return MethodKind::ehd;
  if (baseline == "od") return MethodKind::od;
  if (baseline == "sgc") return MethodKind::sgc;
  if (!baseline.empty()) throw std::invalid_argument("unknown --baseline '" + baseline + "'");
  throw std::invalid_argument("pick a construction with --scheme or --baseline");
}

MethodKind parse_method_kind(const std::string& name) {
  for (MethodKind kind :
       {MethodKind::gd, MethodKind::scheme1, MethodKind::scheme2, MethodKind::sparse,
        MethodKind::dense, MethodKind::is_sgd, MethodKind::bgc, MethodKind::ehd, MethodKind::od,
        MethodKind::sgc}) {
    if (method_name(kind) == name) return kind;
  }
  throw std::invalid_argument("unknown method '" + name + "'");
}

LossModel task_from_json(const json& task, std::uint64_t fallback_seed) {
  const std::string kind = task.value("kind", "ridge");
  const int m = task.value("m", 200);
  const int l = task.value("l", 10);
  const double lambda_reg = task.value("lambda_reg", 1.0);
  const double noise = task.value("noise", 0.5);
  const std::uint64_t seed = task.value("seed", fallback_seed);
  if (kind == "ridge") return make_synthetic_ridge(m, l, lambda_reg, noise, seed);
  if (kind == "quadratic") return make_synthetic_quadratic(m, l, noise, seed);
  if (kind == "logistic") return make_synthetic_logistic(m, l, lambda_reg, seed);
  throw std::invalid_argument("unknown task kind '" + kind + "'");
}

int cmd_construct(const ProfileArgs& pargs, const std::string& scheme,
                  const std::string& baseline, int n, const std::vector<int>& b, double d,
                  std::uint64_t wtilde_seed, const std::string& out_dir) {
  StragglerProfile profile = resolve_profile(pargs);
  if (n < 1) throw std::invalid_argument("need --n >= 1");
  MethodSpec spec;
  spec.kind = parse_method(scheme, baseline);
  if (spec.kind == MethodKind::gd) {
    throw std::invalid_argument("gd has no code to construct");
  }
  spec.d = d;
  if (!b.empty()) spec.b = b;
  spec.code_seed = Rng::label_seed(pargs.seed, "code:" + method_name(spec.kind));

  BuiltMethod method = build_method(spec, profile, n);

  // Optional non-unit split of alpha into (a, w) for the proposed schemes.
  const bool proposed = spec.kind == MethodKind::scheme1 || spec.kind == MethodKind::scheme2 ||
                        spec.kind == MethodKind::sparse || spec.kind == MethodKind::dense;
  if (proposed && wtilde_seed != 0) {
    Rng rng(wtilde_seed);
    Eigen::VectorXd w_tilde(profile.k);
    for (int i = 0; i < profile.k; ++i) w_tilde(i) = rng.uniform(0.5, 2.0);
    method.code = extract_code(*method.alpha, profile, w_tilde);
  }

  const std::filesystem::path dir(out_dir.empty() ? "." : out_dir);
  const std::string name = method.name;
  write_file_atomic(dir / ("code_" + name + ".json"),
                    code_to_json(*method.code, *method.alpha).dump(2) + "\n");

  std::printf("method=%s k=%d n=%d load=%.6f\n", name.c_str(), profile.k, n, method.load);
  if (proposed) {
    RowTargets targets = row_targets(profile, n);
    StructureReport rep = verify_optimal_structure(*method.alpha, targets);
    std::printf("column_dev=%.3e row_dev=%.3e tol=%.1e %s\n", rep.max_column_deviation,
                rep.max_row_deviation, rep.tol, rep.pass ? "PASS" : "FAIL");
    if (!rep.pass) return kExitVerifyFail;
  }
  return kExitOk;
}

int cmd_verify(const std::string& code_file, double tol) {
  json j = json::parse(read_file(code_file));
  GradientCode code = code_from_json(j);
  AlphaMatrix alpha = alpha_from_json(j);
  RowTargets targets = row_targets(code.profile, alpha.n());
  StructureReport rep = verify_optimal_structure(alpha, targets, tol);
  Eigen::VectorXd resid = unbiasedness_residuals(code);
  const double max_resid = resid.cwiseAbs().maxCoeff();
  std::printf("column_dev=%.3e row_dev=%.3e unbiasedness_resid=%.3e tol=%.1e %s\n",
              rep.max_column_deviation, rep.max_row_deviation, max_resid, rep.tol,
              rep.pass && max_resid <= tol ? "PASS" : "FAIL");
  return rep.pass && max_resid <= tol ? kExitOk : kExitVerifyFail;
}

int cmd_residual(const std::string& code_file, const std::string& gradients_file,
                 const json& task, std::int64_t trials, std::uint64_t seed,
                 const std::string& out_dir) {
  json j = json::parse(read_file(code_file));
  GradientCode code = code_from_json(j);
  const int n = static_cast<int>(code.a.cols());

  Eigen::MatrixXd gradients;
  if (!gradients_file.empty()) {
    json g = json::parse(read_file(gradients_file));
    const auto rows = g.at("gradients").get<std::vector<std::vector<double>>>();
    if (static_cast<int>(rows.size()) != n) {
      throw std::invalid_argument("gradient file needs one row per partition");
    }
    gradients.resize(n, static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows[0].size()) throw std::invalid_argument("ragged gradients");
      for (std::size_t c = 0; c < rows[r].size(); ++c) {
        gradients(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
      }
    }
  } else {
    LossModel loss = task_from_json(task, Rng::label_seed(seed, "task"));
    auto parts = partition_dataset(loss, n);
    gradients.resize(n, loss.dim());
    const Eigen::VectorXd beta0 = Eigen::VectorXd::Zero(loss.dim());
    for (int p = 0; p < n; ++p) {
      gradients.row(p) = loss.partition_gradient(parts[static_cast<std::size_t>(p)], beta0);
    }
  }

  MonteCarloReport rep = monte_carlo(code, gradients, trials, Rng::label_seed(seed, "mc"));
  const double rel = std::isnan(rep.analytic_resid)
                         ? std::numeric_limits<double>::quiet_NaN()
                         : std::abs(rep.empirical_resid - rep.analytic_resid) /
                               std::max(rep.analytic_resid, 1e-300);
  char line[512];
  std::snprintf(line, sizeof line,
                "trials,empirical_resid,analytic_resid,rel_err,max_mean_abs_err,"
                "max_ci_halfwidth,mean_within_ci\n%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                static_cast<long long>(rep.trials), rep.empirical_resid, rep.analytic_resid, rel,
                rep.empirical_mean_error.cwiseAbs().maxCoeff(), rep.ci_halfwidth.maxCoeff(),
                rep.mean_within_ci ? 1 : 0);
  if (!out_dir.empty()) {
    write_file_atomic(std::filesystem::path(out_dir) / "residual.csv", line);
  }
  std::fputs(line, stdout);
  return rep.mean_within_ci ? kExitOk : kExitVerifyFail;
}

int cmd_solve_p3(const ProfileArgs& pargs, int n, long max_iters, double tol,
                 const std::string& out_dir) {
  StragglerProfile profile = resolve_profile(pargs);
  P3Result res = p3_numeric_solve(profile, n, max_iters, tol);
  const double gap = optimality_gap(res.alpha, profile);
  std::printf("objective=%.12g gap=%.3e iterations=%ld converged=%d\n", res.objective, gap,
              res.iterations, res.converged ? 1 : 0);
  if (!out_dir.empty()) {
    json j;
    j["k"] = res.alpha.k();
    j["n"] = res.alpha.n();
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(res.alpha.k()));
    for (int i = 0; i < res.alpha.k(); ++i) {
      rows[static_cast<std::size_t>(i)].assign(res.alpha.entries.row(i).begin(),
                                               res.alpha.entries.row(i).end());
    }
    j["alpha"] = rows;
    j["objective"] = res.objective;
    j["converged"] = res.converged;
    j["profile"] = profile_to_json(profile);
    write_file_atomic(std::filesystem::path(out_dir) / "p3_solution.json", j.dump(2) + "\n");
  }
  return res.converged ? kExitOk : kExitNoConverge;
}

int cmd_train(const std::string& config_file, std::optional<int> T_override,
              std::optional<int> runs_override, std::optional<std::uint64_t> seed_override,
              const std::string& lr_override, std::optional<double> lambda2_override,
              const std::string& out_override) {
  json cfg = json::parse(read_file(config_file));

  const std::uint64_t seed = seed_override.value_or(cfg.value("seed", 1ULL));
  const int n = cfg.value("n", 20);
  const int T = T_override.value_or(cfg.value("T", 100));
  const int runs = runs_override.value_or(cfg.value("runs", 10));
  const std::string out_dir = !out_override.empty() ? out_override : cfg.value("out", "out");

  StragglerProfile profile;
  if (cfg.contains("profile") && cfg.at("profile").contains("p")) {
    profile = profile_from_json(cfg.at("profile"));
  } else {
    const json pj = cfg.value("profile", json::object());
    profile = sample_profile(pj.value("k", 10), pj.value("psi_min", 0.1), pj.value("psi_max", 2.0),
                             pj.value("tau_th", 1.1), Rng::label_seed(seed, "profile"));
  }

  LossModel loss = task_from_json(cfg.value("task", json::object()), Rng::label_seed(seed, "task"));

  std::string lr_spec = !lr_override.empty() ? lr_override : cfg.value("lr", "inv-lambda-t");
  double gamma = 0.01;
  Schedule schedule = parse_lr(lr_spec, gamma);

  std::optional<AdamOptions> adam;
  if (cfg.contains("optimizer") && cfg.at("optimizer").value("kind", "gd") == "adam") {
    AdamOptions opt;
    const json& oj = cfg.at("optimizer");
    opt.lambda2 = oj.value("lambda2", 1.0);
    opt.beta1 = oj.value("beta1", 0.9);
    opt.beta2 = oj.value("beta2", 0.999);
    opt.eps = oj.value("eps", 1e-8);
    adam = opt;
  }
  if (lambda2_override) {
    if (!adam) adam = AdamOptions{};
    adam->lambda2 = *lambda2_override;
  }

  std::vector<json> methods;
  if (cfg.contains("methods")) {
    for (const json& mj : cfg.at("methods")) methods.push_back(mj);
  } else {
    methods.push_back(json{{"kind", "scheme2"}});
  }

  RowTargets targets = row_targets(profile, n);
  std::vector<MethodSummary> summary;
  for (const json& mj : methods) {
    TrainConfig tc(loss);
    tc.n = n;
    tc.profile = profile;
    tc.method.kind = parse_method_kind(mj.value("kind", "scheme2"));
    tc.method.d = mj.value("d", 2.0);
    if (mj.contains("b")) tc.method.b = mj.at("b").get<std::vector<int>>();
    tc.method.code_seed = Rng::label_seed(seed, "code:" + method_name(tc.method.kind));
    tc.schedule = schedule;
    tc.gamma = gamma;
    tc.iterations = T;
    tc.runs = runs;
    tc.seed = Rng::label_seed(seed, "train:" + method_name(tc.method.kind));
    if (cfg.contains("C")) tc.clip_c = cfg.at("C").get<double>();
    tc.adam = adam;
    if (cfg.contains("minibatch_fraction")) {
      tc.minibatch_fraction = cfg.at("minibatch_fraction").get<double>();
    }

    std::vector<TrainTrace> traces = train(tc);
    BuiltMethod built = build_method(tc.method, profile, n);
    summary.push_back(summarize_method(built, traces, targets));
    write_file_atomic(std::filesystem::path(out_dir) / ("trace_" + built.name + ".csv"),
                      traces_to_csv(traces));
    std::printf("method=%s mean_final_loss=%.8g mean_resid=%.8g\n", built.name.c_str(),
                summary.back().mean_final_loss, summary.back().mean_resid);
  }
  write_file_atomic(std::filesystem::path(out_dir) / "comparison.csv", comparison_csv(summary));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"optimally structured gradient codes for heterogeneous stragglers"};
  app.require_subcommand(1);

  ProfileArgs pargs;
  std::string scheme, baseline, out_dir;
  int n = 0;
  std::vector<int> b;
  double d = 2.0;
  std::uint64_t wtilde_seed = 0;

  CLI::App* construct = app.add_subcommand("construct", "build a code and write it as JSON");
  add_profile_flags(construct, pargs);
  construct->add_option("--n", n, "number of data partitions");
  construct->add_option("--scheme", scheme, "I, II, sparse, or dense");
  construct->add_option("--baseline", baseline, "issgd, bgc, ehd, od, or sgc");
  construct->add_option("--b", b, "explicit batch sizes")->delimiter(',');
  construct->add_option("--d", d, "baseline density / replication factor");
  construct->add_option("--w-tilde-seed", wtilde_seed,
                        "nonzero: split alpha with seeded uniform [0.5,2] row scales");
  construct->add_option("--out", out_dir, "output directory");

  std::string code_file;
  double verify_tol = kStructureTol;
  CLI::App* verify = app.add_subcommand("verify", "check structure and unbiasedness of a code file");
  verify->add_option("--code", code_file, "code JSON file")->required();
  verify->add_option("--tol", verify_tol, "structural tolerance");

  std::string gradients_file;
  std::int64_t trials = 100000;
  json task = json::object();
  std::string task_kind;
  int task_m = 200, task_l = 10;
  double task_lambda = 1.0, task_noise = 0.5;
  CLI::App* residual = app.add_subcommand("residual", "Monte Carlo residual error of a code file");
  residual->add_option("--code", code_file, "code JSON file")->required();
  residual->add_option("--gradients", gradients_file, "JSON file with fixed partition gradients");
  residual->add_option("--task", task_kind, "synthetic task kind (quadratic, ridge, logistic)");
  residual->add_option("--m", task_m, "task sample count");
  residual->add_option("--l", task_l, "task dimension");
  residual->add_option("--lambda-reg", task_lambda, "task regularization");
  residual->add_option("--noise", task_noise, "task label noise");
  residual->add_option("--trials", trials, "Monte Carlo trials");
  residual->add_option("--seed", pargs.seed, "top-level seed");
  residual->add_option("--out", out_dir, "output directory");

  long p3_iters = 200000;
  double p3_tol = 1e-12;
  CLI::App* solvep3 = app.add_subcommand("solve-p3", "numeric minimizer of the weighted row-sum objective");
  add_profile_flags(solvep3, pargs);
  solvep3->add_option("--n", n, "number of data partitions");
  solvep3->add_option("--max-iters", p3_iters, "iteration cap");
  solvep3->add_option("--tol", p3_tol, "objective decrease stop threshold");
  solvep3->add_option("--out", out_dir, "output directory");

  std::string config_file, lr_override;
  std::optional<int> T_override, runs_override;
  std::optional<std::uint64_t> seed_override;
  std::optional<double> lambda2_override;
  CLI::App* train_cmd = app.add_subcommand("train", "run the straggler training simulation");
  train_cmd->add_option("--config", config_file, "JSON config file")->required();
  train_cmd->add_option("--T", [&](auto& vals) { T_override = std::stoi(vals[0]); return true; },
                        "iteration override")->expected(1);
  train_cmd->add_option("--runs", [&](auto& vals) { runs_override = std::stoi(vals[0]); return true; },
                        "run count override")->expected(1);
  train_cmd->add_option("--seed", [&](auto& vals) { seed_override = std::stoull(vals[0]); return true; },
                        "seed override")->expected(1);
  train_cmd->add_option("--lr", lr_override, "schedule override");
  train_cmd->add_option("--lambda2", [&](auto& vals) { lambda2_override = std::stod(vals[0]); return true; },
                        "two-track penalty override")->expected(1);
  train_cmd->add_option("--out", out_dir, "output directory override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Fold CLI11's parse-error codes into the documented "bad input" code,
    // but keep --help exiting 0.
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadInput;
  }

  try {
    if (construct->parsed()) {
      return cmd_construct(pargs, scheme, baseline, n, b, d, wtilde_seed, out_dir);
    }
    if (verify->parsed()) return cmd_verify(code_file, verify_tol);
    if (residual->parsed()) {
      if (!task_kind.empty()) {
        task = json{{"kind", task_kind}, {"m", task_m},     {"l", task_l},
                    {"lambda_reg", task_lambda}, {"noise", task_noise}};
      }
      return cmd_residual(code_file, gradients_file, task, trials, pargs.seed, out_dir);
    }
    if (solvep3->parsed()) return cmd_solve_p3(pargs, n, p3_iters, p3_tol, out_dir);
    if (train_cmd->parsed()) {
      return cmd_train(config_file, T_override, runs_override, seed_override, lr_override,
                       lambda2_override, out_dir);
    }
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  }
  return kExitBadInput;
}
