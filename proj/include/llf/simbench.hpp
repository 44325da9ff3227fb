#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iterator>
#include <limits>
#include <string>
#include <vector>

#include "llf/causal.hpp"
#include "llf/dataset.hpp"
#include "llf/errors.hpp"
#include "llf/model.hpp"
#include "llf/rng.hpp"

namespace llf {

// ============================================================================
// Simulation designs
// ============================================================================

enum class SimDesign {
  kBoundary,    // smooth saturating signal in x1, strong noise
  kFriedman,    // interaction + quadratic + linear terms, d >= 5
  kLinearRamp,  // cubic plus growing stack of linear signals
  kStep,        // two logistic bumps, favorable for plain forests
  kCausal1,     // randomized treatment, tau = sharp logistic product
  kCausal2,     // randomized treatment, tau = shifted logistic product
};

inline std::string to_string(SimDesign design) {
  switch (design) {
    case SimDesign::kBoundary: return "boundary";
    case SimDesign::kFriedman: return "friedman";
    case SimDesign::kLinearRamp: return "ramp";
    case SimDesign::kStep: return "step";
    case SimDesign::kCausal1: return "causal1";
    case SimDesign::kCausal2: return "causal2";
  }
  return "unknown";
}

inline SimDesign sim_design_from_string(const std::string& name) {
  if (name == "boundary") return SimDesign::kBoundary;
  if (name == "friedman") return SimDesign::kFriedman;
  if (name == "ramp") return SimDesign::kLinearRamp;
  if (name == "step") return SimDesign::kStep;
  if (name == "causal1") return SimDesign::kCausal1;
  if (name == "causal2") return SimDesign::kCausal2;
  throw ConfigError("unknown design '" + name +
                    "' (boundary, friedman, ramp, step, causal1, causal2)");
}

inline bool is_causal_design(SimDesign design) {
  return design == SimDesign::kCausal1 || design == SimDesign::kCausal2;
}

inline int min_dimension(SimDesign design) {
  switch (design) {
    case SimDesign::kFriedman: return 5;
    case SimDesign::kStep:
    case SimDesign::kCausal1:
    case SimDesign::kCausal2: return 2;
    default: return 1;
  }
}

inline double default_sigma(SimDesign design) {
  switch (design) {
    case SimDesign::kBoundary: return std::sqrt(20.0);
    case SimDesign::kFriedman: return 5.0;
    case SimDesign::kLinearRamp: return 0.0;
    case SimDesign::kStep: return 5.0;
    case SimDesign::kCausal1:
    case SimDesign::kCausal2: return 1.0;
  }
  return 1.0;
}

struct SimSpec {
  SimDesign design = SimDesign::kBoundary;
  int n = 1000;
  int d = 10;
  double sigma = -1.0;  // negative = design default
  std::uint64_t seed = 42;

  double resolved_sigma() const {
    return sigma < 0.0 ? default_sigma(design) : sigma;
  }

  void validate() const {
    if (n < 1) throw SizeError("simulation needs n >= 1");
    int dmin = min_dimension(design);
    if (d < dmin)
      throw ConfigError("design '" + to_string(design) + "' needs d >= " +
                        std::to_string(dmin));
  }
};

// Conditional mean (regression designs) or treatment effect (causal
// designs) at a covariate vector.
inline double truth_value(SimDesign design, const Eigen::VectorXd& x) {
  auto logistic_scaled = [](double scale, double v) {
    return scale / (1.0 + std::exp(-10.0 * (v - 0.5)));
  };
  switch (design) {
    case SimDesign::kBoundary:
      return std::log(1.0 + std::exp(6.0 * x(0)));
    case SimDesign::kFriedman:
      return 10.0 * std::sin(M_PI * x(0) * x(1)) +
             20.0 * (x(2) - 0.5) * (x(2) - 0.5) + 10.0 * x(3) + 5.0 * x(4);
    case SimDesign::kLinearRamp: {
      const int d = static_cast<int>(x.size());
      double y = 20.0 * std::pow(x(0) - 0.5, 3);
      for (int j = 2; j <= std::min(d, 3); ++j) y += 10.0 * x(j - 1);
      for (int j = 4; j <= std::min(d, 5); ++j) y += 5.0 * x(j - 1);
      for (int j = 6; j <= std::min(d, 20); ++j) y += 2.0 * x(j - 1);
      return y;
    }
    case SimDesign::kStep:
      return logistic_scaled(10.0, x(0)) + logistic_scaled(5.0, x(1));
    case SimDesign::kCausal1: {
      auto zeta = [](double v) {
        return 2.0 / (1.0 + std::exp(-20.0 * (v - 1.0 / 3.0)));
      };
      return zeta(x(0)) * zeta(x(1));
    }
    case SimDesign::kCausal2: {
      auto zeta = [](double v) {
        return 1.0 + 1.0 / (1.0 + std::exp(-20.0 * (v - 1.0 / 3.0)));
      };
      return zeta(x(0)) * zeta(x(1));
    }
  }
  return 0.0;
}

struct SimData {
  Dataset data;
  Eigen::VectorXd truth;  // mu(X_i), or tau(X_i) for causal designs
};

// Draws X ~ U[0,1]^(n x d), then responses per design.  Causal designs use
// a randomized binary treatment with propensity 0.5, zero baseline effect,
// and Y = W * tau(X) + noise.
inline SimData generate(const SimSpec& spec, SeededRng& rng) {
  spec.validate();
  const int n = spec.n;
  const int d = spec.d;
  const double sigma = spec.resolved_sigma();
  SimData sim;
  sim.data.features.resize(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) sim.data.features(i, j) = rng.uniform01();
  for (int j = 0; j < d; ++j)
    sim.data.feature_names.push_back("x" + std::to_string(j + 1));

  sim.truth.resize(n);
  for (int i = 0; i < n; ++i)
    sim.truth(i) = truth_value(spec.design, sim.data.features.row(i));

  sim.data.responses.resize(n);
  if (is_causal_design(spec.design)) {
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w(i) = rng.uniform01() < 0.5 ? 1.0 : 0.0;
    for (int i = 0; i < n; ++i)
      sim.data.responses(i) = w(i) * sim.truth(i) + sigma * rng.normal();
    sim.data.treatment = std::move(w);
    sim.data.treatment_name = "w";
  } else {
    for (int i = 0; i < n; ++i)
      sim.data.responses(i) = sim.truth(i) + sigma * rng.normal();
  }
  return sim;
}

// ============================================================================
// Theoretical-rate helpers
// ============================================================================

struct TheoryParams {
  int d = 1;
  double omega = 0.2;
  double pi = 1.0;
  int min_leaf = 5;
  double beta = 0.0;      // informational: s = n^beta
  double subsample = 0.0; // s
  double n = 0.0;
};

namespace detail {

inline void check_rate_params(const TheoryParams& p) {
  if (p.d < 1) throw ConfigError("rate helpers need d >= 1");
  if (!(p.omega > 0.0) || p.omega > 0.5)
    throw ConfigError("rate helpers need omega in (0, 0.5]");
  if (!(p.pi > 0.0) || p.pi > 1.0)
    throw ConfigError("rate helpers need pi in (0, 1]");
}

inline double balance_log_ratio(double omega) {
  return std::log(1.0 / omega) / std::log(1.0 / (1.0 - omega));
}

}  // namespace detail

// Smallest subsample-rate exponent at which plain forest predictions are
// asymptotically unbiased enough for valid intervals.
inline double beta_rf(const TheoryParams& p) {
  detail::check_rate_params(p);
  return 1.0 -
         1.0 / (1.0 + (static_cast<double>(p.d) / p.pi) *
                          detail::balance_log_ratio(p.omega));
}

struct BetaMinResult {
  double value = 0.0;
  bool outside_regime = false;  // omega > 0.2 falls outside the theory
};

// Same exponent for the local linear estimator; the 1.56 divisor is the
// slack the regression correction buys.  Always below beta_rf.
inline BetaMinResult beta_min_llf(const TheoryParams& p) {
  detail::check_rate_params(p);
  BetaMinResult result;
  result.outside_regime = p.omega > 0.2;
  result.value =
      1.0 - 1.0 / (1.0 + (static_cast<double>(p.d) / (1.56 * p.pi)) *
                             detail::balance_log_ratio(p.omega));
  return result;
}

// Reference growth rate for the prediction penalty (Theta-rate with
// constant 1): d * sqrt(s/n) * (s/(2k-1))^(-1.56 * (pi/d) / balance ratio).
inline double theoretical_lambda(const TheoryParams& p) {
  detail::check_rate_params(p);
  if (p.min_leaf < 1) throw ConfigError("rate helpers need min_leaf >= 1");
  if (!(p.subsample > 0.0) || !(p.n > 0.0))
    throw ConfigError("theoretical_lambda needs positive subsample and n");
  if (p.subsample > p.n)
    throw ConfigError("theoretical_lambda needs subsample <= n");
  double exponent = -1.56 * (1.0 / detail::balance_log_ratio(p.omega)) *
                    (p.pi / static_cast<double>(p.d));
  double base = p.subsample / (2.0 * p.min_leaf - 1.0);
  return static_cast<double>(p.d) * std::sqrt(p.subsample / p.n) *
         std::pow(base, exponent);
}

// ============================================================================
// Benchmarks
// ============================================================================

enum class RegressionMethod { kPlainForest, kLocalLinearForest };

inline std::string method_name(RegressionMethod m) {
  return m == RegressionMethod::kPlainForest ? "rf" : "llf";
}

struct BenchOptions {
  int num_trees = 500;
  int n_test = 1000;
  int repeats = 20;
  double level = 0.95;
  int coverage_cap = 500;   // training points scored per coverage repeat
  int lambda_cap = 300;     // points scored per lambda candidate
  int num_threads = 0;
};

struct BenchTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const {
    std::string out;
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (j) out += ',';
      out += header[j];
    }
    out += '\n';
    for (const auto& row : rows) {
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (j) out += ',';
        out += row[j];
      }
      out += '\n';
    }
    return out;
  }
};

namespace detail {

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline ForestConfig bench_config(const SimSpec& spec, const BenchOptions& options,
                                 SplitRule rule, int rep, int method_tag) {
  ForestConfig config;
  config.num_trees = options.num_trees;
  config.split_rule = rule;
  config.seed = spec.seed + 0x100003ULL * static_cast<std::uint64_t>(rep) +
                static_cast<std::uint64_t>(method_tag + 1);
  return config;
}

inline double rmse_of(const std::vector<double>& pred,
                      const Eigen::VectorXd& truth) {
  double ss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double e = pred[i] - truth(static_cast<Eigen::Index>(i));
    ss += e * e;
  }
  return std::sqrt(ss / static_cast<double>(pred.size()));
}

// Split penalties cross-validated per draw in the coverage harness.  The
// large value collapses the in-node fit to a mean, so the candidate set
// spans "remove smooth trends before splitting" vs "split on raw responses".
inline constexpr double kSplitPenaltyCandidates[] = {0.1, 10.0, 1e12};

// Fits one regression model per split-penalty candidate and compares them by
// out-of-bag error over `rows`, scoring only the rows where every candidate
// produced a prediction.  The winner is the heaviest penalty whose error is
// within one paired standard error of the minimum: at benchmark sample sizes
// the candidate gaps are mostly selection noise, and when the comparison is
// inconclusive the mean-like splits are the conservative choice for interval
// calibration.  A clearly better light penalty still wins.
inline RegressionModel fit_with_split_penalty_selection(
    const Dataset& data, ForestConfig config,
    const RegressionFitOptions& fit_options, const std::vector<int>& rows,
    int num_threads) {
  constexpr int kNumCandidates =
      static_cast<int>(std::size(kSplitPenaltyCandidates));
  std::vector<RegressionModel> models;
  models.reserve(kNumCandidates);
  std::vector<std::vector<double>> preds(
      kNumCandidates, std::vector<double>(rows.size(), 0.0));
  std::vector<std::vector<char>> valid(
      kNumCandidates, std::vector<char>(rows.size(), 0));
  for (int c = 0; c < kNumCandidates; ++c) {
    config.lambda_split = kSplitPenaltyCandidates[c];
    models.push_back(fit_regression_model(data, config, fit_options));
    const RegressionModel& model = models.back();
    parallel_for(static_cast<int>(rows.size()), resolve_num_threads(num_threads),
                 [&](int k) {
                   try {
                     preds[c][static_cast<std::size_t>(k)] = model_predict_oob(
                         model, data, rows[static_cast<std::size_t>(k)]);
                     valid[c][static_cast<std::size_t>(k)] = 1;
                   } catch (const Error&) {
                   }
                 });
  }

  std::vector<std::size_t> shared;
  shared.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    bool all_valid = true;
    for (int c = 0; c < kNumCandidates; ++c) all_valid = all_valid && valid[c][k];
    if (all_valid) shared.push_back(k);
  }

  std::vector<std::vector<double>> sq(kNumCandidates);
  std::vector<double> mse(kNumCandidates, 0.0);
  for (int c = 0; c < kNumCandidates; ++c) {
    sq[static_cast<std::size_t>(c)].reserve(shared.size());
    for (std::size_t k : shared) {
      double e = preds[static_cast<std::size_t>(c)][k] -
                 data.responses(rows[k]);
      sq[static_cast<std::size_t>(c)].push_back(e * e);
      mse[static_cast<std::size_t>(c)] += e * e;
    }
    if (!shared.empty()) mse[static_cast<std::size_t>(c)] /= shared.size();
  }
  if (shared.empty()) return std::move(models[0]);

  int best = 0;
  for (int c = 1; c < kNumCandidates; ++c)
    if (mse[static_cast<std::size_t>(c)] < mse[static_cast<std::size_t>(best)])
      best = c;

  int pick = best;
  for (int c = best + 1; c < kNumCandidates; ++c) {
    std::vector<double> diffs(shared.size());
    for (std::size_t k = 0; k < shared.size(); ++k)
      diffs[k] = sq[static_cast<std::size_t>(c)][k] -
                 sq[static_cast<std::size_t>(best)][k];
    double se = sd_of(diffs) / std::sqrt(static_cast<double>(shared.size()));
    if (mse[static_cast<std::size_t>(c)] <=
        mse[static_cast<std::size_t>(best)] + se)
      pick = c;
  }
  return std::move(models[static_cast<std::size_t>(pick)]);
}

}  // namespace detail

// Test-set RMSE per method, aggregated over fresh train/test draws.
inline BenchTable run_rmse_benchmark(const SimSpec& spec,
                                     const std::vector<RegressionMethod>& methods,
                                     const BenchOptions& options) {
  spec.validate();
  if (options.repeats < 1) throw ConfigError("benchmark needs repeats >= 1");
  if (is_causal_design(spec.design))
    throw ConfigError("rmse benchmark expects a regression design");

  std::vector<std::vector<double>> rmse(
      methods.size(), std::vector<double>(static_cast<std::size_t>(options.repeats)));
  for (int rep = 0; rep < options.repeats; ++rep) {
    SeededRng rng(spec.seed, kStreamSimBase + static_cast<std::uint64_t>(rep));
    SimData train = generate(spec, rng);
    SimSpec test_spec = spec;
    test_spec.n = options.n_test;
    SimData test = generate(test_spec, rng);

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      RegressionMethod method = methods[mi];
      ForestConfig config = detail::bench_config(
          spec, options,
          method == RegressionMethod::kLocalLinearForest
              ? SplitRule::kRidgeResidual
              : SplitRule::kCart,
          rep, static_cast<int>(mi));
      RegressionFitOptions fit_options;
      fit_options.plain_kernel = method == RegressionMethod::kPlainForest;
      fit_options.lambda_tuning_cap = options.lambda_cap;
      fit_options.num_threads = options.num_threads;
      RegressionModel model =
          fit_regression_model(train.data, config, fit_options);
      std::vector<double> pred = model_predict_batch(
          model, train.data, test.data.features, options.num_threads);
      rmse[mi][static_cast<std::size_t>(rep)] = detail::rmse_of(pred, test.truth);
    }
  }

  BenchTable table;
  table.header = {"method", "d", "n", "sigma", "rmse", "rmse_sd"};
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    table.rows.push_back({method_name(methods[mi]), std::to_string(spec.d),
                          std::to_string(spec.n),
                          detail::format_number(spec.resolved_sigma()),
                          detail::format_number(detail::mean_of(rmse[mi])),
                          detail::format_number(detail::sd_of(rmse[mi]))});
  }
  return table;
}

// Out-of-bag coverage of level-% confidence intervals at training points,
// with mean interval length and OOB RMSE, for the plain forest and the
// local linear forest.
inline BenchTable run_coverage_benchmark(const SimSpec& spec,
                                         const BenchOptions& options) {
  spec.validate();
  if (options.repeats < 1) throw ConfigError("benchmark needs repeats >= 1");
  if (is_causal_design(spec.design))
    throw ConfigError("coverage benchmark expects a regression design");
  if (!(options.level > 0.0) || !(options.level < 1.0))
    throw ConfigError("confidence level must lie strictly between 0 and 1");

  const std::vector<RegressionMethod> methods = {
      RegressionMethod::kPlainForest, RegressionMethod::kLocalLinearForest};
  std::vector<std::vector<double>> coverage(2), length(2), rmse(2);

  for (int rep = 0; rep < options.repeats; ++rep) {
    SeededRng rng(spec.seed, kStreamSimBase + static_cast<std::uint64_t>(rep));
    SimData train = generate(spec, rng);
    const int n = train.data.n();
    SeededRng pick_rng(spec.seed,
                       kStreamBenchBase + static_cast<std::uint64_t>(rep));
    int cap = options.coverage_cap > 0 ? std::min(options.coverage_cap, n) : n;
    std::vector<int> eval_rows = pick_rng.sample_without_replacement(n, cap);
    std::sort(eval_rows.begin(), eval_rows.end());

    SeededRng select_rng(spec.seed, kStreamBenchBase + 0x5E1EC7ULL +
                                        static_cast<std::uint64_t>(rep));
    int select_cap = std::min(n, std::max(options.lambda_cap, 500));
    std::vector<int> select_rows =
        select_rng.sample_without_replacement(n, select_cap);
    std::sort(select_rows.begin(), select_rows.end());

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      RegressionMethod method = methods[mi];
      ForestConfig config = detail::bench_config(
          spec, options,
          method == RegressionMethod::kLocalLinearForest
              ? SplitRule::kRidgeResidual
              : SplitRule::kCart,
          rep, static_cast<int>(mi));
      // Interval calibration wants finely localized kernels, so the coverage
      // harness relaxes the balance floor and offers every variable at each
      // split; the split penalty is then chosen per draw by out-of-bag error.
      config.balance_omega = 0.05;
      config.mtry = train.data.d();
      RegressionFitOptions fit_options;
      fit_options.plain_kernel = method == RegressionMethod::kPlainForest;
      fit_options.lambda_tuning_cap = options.lambda_cap;
      fit_options.num_threads = options.num_threads;
      // Let the penalty search reach the plain-kernel limit so the local
      // regression can back off entirely when slopes do not pay for
      // themselves on a given draw.
      fit_options.lambda_grid.push_back(1e12);
      RegressionModel model =
          method == RegressionMethod::kLocalLinearForest
              ? detail::fit_with_split_penalty_selection(
                    train.data, config, fit_options, select_rows,
                    options.num_threads)
              : fit_regression_model(train.data, config, fit_options);

      struct PointResult {
        char valid = 0;
        char covered = 0;
        double length = 0.0;
        double sq_err = 0.0;
      };
      std::vector<PointResult> results(eval_rows.size());
      parallel_for(static_cast<int>(eval_rows.size()),
                   resolve_num_threads(options.num_threads), [&](int k) {
                     int row = eval_rows[static_cast<std::size_t>(k)];
                     Eigen::VectorXd x0 = train.data.features.row(row);
                     try {
                       PredictionResult pr = model_predict_interval(
                           model, train.data, x0, options.level, row);
                       PointResult& out = results[static_cast<std::size_t>(k)];
                       out.valid = 1;
                       double t = train.truth(row);
                       out.covered = (t >= pr.lo && t <= pr.hi) ? 1 : 0;
                       out.length = pr.hi - pr.lo;
                       out.sq_err = (pr.mu_hat - t) * (pr.mu_hat - t);
                     } catch (const Error&) {
                       // row in-bag everywhere or degenerate neighborhood
                     }
                   });
      double covered = 0.0, len = 0.0, ss = 0.0;
      int used = 0;
      for (const PointResult& r : results) {
        if (!r.valid) continue;
        ++used;
        covered += r.covered;
        len += r.length;
        ss += r.sq_err;
      }
      if (used == 0) continue;
      coverage[mi].push_back(covered / used);
      length[mi].push_back(len / used);
      rmse[mi].push_back(std::sqrt(ss / used));
    }
  }

  BenchTable table;
  table.header = {"method", "d", "n", "sigma", "coverage", "length", "rmse"};
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    table.rows.push_back({method_name(methods[mi]), std::to_string(spec.d),
                          std::to_string(spec.n),
                          detail::format_number(spec.resolved_sigma()),
                          detail::format_number(detail::mean_of(coverage[mi])),
                          detail::format_number(detail::mean_of(length[mi])),
                          detail::format_number(detail::mean_of(rmse[mi]))});
  }
  return table;
}

// Treatment-effect RMSE on fresh test points: local linear causal forest
// versus the plain causal forest.
inline BenchTable run_causal_benchmark(const SimSpec& spec,
                                       const BenchOptions& options) {
  spec.validate();
  if (options.repeats < 1) throw ConfigError("benchmark needs repeats >= 1");
  if (!is_causal_design(spec.design))
    throw ConfigError("causal benchmark expects a causal design");

  std::vector<std::vector<double>> rmse(2);
  for (int rep = 0; rep < options.repeats; ++rep) {
    SeededRng rng(spec.seed, kStreamSimBase + static_cast<std::uint64_t>(rep));
    SimData train = generate(spec, rng);
    SimSpec test_spec = spec;
    test_spec.n = options.n_test;
    SimData test = generate(test_spec, rng);

    ForestConfig nuisance_config =
        detail::bench_config(spec, options, SplitRule::kCart, rep, 7);
    nuisance_config.balance_omega = 0.05;
    nuisance_config.mtry = train.data.d();
    NuisanceEstimates nuisances =
        estimate_nuisances(train.data, nuisance_config, options.num_threads);

    for (int mi = 0; mi < 2; ++mi) {
      bool local_linear = mi == 1;
      // Both methods use the standard causal forest kernel (CART on the
      // orthogonalized pseudo-outcomes); the local linear method differs in
      // the regularized adjustment at prediction.  Heterogeneity at d = 20
      // is easier to find with every variable offered and a relaxed balance
      // floor, so the harness sets both for the two methods alike.
      ForestConfig config =
          detail::bench_config(spec, options, SplitRule::kCart, rep, mi);
      config.balance_omega = 0.05;
      config.mtry = train.data.d();
      CausalFitOptions fit_options;
      fit_options.local_linear = local_linear;
      fit_options.num_threads = options.num_threads;
      CausalModel model = fit_llcf(train.data, nuisances, config, fit_options);

      std::vector<double> pred(static_cast<std::size_t>(test.data.n()), 0.0);
      parallel_for(test.data.n(), resolve_num_threads(options.num_threads),
                   [&](int i) {
                     pred[static_cast<std::size_t>(i)] = predict_tau(
                         model, train.data, test.data.features.row(i));
                   });
      rmse[static_cast<std::size_t>(mi)].push_back(
          detail::rmse_of(pred, test.truth));
    }
  }

  BenchTable table;
  table.header = {"method", "d", "n", "sigma", "rmse", "rmse_sd"};
  const char* names[2] = {"cf", "llcf"};
  for (int mi = 0; mi < 2; ++mi) {
    table.rows.push_back({names[mi], std::to_string(spec.d),
                          std::to_string(spec.n),
                          detail::format_number(spec.resolved_sigma()),
                          detail::format_number(
                              detail::mean_of(rmse[static_cast<std::size_t>(mi)])),
                          detail::format_number(
                              detail::sd_of(rmse[static_cast<std::size_t>(mi)]))});
  }
  return table;
}

}  // namespace llf
