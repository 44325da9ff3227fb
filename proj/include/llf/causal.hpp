#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "llf/dataset.hpp"
#include "llf/errors.hpp"
#include "llf/forest.hpp"
#include "llf/model.hpp"
#include "llf/threading.hpp"
#include "llf/tuning.hpp"
#include "llf/weights.hpp"

namespace llf {

// ============================================================================
// Nuisance estimation
// ============================================================================

struct NuisanceEstimates {
  Eigen::VectorXd m_hat;  // out-of-bag estimates of E[Y | X]
  Eigen::VectorXd e_hat;  // out-of-bag propensities, clamped to [0.01, 0.99]
};

inline double treatment_count(const Dataset& data) {
  return data.treatment ? data.treatment->sum() : 0.0;
}

// Out-of-bag regression estimates of the conditional mean of Y and of the
// propensity, each from its own honest forest with a local linear head over
// all features.  Training rows that are in-bag everywhere fall back to the
// in-bag prediction.
inline NuisanceEstimates estimate_nuisances(const Dataset& data,
                                            const ForestConfig& config,
                                            int num_threads = 0) {
  data.validate();
  if (!data.treatment)
    throw SchemaError("nuisance estimation needs a treatment column");
  const int n = data.n();
  double treated = treatment_count(data);
  if (treated == 0.0 || treated == static_cast<double>(n))
    throw OverlapError("treatment has no variation: all rows are " +
                       std::string(treated == 0.0 ? "control" : "treated"));

  auto oob_regression = [&](const Dataset& target) {
    RegressionFitOptions options;
    options.feature_override = all_features(target.d());
    options.num_threads = num_threads;
    RegressionModel model = fit_regression_model(target, config, options);
    Eigen::VectorXd out(n);
    std::vector<double> slots(static_cast<std::size_t>(n), 0.0);
    parallel_for(n, resolve_num_threads(num_threads), [&](int i) {
      double value;
      try {
        value = model_predict_oob(model, target, i);
      } catch (const Error&) {
        value = model_predict(model, target, target.features.row(i));
      }
      slots[static_cast<std::size_t>(i)] = value;
    });
    for (int i = 0; i < n; ++i) out(i) = slots[static_cast<std::size_t>(i)];
    return out;
  };

  NuisanceEstimates nuisances;
  nuisances.m_hat = oob_regression(data);

  Dataset propensity_data = data;
  propensity_data.responses = *data.treatment;
  propensity_data.treatment.reset();
  ForestConfig e_config = config;
  e_config.seed = config.seed ^ 0x9E3779B97F4A7C15ULL;
  {
    RegressionFitOptions options;
    options.feature_override = all_features(data.d());
    options.num_threads = num_threads;
    RegressionModel model =
        fit_regression_model(propensity_data, e_config, options);
    Eigen::VectorXd e(n);
    std::vector<double> slots(static_cast<std::size_t>(n), 0.0);
    parallel_for(n, resolve_num_threads(num_threads), [&](int i) {
      double value;
      try {
        value = model_predict_oob(model, propensity_data, i);
      } catch (const Error&) {
        value = model_predict(model, propensity_data,
                              propensity_data.features.row(i));
      }
      slots[static_cast<std::size_t>(i)] = value;
    });
    for (int i = 0; i < n; ++i)
      e(i) = std::clamp(slots[static_cast<std::size_t>(i)], 0.01, 0.99);
    nuisances.e_hat = std::move(e);
  }
  return nuisances;
}

// ============================================================================
// Causal model
// ============================================================================

struct CausalModel {
  Forest forest;
  NuisanceEstimates nuisances;
  double lambda_tau = 0.0;
  double lambda_a = 0.0;
  bool local_linear = true;  // false: plain causal-forest head (no slopes)
};

struct CausalFitOptions {
  bool local_linear = true;
  std::vector<double> lambda_grid = {0.01, 0.1, 1.0, 10.0};
  int cv_cap = 400;  // training points scored in the R-learner CV
  int num_threads = 0;
};

namespace detail {

// Augmented local design for the treatment-effect solve: columns are
// [1, X - x0, w_res, w_res * (X - x0)], the response is y_res, and the
// slope blocks carry separate penalties (intercepts a and tau are free).
struct CausalDesign {
  Eigen::MatrixXd delta;  // n_eff x (2d + 2)
  Eigen::VectorXd alpha;
  Eigen::VectorXd y_res;
};

inline CausalDesign build_causal_design(const Dataset& data,
                                        const NuisanceEstimates& nuisances,
                                        const WeightVector& weights,
                                        const Eigen::VectorXd& x0) {
  const int d = data.d();
  const int n_eff = static_cast<int>(weights.entries.size());
  CausalDesign design;
  design.delta.resize(n_eff, 2 * d + 2);
  design.alpha.resize(n_eff);
  design.y_res.resize(n_eff);
  for (int k = 0; k < n_eff; ++k) {
    const auto& [row, w] = weights.entries[static_cast<std::size_t>(k)];
    double w_res = (*data.treatment)(row)-nuisances.e_hat(row);
    design.alpha(k) = w;
    design.y_res(k) = data.responses(row) - nuisances.m_hat(row);
    design.delta(k, 0) = 1.0;
    for (int j = 0; j < d; ++j) {
      double centered = data.features(row, j) - x0(j);
      design.delta(k, j + 1) = centered;
      design.delta(k, d + 2 + j) = w_res * centered;
    }
    design.delta(k, d + 1) = w_res;
  }
  return design;
}

inline double solve_tau_local_linear(const CausalDesign& design, int d,
                                     double lambda_tau, double lambda_a) {
  Eigen::MatrixXd weighted = design.alpha.asDiagonal() * design.delta;
  Eigen::MatrixXd m = design.delta.transpose() * weighted;
  for (int j = 1; j <= d; ++j) m(j, j) += lambda_a;
  for (int j = d + 2; j <= 2 * d + 1; ++j) m(j, j) += lambda_tau;
  Eigen::VectorXd rhs = weighted.transpose() * design.y_res;
  Eigen::VectorXd coef = m.ldlt().solve(rhs);
  if (!coef.allFinite() ||
      (m * coef - rhs).norm() > 1e-8 * (rhs.norm() + 1.0)) {
    Eigen::MatrixXd bumped = m;
    bumped.diagonal().array() += 1e-10 * (1.0 + m.trace());
    coef = bumped.ldlt().solve(rhs);
    if (!coef.allFinite() ||
        (bumped * coef - rhs).norm() > 1e-6 * (rhs.norm() + 1.0))
      throw RankError(
          "treatment-effect system is singular; increase lambda_tau/lambda_a");
  }
  return coef(d + 1);
}

// Plain causal-forest head: weighted regression of y_res on [1, w_res].
inline double solve_tau_plain(const CausalDesign& design, int d) {
  double s1 = 0.0, sw = 0.0, sww = 0.0, sy = 0.0, swy = 0.0;
  const int n_eff = static_cast<int>(design.alpha.size());
  for (int k = 0; k < n_eff; ++k) {
    double a = design.alpha(k);
    double w = design.delta(k, d + 1);
    double y = design.y_res(k);
    s1 += a;
    sw += a * w;
    sww += a * w * w;
    sy += a * y;
    swy += a * w * y;
  }
  double det = s1 * sww - sw * sw;
  if (std::abs(det) > 1e-12 * (1.0 + s1 * sww))
    return (s1 * swy - sw * sy) / det;
  if (sww > 1e-12) return swy / sww;  // no intercept identified
  return 0.0;                         // no treatment variation nearby
}

}  // namespace detail

inline double predict_tau_from_weights(const CausalModel& model,
                                       const Dataset& data,
                                       const WeightVector& weights,
                                       const Eigen::VectorXd& x0) {
  detail::CausalDesign design =
      detail::build_causal_design(data, model.nuisances, weights, x0);
  if (model.local_linear)
    return detail::solve_tau_local_linear(design, data.d(), model.lambda_tau,
                                          model.lambda_a);
  return detail::solve_tau_plain(design, data.d());
}

inline double predict_tau(const CausalModel& model, const Dataset& data,
                          const Eigen::VectorXd& x0) {
  if (!data.treatment)
    throw SchemaError("treatment-effect prediction needs the training data's "
                      "treatment column");
  return predict_tau_from_weights(model, data, forest_weights(model.forest, x0),
                                  x0);
}

// Grows the treatment-heterogeneity forest on per-node pseudo-outcomes
// rho_i = w_res_i * (y_res_i - w_res_i * tau_P) / Var(w_res in node), then
// selects (lambda_tau, lambda_a) by out-of-bag R-learner error over a small
// grid.  Set options.local_linear = false for a plain causal forest (no
// ridge adjustment, no penalty selection).
inline CausalModel fit_llcf(const Dataset& data,
                            const NuisanceEstimates& nuisances,
                            const ForestConfig& config,
                            const CausalFitOptions& options = {}) {
  data.validate();
  if (!data.treatment)
    throw SchemaError("causal fitting needs a treatment column");
  const int n = data.n();
  if (nuisances.m_hat.size() != n || nuisances.e_hat.size() != n)
    throw SchemaError("nuisance vectors must match the dataset length");

  Eigen::VectorXd y_res = data.responses - nuisances.m_hat;
  Eigen::VectorXd w_res = *data.treatment - nuisances.e_hat;

  NodeOutcomeFn causal_outcome = [&y_res, &w_res](const std::vector<int>& rows,
                                                  std::vector<double>& out) {
    const std::size_t m = rows.size();
    out.resize(m);
    double sww = 0.0, swy = 0.0, wbar = 0.0, ybar = 0.0;
    for (int r : rows) {
      sww += w_res(r) * w_res(r);
      swy += w_res(r) * y_res(r);
      wbar += w_res(r);
      ybar += y_res(r);
    }
    wbar /= static_cast<double>(m);
    ybar /= static_cast<double>(m);
    double var_w = sww / static_cast<double>(m) - wbar * wbar;
    if (var_w < 1e-12) {
      // No treatment variation in the node; fall back to outcome residuals
      // so the split search still has a target.
      for (std::size_t k = 0; k < m; ++k) out[k] = y_res(rows[k]) - ybar;
      return;
    }
    double tau_parent = sww > 0.0 ? swy / sww : 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      int r = rows[k];
      out[k] = w_res(r) * (y_res(r) - w_res(r) * tau_parent) / var_w;
    }
  };

  CausalModel model;
  model.nuisances = nuisances;
  model.local_linear = options.local_linear;
  model.forest =
      grow_forest_with_outcome(data, config, causal_outcome, options.num_threads);
  if (!options.local_linear) return model;

  // R-learner selection of the two penalties on a deterministic subset of
  // training rows, using out-of-bag weights.
  SeededRng rng(config.seed, kStreamTuningBase + 0xCA05A1);
  std::vector<int> rows =
      rng.sample_without_replacement(n, std::min(n, options.cv_cap));
  std::sort(rows.begin(), rows.end());
  const std::size_t num_lambdas = options.lambda_grid.size();
  const std::size_t num_combos = num_lambdas * num_lambdas;

  std::vector<std::vector<double>> tau_by_combo(
      rows.size(), std::vector<double>(num_combos, 0.0));
  std::vector<char> valid(rows.size(), 0);
  parallel_for(static_cast<int>(rows.size()),
               resolve_num_threads(options.num_threads), [&](int k) {
                 int row = rows[static_cast<std::size_t>(k)];
                 Eigen::VectorXd x0 = data.features.row(row);
                 WeightVector weights;
                 try {
                   weights = forest_weights_oob(model.forest, x0, row);
                 } catch (const Error&) {
                   return;
                 }
                 detail::CausalDesign design =
                     detail::build_causal_design(data, nuisances, weights, x0);
                 std::size_t c = 0;
                 for (std::size_t ti = 0; ti < num_lambdas; ++ti) {
                   for (std::size_t ai = 0; ai < num_lambdas; ++ai, ++c) {
                     try {
                       tau_by_combo[static_cast<std::size_t>(k)][c] =
                           detail::solve_tau_local_linear(
                               design, data.d(), options.lambda_grid[ti],
                               options.lambda_grid[ai]);
                     } catch (const Error&) {
                       return;  // drop the point for every combo
                     }
                   }
                 }
                 valid[static_cast<std::size_t>(k)] = 1;
               });

  double best_err = std::numeric_limits<double>::infinity();
  model.lambda_tau = options.lambda_grid.front();
  model.lambda_a = options.lambda_grid.front();
  std::size_t c = 0;
  for (std::size_t ti = 0; ti < num_lambdas; ++ti) {
    for (std::size_t ai = 0; ai < num_lambdas; ++ai, ++c) {
      double err = 0.0;
      int used = 0;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        if (!valid[k]) continue;
        int row = rows[k];
        double diff = y_res(row) - tau_by_combo[k][c] * w_res(row);
        err += diff * diff;
        ++used;
      }
      if (used == 0) continue;
      if (err < best_err) {
        best_err = err;
        model.lambda_tau = options.lambda_grid[ti];
        model.lambda_a = options.lambda_grid[ai];
      }
    }
  }
  return model;
}

// Transformed-outcome test error for a randomized design with e = 0.5:
// mean of ((2W - 1) Y - tau_hat)^2, minus the irreducible part S0 when the
// caller can supply it.
inline double transformed_outcome_error(const Dataset& test,
                                        const Eigen::VectorXd& tau_hat,
                                        std::optional<double> s0 = std::nullopt) {
  if (!test.treatment)
    throw SchemaError("transformed-outcome error needs a treatment column");
  if (tau_hat.size() != test.n())
    throw SchemaError("tau_hat length does not match test rows");
  double total = 0.0;
  for (int i = 0; i < test.n(); ++i) {
    double transformed = (2.0 * (*test.treatment)(i)-1.0) * test.responses(i);
    double diff = transformed - tau_hat(i);
    total += diff * diff;
  }
  double raw = total / static_cast<double>(test.n());
  return s0 ? raw - *s0 : raw;
}

}  // namespace llf
