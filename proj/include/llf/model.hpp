#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "llf/dataset.hpp"
#include "llf/errors.hpp"
#include "llf/forest.hpp"
#include "llf/locallinear.hpp"
#include "llf/threading.hpp"
#include "llf/tuning.hpp"
#include "llf/variance.hpp"
#include "llf/weights.hpp"

namespace llf {

// ============================================================================
// Fitted regression model
// ============================================================================

// A fitted forest plus the prediction-stage choices: which features enter
// the local regression and at what ridge penalty.  plain_kernel switches to
// the classical forest prediction (weighted mean, no regression), used as
// the baseline method in benchmarks.
struct RegressionModel {
  Forest forest;
  std::vector<int> selected_features;
  double lambda_predict = 0.1;
  bool plain_kernel = false;
};

struct RegressionFitOptions {
  std::optional<double> fixed_lambda;          // skip OOB selection when set
  std::vector<double> lambda_grid = default_lambda_grid();
  std::vector<int> feature_override;           // empty = lasso selection
  bool plain_kernel = false;
  int lambda_tuning_cap = 300;  // training points scored per lambda candidate
  int num_threads = 0;
};

namespace detail {

inline double kernel_mean(const Dataset& data, const WeightVector& weights) {
  double mu = 0.0;
  for (const auto& [row, w] : weights.entries) mu += w * data.responses(row);
  return mu;
}

// Picks lambda by out-of-bag mean squared error on a deterministic subset
// of training rows, reusing each row's weights across the grid.  Ties go to
// the smallest lambda.
inline double select_lambda_oob(const Forest& forest, const Dataset& data,
                                const std::vector<int>& features,
                                const std::vector<double>& grid, int cap,
                                int num_threads) {
  const int n = data.n();
  SeededRng rng(forest.config.seed, kStreamTuningBase + 0xA11CE);
  std::vector<int> rows = rng.sample_without_replacement(n, std::min(n, cap));
  std::sort(rows.begin(), rows.end());

  const std::size_t num_lambdas = grid.size();
  std::vector<std::vector<double>> sse(rows.size(),
                                       std::vector<double>(num_lambdas, 0.0));
  std::vector<char> valid(rows.size(), 0);
  parallel_for(static_cast<int>(rows.size()), resolve_num_threads(num_threads),
               [&](int k) {
                 int row = rows[static_cast<std::size_t>(k)];
                 Eigen::VectorXd x0 = data.features.row(row);
                 WeightVector weights;
                 try {
                   weights = forest_weights_oob(forest, x0, row);
                 } catch (const Error&) {
                   return;  // row is in-bag everywhere; leave it out
                 }
                 LocalDesign design;
                 try {
                   design = build_design(data, weights, x0, features, 0.0);
                 } catch (const Error&) {
                   return;
                 }
                 valid[static_cast<std::size_t>(k)] = 1;
                 double truth = data.responses(row);
                 for (std::size_t li = 0; li < num_lambdas; ++li) {
                   design.lambda = grid[li];
                   double pred;
                   try {
                     pred = solve_local_ridge(design, data.responses).mu_hat;
                   } catch (const Error&) {
                     pred = kernel_mean(data, weights);
                   }
                   double err = truth - pred;
                   sse[static_cast<std::size_t>(k)][li] = err * err;
                 }
               });

  std::vector<double> total(num_lambdas, 0.0);
  int used = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (!valid[k]) continue;
    ++used;
    for (std::size_t li = 0; li < num_lambdas; ++li) total[li] += sse[k][li];
  }
  if (used == 0) return grid.front();
  std::size_t best = 0;
  for (std::size_t li = 1; li < num_lambdas; ++li)
    if (total[li] < total[best]) best = li;
  return grid[best];
}

}  // namespace detail

// Fits the full prediction pipeline: grow the forest, pick regression
// features (lasso unless overridden), then pick lambda by out-of-bag error.
inline RegressionModel fit_regression_model(
    const Dataset& data, const ForestConfig& config,
    const RegressionFitOptions& options = {}) {
  data.validate();
  RegressionModel model;
  model.plain_kernel = options.plain_kernel;
  model.forest = grow_forest(data, config, std::nullopt, options.num_threads);
  if (options.plain_kernel) {
    model.selected_features = all_features(data.d());
    model.lambda_predict = 0.0;
    return model;
  }
  if (!options.feature_override.empty()) {
    model.selected_features = options.feature_override;
  } else {
    SeededRng lasso_rng(config.seed, kStreamTuningBase + 0x1A550);
    model.selected_features = select_features_lasso(data, {}, lasso_rng);
  }
  if (options.fixed_lambda) {
    model.lambda_predict = *options.fixed_lambda;
  } else {
    model.lambda_predict = detail::select_lambda_oob(
        model.forest, data, model.selected_features, options.lambda_grid,
        options.lambda_tuning_cap, options.num_threads);
  }
  return model;
}

// ============================================================================
// Prediction entry points
// ============================================================================

inline double model_predict(const RegressionModel& model, const Dataset& train,
                            const Eigen::VectorXd& x0) {
  WeightVector weights = forest_weights(model.forest, x0);
  if (model.plain_kernel) return detail::kernel_mean(train, weights);
  return predict_from_weights(train, weights, x0, model.lambda_predict,
                              model.selected_features);
}

inline double model_predict_oob(const RegressionModel& model,
                                const Dataset& train, int row) {
  Eigen::VectorXd x0 = train.features.row(row);
  WeightVector weights = forest_weights_oob(model.forest, x0, row);
  if (model.plain_kernel) return detail::kernel_mean(train, weights);
  return predict_from_weights(train, weights, x0, model.lambda_predict,
                              model.selected_features);
}

// Point prediction with a delta-method confidence interval.  Pass
// excluded_row >= 0 for the out-of-bag version at a training point.
inline PredictionResult model_predict_interval(const RegressionModel& model,
                                               const Dataset& train,
                                               const Eigen::VectorXd& x0,
                                               double level,
                                               int excluded_row = -1) {
  if (model.plain_kernel) {
    WeightVector weights = excluded_row >= 0
                               ? forest_weights_oob(model.forest, x0, excluded_row)
                               : forest_weights(model.forest, x0);
    double mu = detail::kernel_mean(train, weights);
    Eigen::VectorXd gamma_scores = train.responses.array() - mu;
    VarianceEstimate var =
        little_bags_variance(model.forest, gamma_scores, x0, excluded_row);
    PredictionResult result;
    result.mu_hat = mu;
    result.sigma2 = var.sigma2;
    std::tie(result.lo, result.hi) = confidence_interval(mu, var.sigma2, level);
    return result;
  }
  return predict_with_interval(model.forest, train, x0, model.lambda_predict,
                               model.selected_features, level, excluded_row);
}

inline std::vector<double> model_predict_batch(const RegressionModel& model,
                                               const Dataset& train,
                                               const Eigen::MatrixXd& x_test,
                                               int num_threads = 0) {
  if (x_test.cols() != model.forest.num_features)
    throw SchemaError("test matrix feature count does not match forest");
  std::vector<double> out(static_cast<std::size_t>(x_test.rows()), 0.0);
  parallel_for(static_cast<int>(x_test.rows()), resolve_num_threads(num_threads),
               [&](int i) {
                 out[static_cast<std::size_t>(i)] =
                     model_predict(model, train, x_test.row(i));
               });
  return out;
}

}  // namespace llf
