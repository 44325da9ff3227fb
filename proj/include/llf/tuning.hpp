#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "llf/dataset.hpp"
#include "llf/errors.hpp"
#include "llf/forest.hpp"
#include "llf/locallinear.hpp"
#include "llf/weights.hpp"

namespace llf {

// ============================================================================
// Grids
// ============================================================================

inline std::vector<double> default_lambda_grid() {
  std::vector<double> grid(10);
  double lo = std::log(1e-3), hi = std::log(1e2);
  for (int i = 0; i < 10; ++i)
    grid[static_cast<std::size_t>(i)] = std::exp(lo + (hi - lo) * i / 9.0);
  return grid;
}

struct TuningGrid {
  std::vector<double> lambda_predict_candidates = default_lambda_grid();
  std::vector<int> mtry_candidates = {0};        // 0 = automatic
  std::vector<int> min_leaf_candidates = {5};
  std::vector<double> subsample_fraction_candidates = {0.5};
  int folds = 5;
  int cv_num_trees = 200;  // forest size grown inside each fold

  void validate() const {
    if (lambda_predict_candidates.empty() || mtry_candidates.empty() ||
        min_leaf_candidates.empty() || subsample_fraction_candidates.empty())
      throw ConfigError("tuning grids must not be empty");
    if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
    if (cv_num_trees < 1) throw ConfigError("cv_num_trees must be positive");
    for (double l : lambda_predict_candidates)
      if (!(l > 0.0)) throw ConfigError("lambda candidates must be positive");
  }
};

// ============================================================================
// Lasso feature selection
// ============================================================================

namespace detail {

// One cyclic coordinate-descent pass sequence for the standardized lasso
// (1/(2n))|y - Xb|^2 + penalty*|b|_1.  Columns are assumed standardized to
// unit variance, so each update is a plain soft-threshold.  `beta` warm
// starts and is overwritten.
inline void lasso_coordinate_descent(const Eigen::MatrixXd& x,
                                     const Eigen::VectorXd& y, double penalty,
                                     Eigen::VectorXd& beta) {
  const int n = static_cast<int>(x.rows());
  const int d = static_cast<int>(x.cols());
  Eigen::VectorXd residual = y - x * beta;
  for (int sweep = 0; sweep < 1000; ++sweep) {
    double max_delta = 0.0;
    for (int j = 0; j < d; ++j) {
      double old = beta(j);
      double rho = x.col(j).dot(residual) / n + old;
      double updated = 0.0;
      if (rho > penalty)
        updated = rho - penalty;
      else if (rho < -penalty)
        updated = rho + penalty;
      if (updated != old) {
        residual += x.col(j) * (old - updated);
        beta(j) = updated;
        max_delta = std::max(max_delta, std::abs(updated - old));
      }
    }
    if (max_delta <= 1e-7) break;
  }
}

struct StandardizedDesign {
  Eigen::MatrixXd x;        // zero mean, unit variance columns (dead ones zeroed)
  Eigen::VectorXd y;        // centered responses
  std::vector<bool> alive;  // false for zero-variance columns
};

inline StandardizedDesign standardize(const Dataset& data) {
  const int n = data.n();
  const int d = data.d();
  StandardizedDesign out;
  out.x.resize(n, d);
  out.alive.assign(static_cast<std::size_t>(d), true);
  for (int j = 0; j < d; ++j) {
    double mean = data.features.col(j).mean();
    Eigen::VectorXd centered = data.features.col(j).array() - mean;
    double sd = std::sqrt(centered.squaredNorm() / n);
    if (sd > 0.0) {
      out.x.col(j) = centered / sd;
    } else {
      out.x.col(j).setZero();
      out.alive[static_cast<std::size_t>(j)] = false;
    }
  }
  out.y = data.responses.array() - data.responses.mean();
  return out;
}

}  // namespace detail

// Lasso-based feature screening for the prediction regression.  The penalty
// is picked by k-fold cross-validation over `penalty_path` (a default
// 20-point logarithmic path from the smallest all-zero penalty when the
// path is empty).  Never returns an empty set: if the lasso keeps nothing,
// the single feature with the largest absolute correlation wins.
inline std::vector<int> select_features_lasso(const Dataset& data,
                                              std::vector<double> penalty_path,
                                              SeededRng& rng) {
  data.validate();
  const int n = data.n();
  const int d = data.d();
  if (n <= 2) throw SizeError("lasso selection needs more than 2 rows");
  if (d == 1) return {0};

  detail::StandardizedDesign std_design = detail::standardize(data);

  auto correlation_fallback = [&]() -> std::vector<int> {
    int best = 0;
    double best_abs = -1.0;
    for (int j = 0; j < d; ++j) {
      if (!std_design.alive[static_cast<std::size_t>(j)]) continue;
      double c = std::abs(std_design.x.col(j).dot(std_design.y)) / n;
      if (c > best_abs) {
        best_abs = c;
        best = j;
      }
    }
    return {best};
  };

  double penalty_max = 0.0;
  for (int j = 0; j < d; ++j)
    penalty_max = std::max(
        penalty_max, std::abs(std_design.x.col(j).dot(std_design.y)) / n);
  if (penalty_max <= 0.0) return correlation_fallback();

  if (penalty_path.empty()) {
    for (int i = 0; i < 20; ++i)
      penalty_path.push_back(penalty_max * std::pow(10.0, -3.0 * i / 19.0));
  }
  std::sort(penalty_path.begin(), penalty_path.end(), std::greater<double>());

  const int folds = std::min(5, n);
  std::vector<int> assignment(static_cast<std::size_t>(n));
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  for (int i = 0; i < n; ++i)
    assignment[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i % folds;

  std::vector<double> cv_sse(penalty_path.size(), 0.0);
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train;
    train.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      if (assignment[static_cast<std::size_t>(i)] != f) train.push_back(i);
    if (train.empty()) continue;
    Eigen::MatrixXd xt(static_cast<Eigen::Index>(train.size()), d);
    Eigen::VectorXd yt(static_cast<Eigen::Index>(train.size()));
    for (std::size_t k = 0; k < train.size(); ++k) {
      xt.row(static_cast<Eigen::Index>(k)) = std_design.x.row(train[k]);
      yt(static_cast<Eigen::Index>(k)) = std_design.y(train[k]);
    }
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
    for (std::size_t p = 0; p < penalty_path.size(); ++p) {
      detail::lasso_coordinate_descent(xt, yt, penalty_path[p], beta);
      for (int i = 0; i < n; ++i) {
        if (assignment[static_cast<std::size_t>(i)] != f) continue;
        double pred = std_design.x.row(i).dot(beta);
        double err = std_design.y(i) - pred;
        cv_sse[p] += err * err;
      }
    }
  }

  std::size_t best_p = 0;
  for (std::size_t p = 1; p < penalty_path.size(); ++p)
    if (cv_sse[p] < cv_sse[best_p]) best_p = p;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
  for (std::size_t p = 0; p <= best_p; ++p)  // warm-started path refit
    detail::lasso_coordinate_descent(std_design.x, std_design.y,
                                     penalty_path[p], beta);
  std::vector<int> selected;
  for (int j = 0; j < d; ++j)
    if (beta(j) != 0.0) selected.push_back(j);
  if (selected.empty()) return correlation_fallback();
  return selected;
}

// ============================================================================
// R-learner criterion
// ============================================================================

inline double r_learner_error(const Eigen::VectorXd& y,
                              const Eigen::VectorXd& m_hat,
                              const Eigen::VectorXd& e_hat,
                              const Eigen::VectorXd& tau_hat,
                              const Eigen::VectorXd& w) {
  const Eigen::Index n = y.size();
  if (m_hat.size() != n || e_hat.size() != n || tau_hat.size() != n ||
      w.size() != n)
    throw SchemaError("r_learner_error arguments must share one length");
  for (Eigen::Index i = 0; i < n; ++i)
    if (w(i) != 0.0 && w(i) != 1.0)
      throw SchemaError("treatment vector must be binary 0/1");
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double diff = y(i) - m_hat(i) - tau_hat(i) * (w(i) - e_hat(i));
    total += diff * diff;
  }
  return total;
}

// ============================================================================
// Cross-validation
// ============================================================================

struct CvRow {
  int mtry = 0;
  int min_leaf = 0;
  double subsample_fraction = 0.0;
  double lambda = 0.0;
  double cv_mse = 0.0;
};

struct CvResult {
  ForestConfig best_config;
  double best_lambda = 0.0;
  std::vector<CvRow> table;
};

namespace detail {

inline Dataset subset_rows(const Dataset& data, const std::vector<int>& rows) {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), data.d());
  out.responses.resize(static_cast<Eigen::Index>(rows.size()));
  out.feature_names = data.feature_names;
  out.response_name = data.response_name;
  out.treatment_name = data.treatment_name;
  if (data.treatment)
    out.treatment = Eigen::VectorXd(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.features.row(static_cast<Eigen::Index>(k)) = data.features.row(rows[k]);
    out.responses(static_cast<Eigen::Index>(k)) = data.responses(rows[k]);
    if (data.treatment)
      (*out.treatment)(static_cast<Eigen::Index>(k)) = (*data.treatment)(rows[k]);
  }
  return out;
}

}  // namespace detail

// k-fold cross-validation over the structural grid and the prediction
// penalty.  Each fold regrows the forest on the training part (with
// grid.cv_num_trees trees), reselects features by lasso, and scores every
// lambda candidate on the held-out rows.  Ties resolve to the smallest
// lambda, then the smallest leaf size.
inline CvResult cross_validate(const Dataset& data, const TuningGrid& grid,
                               const ForestConfig& base, SeededRng& rng,
                               int num_threads = 0) {
  grid.validate();
  data.validate();
  const int n = data.n();
  if (n < 2 * grid.folds)
    throw SizeError("cross-validation needs at least 2 rows per fold");

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  rng.shuffle(order);
  std::vector<int> assignment(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    assignment[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i % grid.folds;

  CvResult result;
  result.best_config = base;
  double best_mse = std::numeric_limits<double>::infinity();
  double best_lambda = 0.0;
  int best_min_leaf = 0;

  std::uint64_t fold_stream = 0;
  for (int mtry : grid.mtry_candidates) {
    for (int min_leaf : grid.min_leaf_candidates) {
      for (double fraction : grid.subsample_fraction_candidates) {
        ForestConfig cfg = base;
        cfg.mtry = mtry;
        cfg.min_leaf_size = min_leaf;
        cfg.subsample_fraction = fraction;
        cfg.num_trees =
            ((grid.cv_num_trees + cfg.bag_group_size - 1) / cfg.bag_group_size) *
            cfg.bag_group_size;

        std::vector<double> sse(grid.lambda_predict_candidates.size(), 0.0);
        long count = 0;
        for (int f = 0; f < grid.folds; ++f) {
          ++fold_stream;
          std::vector<int> train_rows;
          train_rows.reserve(static_cast<std::size_t>(n));
          for (int i = 0; i < n; ++i)
            if (assignment[static_cast<std::size_t>(i)] != f)
              train_rows.push_back(i);
          Dataset train = detail::subset_rows(data, train_rows);
          SeededRng fold_rng(base.seed, kStreamTuningBase + fold_stream);
          std::vector<int> features = select_features_lasso(train, {}, fold_rng);
          Forest forest = grow_forest(train, cfg, std::nullopt, num_threads);
          for (int i = 0; i < n; ++i) {
            if (assignment[static_cast<std::size_t>(i)] != f) continue;
            Eigen::VectorXd x0 = data.features.row(i);
            double truth = data.responses(i);
            ++count;
            WeightVector weights;
            try {
              weights = forest_weights(forest, x0);
            } catch (const Error&) {
              continue;  // no usable trees; skip the point for every lambda
            }
            double fallback = 0.0;
            for (const auto& [row, w] : weights.entries)
              fallback += w * train.responses(row);
            LocalDesign design;
            bool have_design = true;
            try {
              design = build_design(train, weights, x0, features, 0.0);
            } catch (const Error&) {
              have_design = false;
            }
            for (std::size_t li = 0; li < sse.size(); ++li) {
              double pred = fallback;
              if (have_design) {
                design.lambda = grid.lambda_predict_candidates[li];
                try {
                  pred = solve_local_ridge(design, train.responses).mu_hat;
                } catch (const Error&) {
                  pred = fallback;  // degenerate fold: weighted-mean prediction
                }
              }
              double err = truth - pred;
              sse[li] += err * err;
            }
          }
        }
        for (std::size_t li = 0; li < sse.size(); ++li) {
          CvRow row;
          row.mtry = mtry;
          row.min_leaf = min_leaf;
          row.subsample_fraction = fraction;
          row.lambda = grid.lambda_predict_candidates[li];
          row.cv_mse = count > 0 ? sse[li] / static_cast<double>(count) : 0.0;
          result.table.push_back(row);
          bool better = row.cv_mse < best_mse;
          bool tie = row.cv_mse == best_mse &&
                     (row.lambda < best_lambda ||
                      (row.lambda == best_lambda && min_leaf < best_min_leaf));
          if (better || tie) {
            best_mse = row.cv_mse;
            best_lambda = row.lambda;
            best_min_leaf = min_leaf;
            result.best_config = base;
            result.best_config.mtry = mtry;
            result.best_config.min_leaf_size = min_leaf;
            result.best_config.subsample_fraction = fraction;
            result.best_lambda = row.lambda;
          }
        }
      }
    }
  }
  return result;
}

}  // namespace llf
