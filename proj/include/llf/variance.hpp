#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "llf/dataset.hpp"
#include "llf/forest.hpp"
#include "llf/locallinear.hpp"

namespace llf {

// ============================================================================
// Scores
// ============================================================================

// Per-row score residuals Gamma_i = (zeta . Delta_i) * (Y_i - Delta_i (mu,
// theta)), evaluated at the fitted coefficients.  Defined for every training
// row, not just the fit's support: rows outside it get the same formula with
// their own centered covariates.
inline Eigen::VectorXd score_residuals(const Dataset& data,
                                       const LocalDesign& design,
                                       const LocalFit& fit,
                                       const Eigen::VectorXd& responses) {
  const int n = data.n();
  const int q = static_cast<int>(design.features.size());
  if (responses.size() != n)
    throw SchemaError("responses length does not match dataset rows");
  Eigen::VectorXd gamma_scores(n);
  Eigen::VectorXd delta_i(q + 1);
  for (int i = 0; i < n; ++i) {
    delta_i(0) = 1.0;
    for (int j = 0; j < q; ++j)
      delta_i(j + 1) =
          data.features(i, design.features[static_cast<std::size_t>(j)]) -
          design.x0(design.features[static_cast<std::size_t>(j)]);
    double modulation = fit.zeta.dot(delta_i);
    double fitted = fit.mu_hat + delta_i.tail(q).dot(fit.theta_hat);
    gamma_scores(i) = modulation * (responses(i) - fitted);
  }
  return gamma_scores;
}

// ============================================================================
// Bootstrap of little bags
// ============================================================================

struct VarianceEstimate {
  double sigma2 = 0.0;
  int groups_used = 0;
  double between_var = 0.0;
  double within_var = 0.0;
  bool truncated = false;  // bias correction went negative and was clipped
};

// Group-level half-sample variance with a within-group Monte Carlo
// correction: sigma2 = max(0, Var_between(Psi_g) - Var_within / ell).
// Psi_g averages, over the group's trees, the mean of Gamma over the
// tree's leaf members at x0.  Trees whose leaf is empty (or which use
// `excluded_row`, for out-of-bag intervals) are skipped.
inline VarianceEstimate little_bags_variance(const Forest& forest,
                                             const Eigen::VectorXd& gamma_scores,
                                             const Eigen::VectorXd& x0,
                                             int excluded_row = -1) {
  if (forest.config.bag_group_size < 2)
    throw ConfigError("variance estimation needs bag_group_size >= 2");
  if (forest.num_groups() < 2)
    throw ConfigError("variance estimation needs at least 2 little-bag groups");
  if (x0.size() != forest.num_features)
    throw SchemaError("test point dimension does not match forest");
  if (gamma_scores.size() != forest.num_rows)
    throw SchemaError("score vector length does not match training rows");

  std::vector<double> group_means;
  group_means.reserve(static_cast<std::size_t>(forest.num_groups()));
  double within_sum = 0.0;
  int within_groups = 0;
  const int ell = forest.config.bag_group_size;

  for (int g = 0; g < forest.num_groups(); ++g) {
    std::vector<double> tree_values;
    tree_values.reserve(static_cast<std::size_t>(ell));
    for (int t = g * ell; t < (g + 1) * ell; ++t) {
      const Tree& tree = forest.trees[static_cast<std::size_t>(t)];
      if (excluded_row >= 0 && tree.uses_point(excluded_row)) continue;
      const TreeNode& leaf =
          tree.nodes[static_cast<std::size_t>(tree.find_leaf(x0))];
      if (leaf.member_indices.empty()) continue;
      double sum = 0.0;
      for (int row : leaf.member_indices) sum += gamma_scores(row);
      tree_values.push_back(sum / static_cast<double>(leaf.member_indices.size()));
    }
    if (tree_values.empty()) continue;
    double mean = 0.0;
    for (double v : tree_values) mean += v;
    mean /= static_cast<double>(tree_values.size());
    group_means.push_back(mean);
    if (tree_values.size() >= 2) {
      double ss = 0.0;
      for (double v : tree_values) ss += (v - mean) * (v - mean);
      within_sum += ss / static_cast<double>(tree_values.size() - 1);
      ++within_groups;
    }
  }

  if (group_means.size() < 2)
    throw SizeError("fewer than 2 little-bag groups contribute at this point");

  double grand = 0.0;
  for (double v : group_means) grand += v;
  grand /= static_cast<double>(group_means.size());
  double between = 0.0;
  for (double v : group_means) between += (v - grand) * (v - grand);
  between /= static_cast<double>(group_means.size() - 1);
  double within = within_groups > 0 ? within_sum / within_groups : 0.0;

  VarianceEstimate est;
  est.groups_used = static_cast<int>(group_means.size());
  est.between_var = between;
  est.within_var = within;
  double corrected = between - within / ell;
  est.truncated = corrected < 0.0;
  est.sigma2 = est.truncated ? 0.0 : corrected;
  return est;
}

// ============================================================================
// Intervals
// ============================================================================

inline double normal_quantile(double p) {
  if (!(p > 0.0) || !(p < 1.0))
    throw ConfigError("quantile probability must lie strictly between 0 and 1");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

inline std::pair<double, double> confidence_interval(double mu_hat, double sigma2,
                                                     double level) {
  if (!(level > 0.0) || !(level < 1.0))
    throw ConfigError("confidence level must lie strictly between 0 and 1");
  if (sigma2 < 0.0) throw ConfigError("sigma2 must be nonnegative");
  double z = normal_quantile(0.5 * (1.0 + level));
  double half_width = z * std::sqrt(sigma2);
  return {mu_hat - half_width, mu_hat + half_width};
}

// ============================================================================
// Prediction with interval
// ============================================================================

struct PredictionResult {
  double mu_hat = 0.0;
  double sigma2 = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

inline PredictionResult predict_with_interval(
    const Forest& forest, const Dataset& data, const Eigen::VectorXd& x0,
    double lambda, const std::vector<int>& selected_features, double level,
    int excluded_row = -1) {
  WeightVector weights = excluded_row >= 0
                             ? forest_weights_oob(forest, x0, excluded_row)
                             : forest_weights(forest, x0);
  LocalDesign design = build_design(data, weights, x0, selected_features, lambda);
  LocalFit fit = solve_local_ridge(design, data.responses);
  Eigen::VectorXd gamma_scores =
      score_residuals(data, design, fit, data.responses);
  VarianceEstimate var =
      little_bags_variance(forest, gamma_scores, x0, excluded_row);
  PredictionResult result;
  result.mu_hat = fit.mu_hat;
  result.sigma2 = var.sigma2;
  std::tie(result.lo, result.hi) =
      confidence_interval(fit.mu_hat, var.sigma2, level);
  return result;
}

}  // namespace llf
