#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "llf/dataset.hpp"
#include "llf/errors.hpp"
#include "llf/weights.hpp"

namespace llf {

// ============================================================================
// Local ridge design and fit
// ============================================================================

// Weighted regression problem at a test point: rows are the training
// indices with positive kernel weight, columns are an intercept plus the
// selected features centered at x0.  The ridge penalty never touches the
// intercept.
struct LocalDesign {
  Eigen::MatrixXd delta;         // n_eff x (q+1), column 0 is all ones
  Eigen::VectorXd alpha;         // n_eff kernel weights
  std::vector<int> support;      // training rows, aligned with delta rows
  std::vector<int> features;     // selected feature indices (into the dataset)
  Eigen::VectorXd x0;            // full d-vector
  double lambda = 0.0;
};

struct LocalFit {
  double mu_hat = 0.0;
  Eigen::VectorXd theta_hat;  // q slopes
  Eigen::MatrixXd m_lambda;   // (q+1)x(q+1) curvature Delta' A Delta + lambda J
  Eigen::VectorXd zeta;       // first row of M_lambda^{-1} (as a column)
  Eigen::VectorXd gamma;      // n_eff modulation factors zeta . Delta_i
  Eigen::VectorXd alpha;      // copy of the design weights
  std::vector<int> support;   // copy of the design support
};

inline LocalDesign build_design(const Dataset& data, const WeightVector& weights,
                                const Eigen::VectorXd& x0,
                                const std::vector<int>& selected_features,
                                double lambda) {
  if (x0.size() != data.d())
    throw SchemaError("test point dimension does not match dataset");
  if (selected_features.empty())
    throw ConfigError("selected feature set must not be empty");
  for (int f : selected_features)
    if (f < 0 || f >= data.d())
      throw SchemaError("selected feature index " + std::to_string(f) +
                        " out of range");
  if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
  if (weights.entries.empty())
    throw SizeError("no neighbors: weight vector has empty support");

  const int n_eff = static_cast<int>(weights.entries.size());
  const int q = static_cast<int>(selected_features.size());
  LocalDesign design;
  design.delta.resize(n_eff, q + 1);
  design.alpha.resize(n_eff);
  design.support.reserve(static_cast<std::size_t>(n_eff));
  design.features = selected_features;
  design.x0 = x0;
  design.lambda = lambda;
  for (int k = 0; k < n_eff; ++k) {
    const auto& [row, w] = weights.entries[static_cast<std::size_t>(k)];
    design.support.push_back(row);
    design.alpha(k) = w;
    design.delta(k, 0) = 1.0;
    for (int j = 0; j < q; ++j)
      design.delta(k, j + 1) =
          data.features(row, selected_features[static_cast<std::size_t>(j)]) -
          x0(selected_features[static_cast<std::size_t>(j)]);
  }
  return design;
}

// Solves (Delta' A Delta + lambda J) (mu, theta) = Delta' A Y by symmetric
// factorization.  `responses` is the full-length training response vector;
// rows are gathered through the design's support.
inline LocalFit solve_local_ridge(const LocalDesign& design,
                                  const Eigen::VectorXd& responses) {
  const int n_eff = static_cast<int>(design.delta.rows());
  const int q1 = static_cast<int>(design.delta.cols());
  Eigen::VectorXd y(n_eff);
  for (int k = 0; k < n_eff; ++k) {
    int row = design.support[static_cast<std::size_t>(k)];
    if (row < 0 || row >= responses.size())
      throw SchemaError("design support row out of range of responses");
    y(k) = responses(row);
  }

  Eigen::MatrixXd weighted = design.alpha.asDiagonal() * design.delta;
  Eigen::MatrixXd m = design.delta.transpose() * weighted;
  for (int j = 1; j < q1; ++j) m(j, j) += design.lambda;
  Eigen::VectorXd rhs = weighted.transpose() * y;

  auto try_solve = [&](const Eigen::MatrixXd& mat, const Eigen::VectorXd& b,
                       Eigen::VectorXd& out) {
    out = mat.ldlt().solve(b);
    return out.allFinite() &&
           (mat * out - b).norm() <= 1e-10 * (b.norm() + 1.0);
  };

  Eigen::VectorXd coef;
  Eigen::VectorXd zeta;
  Eigen::VectorXd e1 = Eigen::VectorXd::Zero(q1);
  e1(0) = 1.0;
  bool ok = try_solve(m, rhs, coef) && try_solve(m, e1, zeta);
  if (!ok) {
    if (design.lambda == 0.0)
      throw RankError(
          "local design is singular at lambda = 0; supply lambda > 0");
    Eigen::MatrixXd bumped = m;
    bumped.diagonal().array() += 1e-12 * (1.0 + m.trace());
    if (!try_solve(bumped, rhs, coef) || !try_solve(bumped, e1, zeta))
      throw RankError("local ridge system could not be solved");
  }

  LocalFit fit;
  fit.mu_hat = coef(0);
  fit.theta_hat = coef.tail(q1 - 1);
  fit.m_lambda = std::move(m);
  fit.zeta = std::move(zeta);
  fit.gamma = design.delta * fit.zeta;
  fit.alpha = design.alpha;
  fit.support = design.support;
  return fit;
}

// Effective regression weights w_i = gamma_i * alpha_i.  They sum to 1
// because the intercept is unpenalized; with lambda = 0 they also satisfy
// sum_i w_i (X_i - x0) = 0 over the selected features.
inline Eigen::VectorXd modulated_weights(const LocalFit& fit) {
  return fit.gamma.cwiseProduct(fit.alpha);
}

// ============================================================================
// Prediction
// ============================================================================

inline double predict_from_weights(const Dataset& data, const WeightVector& weights,
                                   const Eigen::VectorXd& x0, double lambda,
                                   const std::vector<int>& selected_features) {
  LocalDesign design = build_design(data, weights, x0, selected_features, lambda);
  return solve_local_ridge(design, data.responses).mu_hat;
}

// Local linear forest prediction at x0.
inline double predict(const Forest& forest, const Dataset& data,
                      const Eigen::VectorXd& x0, double lambda,
                      const std::vector<int>& selected_features) {
  return predict_from_weights(data, forest_weights(forest, x0), x0, lambda,
                              selected_features);
}

// Out-of-bag prediction at training row `row`: trees whose subsamples
// include the row are excluded, so its own response never informs the fit.
inline double predict_oob(const Forest& forest, const Dataset& data, int row,
                          double lambda,
                          const std::vector<int>& selected_features) {
  Eigen::VectorXd x0 = data.features.row(row);
  return predict_from_weights(data, forest_weights_oob(forest, x0, row), x0,
                              lambda, selected_features);
}

inline std::vector<int> all_features(int d) {
  std::vector<int> f(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) f[static_cast<std::size_t>(j)] = j;
  return f;
}

}  // namespace llf
