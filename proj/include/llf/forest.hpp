#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "llf/dataset.hpp"
#include "llf/errors.hpp"
#include "llf/rng.hpp"
#include "llf/threading.hpp"

namespace llf {

// ============================================================================
// Configuration
// ============================================================================

enum class SplitRule { kCart, kRidgeResidual };

inline std::string to_string(SplitRule rule) {
  return rule == SplitRule::kCart ? "cart" : "ridge";
}

inline SplitRule split_rule_from_string(const std::string& s) {
  if (s == "cart") return SplitRule::kCart;
  if (s == "ridge") return SplitRule::kRidgeResidual;
  throw ConfigError("unknown split rule '" + s + "' (expected cart or ridge)");
}

struct ForestConfig {
  int num_trees = 2000;
  double subsample_fraction = 0.5;  // s = ceil(fraction * n)
  double honesty_fraction = 0.5;    // share of each subsample populating leaves
  int mtry = 0;                     // candidate variables per node; 0 = auto
  int min_leaf_size = 5;
  double balance_omega = 0.2;       // each child keeps >= omega of parent rows
  SplitRule split_rule = SplitRule::kRidgeResidual;
  double lambda_split = 0.1;
  int residual_cutoff = 0;          // node size below which beta is inherited; 0 = auto
  int bag_group_size = 5;           // trees per little bag
  std::uint64_t seed = 42;

  // mtry realizes the per-variable split-probability floor: by default half
  // the variables are candidates at every node, and a further 5% of nodes
  // consider exactly one uniformly random variable.
  int resolved_mtry(int d) const {
    if (mtry != 0) return mtry;
    return std::min(d, static_cast<int>(std::ceil(0.5 * d)));
  }

  int resolved_residual_cutoff(int d) const {
    if (residual_cutoff != 0) return residual_cutoff;
    return 10 * (d + 1);
  }

  int subsample_size(int n) const {
    return static_cast<int>(std::ceil(subsample_fraction * n));
  }

  void validate(int n, int d) const {
    if (num_trees < 1) throw ConfigError("num_trees must be positive");
    if (bag_group_size < 1) throw ConfigError("bag_group_size must be positive");
    if (num_trees % bag_group_size != 0)
      throw ConfigError("num_trees (" + std::to_string(num_trees) +
                        ") must be a multiple of bag_group_size (" +
                        std::to_string(bag_group_size) + ")");
    if (!(subsample_fraction > 0.0) || subsample_fraction > 1.0)
      throw ConfigError("subsample_fraction must lie in (0, 1]");
    if (!(honesty_fraction > 0.0) || !(honesty_fraction < 1.0))
      throw ConfigError("honesty_fraction must lie strictly between 0 and 1");
    if (min_leaf_size < 1) throw ConfigError("min_leaf_size must be at least 1");
    if (!(balance_omega > 0.0) || balance_omega > 0.5)
      throw ConfigError("balance_omega must lie in (0, 0.5]");
    if (lambda_split < 0.0) throw ConfigError("lambda_split must be nonnegative");
    if (mtry < 0 || mtry > d)
      throw ConfigError("mtry must lie in [1, " + std::to_string(d) +
                        "] (or 0 for automatic)");
    if (residual_cutoff < 0) throw ConfigError("residual_cutoff must be nonnegative");
    int s = subsample_size(n);
    if (s < 2) throw SizeError("subsample size must be at least 2");
    int half = n / 2;
    if (s > half)
      throw ConfigError(
          "subsample size " + std::to_string(s) + " exceeds the half-sample size " +
          std::to_string(half) + "; reduce subsample_fraction to at most " +
          std::to_string(static_cast<double>(half) / n));
  }
};

// ============================================================================
// Trees
// ============================================================================

struct Split {
  int variable = -1;
  double threshold = 0.0;
};

struct TreeNode {
  int split_variable = -1;  // -1 marks a leaf
  double split_threshold = 0.0;
  int left_child = -1;
  int right_child = -1;
  std::vector<int> member_indices;  // leaf only: rows from the I-sample

  bool is_leaf() const { return split_variable < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // preorder, root at index 0
  std::vector<int> j_indices;   // structure subsample, sorted
  std::vector<int> i_indices;   // leaf-population subsample, sorted
  int group_id = 0;

  template <typename XAt>  // XAt: callable(int feature) -> double
  int find_leaf_impl(const XAt& x) const {
    int node = 0;
    while (!nodes[static_cast<std::size_t>(node)].is_leaf()) {
      const TreeNode& nd = nodes[static_cast<std::size_t>(node)];
      node = x(nd.split_variable) <= nd.split_threshold ? nd.left_child
                                                        : nd.right_child;
    }
    return node;
  }

  int find_leaf(const Eigen::VectorXd& x) const {
    return find_leaf_impl([&x](int j) { return x(j); });
  }

  int find_leaf_row(const Eigen::MatrixXd& features, int row) const {
    return find_leaf_impl([&features, row](int j) { return features(row, j); });
  }

  // True when the row participated in growing this tree (either subsample).
  bool uses_point(int row) const {
    return std::binary_search(j_indices.begin(), j_indices.end(), row) ||
           std::binary_search(i_indices.begin(), i_indices.end(), row);
  }
};

struct Forest {
  std::vector<Tree> trees;
  ForestConfig config;
  std::vector<std::vector<int>> half_samples;  // group_id -> sorted rows
  int num_rows = 0;
  int num_features = 0;

  int num_groups() const { return static_cast<int>(half_samples.size()); }
};

// ============================================================================
// Split search
// ============================================================================

namespace detail {

// Midpoint between adjacent sorted values, nudged so that `lo <= t < hi`
// holds in floating point (routing uses x <= t).
inline double split_midpoint(double lo, double hi) {
  double t = lo + 0.5 * (hi - lo);
  if (!(t < hi)) t = lo;
  if (t < lo) t = lo;
  return t;
}

}  // namespace detail

// Best SSE split over the given rows.  `y` is aligned with `rows` (y[k]
// belongs to rows[k]).  Both children must keep at least
// max(ceil(omega * |rows|), min_leaf) rows.  Ties (score differences within
// 1e-8, scaled by the node SSE) resolve to the lowest variable index, then
// the lowest threshold.  Returns nothing when no valid split improves on
// the parent.
inline std::optional<Split> best_cart_split(const Eigen::MatrixXd& features,
                                            const std::vector<int>& rows,
                                            const std::vector<double>& y,
                                            const std::vector<int>& candidate_vars,
                                            double omega, int min_leaf) {
  const int m = static_cast<int>(rows.size());
  if (m < 2) return std::nullopt;
  double sum_y = 0.0, sum_y2 = 0.0;
  for (double v : y) {
    sum_y += v;
    sum_y2 += v * v;
  }
  const double parent_sse = sum_y2 - sum_y * sum_y / m;
  const double tie_eps = 1e-8 * (1.0 + std::abs(parent_sse));
  const int min_child =
      std::max({static_cast<int>(std::ceil(omega * m)), min_leaf, 1});
  if (2 * min_child > m) return std::nullopt;

  std::vector<int> vars = candidate_vars;
  std::sort(vars.begin(), vars.end());
  vars.erase(std::unique(vars.begin(), vars.end()), vars.end());

  std::optional<Split> best;
  double best_score = parent_sse;
  std::vector<std::pair<double, double>> xy(static_cast<std::size_t>(m));
  for (int var : vars) {
    for (int k = 0; k < m; ++k)
      xy[static_cast<std::size_t>(k)] = {features(rows[static_cast<std::size_t>(k)], var),
                                         y[static_cast<std::size_t>(k)]};
    std::sort(xy.begin(), xy.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    double left_sum = 0.0;
    for (int p = 0; p + 1 < m; ++p) {
      left_sum += xy[static_cast<std::size_t>(p)].second;
      int nl = p + 1;
      int nr = m - nl;
      if (nr < min_child) break;
      if (nl < min_child) continue;
      if (!(xy[static_cast<std::size_t>(p)].first < xy[static_cast<std::size_t>(p + 1)].first))
        continue;
      double right_sum = sum_y - left_sum;
      double score = sum_y2 - (left_sum * left_sum / nl + right_sum * right_sum / nr);
      if (score < best_score - tie_eps) {
        best_score = score;
        best = Split{var, detail::split_midpoint(xy[static_cast<std::size_t>(p)].first,
                                                 xy[static_cast<std::size_t>(p + 1)].first)};
      }
    }
  }
  return best;
}

// In-node ridge fit with unpenalized intercept: minimizes
// sum_i (y_i - b0 - x_i' b)^2 + lambda * |b|^2 over the given rows.
// Returns the (d+1)-vector (b0, b).  Falls back to a pure-intercept fit if
// the system is numerically unsolvable (possible at lambda = 0 on
// degenerate nodes).
inline Eigen::VectorXd fit_node_ridge(const Eigen::MatrixXd& features,
                                      const std::vector<int>& rows,
                                      const std::vector<double>& y,
                                      double lambda) {
  const int m = static_cast<int>(rows.size());
  const int d = static_cast<int>(features.cols());
  Eigen::MatrixXd design(m, d + 1);
  Eigen::VectorXd rhs_y(m);
  for (int k = 0; k < m; ++k) {
    design(k, 0) = 1.0;
    design.row(k).tail(d) = features.row(rows[static_cast<std::size_t>(k)]);
    rhs_y(k) = y[static_cast<std::size_t>(k)];
  }
  Eigen::MatrixXd normal = design.transpose() * design;
  for (int j = 1; j <= d; ++j) normal(j, j) += lambda;
  Eigen::VectorXd rhs = design.transpose() * rhs_y;
  Eigen::VectorXd beta = normal.ldlt().solve(rhs);
  double rhs_norm = rhs.norm();
  if (!beta.allFinite() ||
      (normal * beta - rhs).norm() > 1e-6 * (rhs_norm + 1.0)) {
    double jitter = std::max(1e-12, 1e-12 * normal.trace());
    Eigen::MatrixXd bumped = normal;
    bumped.diagonal().array() += jitter;
    beta = bumped.ldlt().solve(rhs);
    if (!beta.allFinite() ||
        (bumped * beta - rhs).norm() > 1e-6 * (rhs_norm + 1.0)) {
      beta = Eigen::VectorXd::Zero(d + 1);
      beta(0) = rhs_y.mean();
    }
  }
  return beta;
}

struct ResidualSplitResult {
  std::optional<Split> split;
  Eigen::VectorXd beta;  // coefficients used for this node's residuals
  bool refit = false;    // beta was fit here rather than inherited
};

// Ridge-residual split: fit (or inherit) an in-node ridge regression, then
// CART on its residuals.  Nodes smaller than `residual_cutoff` reuse
// `parent_beta` instead of refitting; the returned beta is what children
// should inherit.
inline ResidualSplitResult best_residual_split(
    const Eigen::MatrixXd& features, const std::vector<int>& rows,
    const std::vector<double>& y, const std::vector<int>& candidate_vars,
    double lambda_split, const Eigen::VectorXd* parent_beta,
    int residual_cutoff, double omega, int min_leaf) {
  const int m = static_cast<int>(rows.size());
  const int d = static_cast<int>(features.cols());
  ResidualSplitResult result;
  result.refit = m >= residual_cutoff || parent_beta == nullptr;
  result.beta = result.refit ? fit_node_ridge(features, rows, y, lambda_split)
                             : *parent_beta;
  std::vector<double> residuals(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) {
    double fitted = result.beta(0) +
                    features.row(rows[static_cast<std::size_t>(k)]).dot(
                        result.beta.tail(d));
    residuals[static_cast<std::size_t>(k)] = y[static_cast<std::size_t>(k)] - fitted;
  }
  result.split =
      best_cart_split(features, rows, residuals, candidate_vars, omega, min_leaf);
  return result;
}

// ============================================================================
// Growth
// ============================================================================

// Computes the outcome vector a node's split search should target, aligned
// with the given rows.  Regression passes responses through; causal forests
// recompute a pseudo-outcome per node.
using NodeOutcomeFn =
    std::function<void(const std::vector<int>& rows, std::vector<double>& out)>;

namespace detail {

struct BuildNode {
  int split_variable = -1;
  double split_threshold = 0.0;
  int left_child = -1;
  int right_child = -1;
  std::vector<int> member_indices;
};

class TreeGrower {
 public:
  TreeGrower(const Eigen::MatrixXd& features, const ForestConfig& cfg,
             const NodeOutcomeFn& outcome, SeededRng& rng)
      : features_(features),
        cfg_(cfg),
        outcome_(outcome),
        rng_(rng),
        d_(static_cast<int>(features.cols())),
        mtry_(cfg.resolved_mtry(static_cast<int>(features.cols()))),
        cutoff_(cfg.resolved_residual_cutoff(static_cast<int>(features.cols()))) {}

  Tree grow(std::vector<int> j_rows, std::vector<int> i_rows, int group_id) {
    arena_.clear();
    int root = grow_node(j_rows, nullptr);
    route_members(root, i_rows);
    Tree tree;
    tree.group_id = group_id;
    tree.j_indices = std::move(j_rows);
    tree.i_indices = std::move(i_rows);
    emit_pruned(prune(root), tree.nodes);
    return tree;
  }

 private:
  std::vector<int> draw_candidates() {
    if (rng_.uniform01() < 0.05) return {rng_.uniform_int(d_)};
    return rng_.sample_without_replacement(d_, mtry_);
  }

  int grow_node(const std::vector<int>& rows, const Eigen::VectorXd* parent_beta) {
    int idx = static_cast<int>(arena_.size());
    arena_.emplace_back();
    if (static_cast<int>(rows.size()) < 2 * cfg_.min_leaf_size) return idx;

    std::vector<double> y;
    outcome_(rows, y);
    std::vector<int> candidates = draw_candidates();

    std::optional<Split> split;
    Eigen::VectorXd child_beta;
    bool have_beta = false;
    if (cfg_.split_rule == SplitRule::kRidgeResidual) {
      ResidualSplitResult rr = best_residual_split(
          features_, rows, y, candidates, cfg_.lambda_split, parent_beta,
          cutoff_, cfg_.balance_omega, cfg_.min_leaf_size);
      split = rr.split;
      child_beta = std::move(rr.beta);
      have_beta = true;
    } else {
      split = best_cart_split(features_, rows, y, candidates, cfg_.balance_omega,
                              cfg_.min_leaf_size);
    }
    if (!split) return idx;

    std::vector<int> left_rows, right_rows;
    left_rows.reserve(rows.size());
    right_rows.reserve(rows.size());
    for (int r : rows) {
      if (features_(r, split->variable) <= split->threshold)
        left_rows.push_back(r);
      else
        right_rows.push_back(r);
    }
    const Eigen::VectorXd* inherit = have_beta ? &child_beta : nullptr;
    int left = grow_node(left_rows, inherit);
    int right = grow_node(right_rows, inherit);
    arena_[static_cast<std::size_t>(idx)].split_variable = split->variable;
    arena_[static_cast<std::size_t>(idx)].split_threshold = split->threshold;
    arena_[static_cast<std::size_t>(idx)].left_child = left;
    arena_[static_cast<std::size_t>(idx)].right_child = right;
    return idx;
  }

  void route_members(int root, const std::vector<int>& i_rows) {
    for (int r : i_rows) {
      int node = root;
      while (arena_[static_cast<std::size_t>(node)].split_variable >= 0) {
        const BuildNode& nd = arena_[static_cast<std::size_t>(node)];
        node = features_(r, nd.split_variable) <= nd.split_threshold
                   ? nd.left_child
                   : nd.right_child;
      }
      arena_[static_cast<std::size_t>(node)].member_indices.push_back(r);
    }
  }

  // Drops leaves that received no I-sample points; an internal node with a
  // single surviving child collapses into that child.  Returns the arena
  // index of the surviving subtree root, or -1.
  int prune(int idx) {
    BuildNode& nd = arena_[static_cast<std::size_t>(idx)];
    if (nd.split_variable < 0) return nd.member_indices.empty() ? -1 : idx;
    int left = prune(nd.left_child);
    int right = prune(nd.right_child);
    if (left < 0) return right;
    if (right < 0) return left;
    nd.left_child = left;
    nd.right_child = right;
    return idx;
  }

  int emit_pruned(int idx, std::vector<TreeNode>& out) {
    if (idx < 0) {
      // Every I point routes to some leaf, so a fully pruned tree can only
      // happen with an empty I-sample, which the subsampler forbids.
      out.emplace_back();
      return static_cast<int>(out.size()) - 1;
    }
    const BuildNode& nd = arena_[static_cast<std::size_t>(idx)];
    int self = static_cast<int>(out.size());
    out.emplace_back();
    if (nd.split_variable < 0) {
      out[static_cast<std::size_t>(self)].member_indices = nd.member_indices;
      std::sort(out[static_cast<std::size_t>(self)].member_indices.begin(),
                out[static_cast<std::size_t>(self)].member_indices.end());
    } else {
      int left = emit_pruned(nd.left_child, out);
      int right = emit_pruned(nd.right_child, out);
      out[static_cast<std::size_t>(self)].split_variable = nd.split_variable;
      out[static_cast<std::size_t>(self)].split_threshold = nd.split_threshold;
      out[static_cast<std::size_t>(self)].left_child = left;
      out[static_cast<std::size_t>(self)].right_child = right;
    }
    return self;
  }

  const Eigen::MatrixXd& features_;
  const ForestConfig& cfg_;
  const NodeOutcomeFn& outcome_;
  SeededRng& rng_;
  int d_;
  int mtry_;
  int cutoff_;
  std::vector<BuildNode> arena_;
};

}  // namespace detail

// Grows an honest forest whose per-node split targets come from `outcome`.
// Trees are organized into little bags of `bag_group_size` trees; each bag
// subsamples within its own half of the data so group-level aggregates
// behave like half-sample bootstrap replicates.
inline Forest grow_forest_with_outcome(const Dataset& data,
                                       const ForestConfig& config,
                                       const NodeOutcomeFn& outcome,
                                       int num_threads = 0) {
  const int n = data.n();
  const int d = data.d();
  config.validate(n, d);
  const int s = config.subsample_size(n);
  const int num_groups = config.num_trees / config.bag_group_size;
  const int half = n / 2;

  Forest forest;
  forest.config = config;
  forest.num_rows = n;
  forest.num_features = d;
  forest.half_samples.resize(static_cast<std::size_t>(num_groups));
  for (int g = 0; g < num_groups; ++g) {
    SeededRng rng(config.seed, kStreamGroupBase + static_cast<std::uint64_t>(g));
    auto hs = rng.sample_without_replacement(n, half);
    std::sort(hs.begin(), hs.end());
    forest.half_samples[static_cast<std::size_t>(g)] = std::move(hs);
  }

  forest.trees.resize(static_cast<std::size_t>(config.num_trees));
  parallel_for(config.num_trees, resolve_num_threads(num_threads), [&](int b) {
    int group = b / config.bag_group_size;
    const std::vector<int>& pool = forest.half_samples[static_cast<std::size_t>(group)];
    SeededRng rng(config.seed, static_cast<std::uint64_t>(b));
    auto [j_local, i_local] =
        draw_disjoint_subsamples(static_cast<int>(pool.size()), s,
                                 config.honesty_fraction, rng);
    std::vector<int> j_rows(j_local.size()), i_rows(i_local.size());
    for (std::size_t k = 0; k < j_local.size(); ++k)
      j_rows[k] = pool[static_cast<std::size_t>(j_local[k])];
    for (std::size_t k = 0; k < i_local.size(); ++k)
      i_rows[k] = pool[static_cast<std::size_t>(i_local[k])];
    detail::TreeGrower grower(data.features, config, outcome, rng);
    forest.trees[static_cast<std::size_t>(b)] =
        grower.grow(std::move(j_rows), std::move(i_rows), group);
  });
  return forest;
}

// Grows an honest regression forest.  `responses_override` substitutes a
// different split target (e.g. pseudo-outcomes) for data.responses without
// touching the dataset.
inline Forest grow_forest(const Dataset& data, const ForestConfig& config,
                          const std::optional<Eigen::VectorXd>& responses_override =
                              std::nullopt,
                          int num_threads = 0) {
  if (responses_override &&
      responses_override->size() != static_cast<Eigen::Index>(data.n()))
    throw SchemaError("responses_override length does not match dataset rows");
  const Eigen::VectorXd& y =
      responses_override ? *responses_override : data.responses;
  NodeOutcomeFn outcome = [&y](const std::vector<int>& rows,
                               std::vector<double>& out) {
    out.resize(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k)
      out[k] = y(rows[k]);
  };
  return grow_forest_with_outcome(data, config, outcome, num_threads);
}

}  // namespace llf
