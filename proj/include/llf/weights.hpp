#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "llf/errors.hpp"
#include "llf/forest.hpp"

namespace llf {

// Sparse adaptive kernel at a test point: alpha_i is the fraction of trees
// (adjusted for skipped ones) whose leaf at x0 contains training row i,
// divided by that leaf's size.
struct WeightVector {
  std::vector<std::pair<int, double>> entries;  // (row, alpha), sorted by row
  Eigen::VectorXd test_point;
  int contributing_trees = 0;

  double sum() const {
    double s = 0.0;
    for (const auto& [row, w] : entries) s += w;
    return s;
  }
};

namespace detail {

template <typename TreeFilter>  // callable(const Tree&) -> bool
WeightVector accumulate_weights(const Forest& forest, const Eigen::VectorXd& x0,
                                const TreeFilter& use_tree) {
  if (x0.size() != forest.num_features)
    throw SchemaError("test point has " + std::to_string(x0.size()) +
                      " features, forest was grown with " +
                      std::to_string(forest.num_features));
  std::vector<double> dense(static_cast<std::size_t>(forest.num_rows), 0.0);
  std::vector<int> touched;
  int contributing = 0;
  for (const Tree& tree : forest.trees) {
    if (!use_tree(tree)) continue;
    const TreeNode& leaf = tree.nodes[static_cast<std::size_t>(tree.find_leaf(x0))];
    if (leaf.member_indices.empty()) continue;  // tree has nothing to say here
    ++contributing;
    double w = 1.0 / static_cast<double>(leaf.member_indices.size());
    for (int row : leaf.member_indices) {
      if (dense[static_cast<std::size_t>(row)] == 0.0) touched.push_back(row);
      dense[static_cast<std::size_t>(row)] += w;
    }
  }
  if (contributing == 0)
    throw SizeError("no trees contribute weights at this test point");
  WeightVector result;
  result.test_point = x0;
  result.contributing_trees = contributing;
  std::sort(touched.begin(), touched.end());
  result.entries.reserve(touched.size());
  for (int row : touched)
    result.entries.emplace_back(row, dense[static_cast<std::size_t>(row)] / contributing);
  return result;
}

}  // namespace detail

// Kernel weights alpha_i(x0) over the training rows.  Only I-sample leaf
// members receive weight; weights are nonnegative and sum to 1.
inline WeightVector forest_weights(const Forest& forest, const Eigen::VectorXd& x0) {
  return detail::accumulate_weights(forest, x0, [](const Tree&) { return true; });
}

// Out-of-bag variant: trees whose subsamples contain `excluded_row` are
// skipped, so the weights never see that row's own response.  Used when x0
// is the training row itself.
inline WeightVector forest_weights_oob(const Forest& forest,
                                       const Eigen::VectorXd& x0,
                                       int excluded_row) {
  return detail::accumulate_weights(forest, x0, [excluded_row](const Tree& t) {
    return !t.uses_point(excluded_row);
  });
}

}  // namespace llf
