#pragma once

#include <fstream>
#include <json.hpp>
#include <string>

#include "llf/causal.hpp"
#include "llf/dataset.hpp"
#include "llf/errors.hpp"
#include "llf/forest.hpp"
#include "llf/model.hpp"

namespace llf {

inline constexpr int kModelFormatVersion = 1;

// ============================================================================
// Forest <-> JSON
// ============================================================================

inline nlohmann::json config_to_json(const ForestConfig& config) {
  return {{"num_trees", config.num_trees},
          {"subsample_fraction", config.subsample_fraction},
          {"honesty_fraction", config.honesty_fraction},
          {"mtry", config.mtry},
          {"min_leaf_size", config.min_leaf_size},
          {"balance_omega", config.balance_omega},
          {"split_rule", to_string(config.split_rule)},
          {"lambda_split", config.lambda_split},
          {"residual_cutoff", config.residual_cutoff},
          {"bag_group_size", config.bag_group_size},
          {"seed", config.seed}};
}

inline ForestConfig config_from_json(const nlohmann::json& j) {
  ForestConfig config;
  config.num_trees = j.at("num_trees").get<int>();
  config.subsample_fraction = j.at("subsample_fraction").get<double>();
  config.honesty_fraction = j.at("honesty_fraction").get<double>();
  config.mtry = j.at("mtry").get<int>();
  config.min_leaf_size = j.at("min_leaf_size").get<int>();
  config.balance_omega = j.at("balance_omega").get<double>();
  config.split_rule = split_rule_from_string(j.at("split_rule").get<std::string>());
  config.lambda_split = j.at("lambda_split").get<double>();
  config.residual_cutoff = j.at("residual_cutoff").get<int>();
  config.bag_group_size = j.at("bag_group_size").get<int>();
  config.seed = j.at("seed").get<std::uint64_t>();
  return config;
}

inline nlohmann::json forest_to_json(const Forest& forest) {
  nlohmann::json trees = nlohmann::json::array();
  for (const Tree& tree : forest.trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const TreeNode& node : tree.nodes) {
      if (node.is_leaf())
        nodes.push_back({{"m", node.member_indices}});
      else
        nodes.push_back({{"v", node.split_variable},
                         {"t", node.split_threshold},
                         {"l", node.left_child},
                         {"r", node.right_child}});
    }
    trees.push_back({{"group_id", tree.group_id},
                     {"j", tree.j_indices},
                     {"i", tree.i_indices},
                     {"nodes", std::move(nodes)}});
  }
  return {{"config", config_to_json(forest.config)},
          {"num_rows", forest.num_rows},
          {"num_features", forest.num_features},
          {"half_samples", forest.half_samples},
          {"trees", std::move(trees)}};
}

inline Forest forest_from_json(const nlohmann::json& j) {
  Forest forest;
  forest.config = config_from_json(j.at("config"));
  forest.num_rows = j.at("num_rows").get<int>();
  forest.num_features = j.at("num_features").get<int>();
  forest.half_samples =
      j.at("half_samples").get<std::vector<std::vector<int>>>();
  for (const auto& tj : j.at("trees")) {
    Tree tree;
    tree.group_id = tj.at("group_id").get<int>();
    tree.j_indices = tj.at("j").get<std::vector<int>>();
    tree.i_indices = tj.at("i").get<std::vector<int>>();
    for (const auto& nj : tj.at("nodes")) {
      TreeNode node;
      if (nj.contains("m")) {
        node.member_indices = nj.at("m").get<std::vector<int>>();
      } else {
        node.split_variable = nj.at("v").get<int>();
        node.split_threshold = nj.at("t").get<double>();
        node.left_child = nj.at("l").get<int>();
        node.right_child = nj.at("r").get<int>();
      }
      tree.nodes.push_back(std::move(node));
    }
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

// ============================================================================
// Model files
// ============================================================================

namespace detail {

inline std::string fingerprint_hex(const Dataset& data) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(data.fingerprint()));
  return buf;
}

inline nlohmann::json model_envelope(const std::string& kind,
                                     const Forest& forest,
                                     const Dataset& train) {
  nlohmann::json j = forest_to_json(forest);
  j["format_version"] = kModelFormatVersion;
  j["kind"] = kind;
  j["feature_names"] = train.feature_names;
  j["response_name"] = train.response_name;
  if (!train.treatment_name.empty())
    j["treatment_name"] = train.treatment_name;
  j["provenance"] = {{"seed", forest.config.seed},
                     {"data_fingerprint", fingerprint_hex(train)}};
  return j;
}

inline nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return j;
}

inline void check_envelope(const nlohmann::json& j, const std::string& kind,
                           const Dataset& train) {
  int version = j.value("format_version", -1);
  if (version != kModelFormatVersion)
    throw ParseError("unsupported model format version " +
                     std::to_string(version));
  std::string actual_kind = j.value("kind", "");
  if (actual_kind != kind)
    throw SchemaError("model kind is '" + actual_kind + "', expected '" + kind +
                      "'");
  std::string fp = j.at("provenance").value("data_fingerprint", "");
  if (fp != fingerprint_hex(train))
    throw SchemaError(
        "data fingerprint mismatch: the model was fit on different training "
        "data");
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write model file '" + path + "'");
  out << j.dump(1, '\t') << '\n';
}

}  // namespace detail

inline void save_regression_model(const std::string& path,
                                  const RegressionModel& model,
                                  const Dataset& train) {
  nlohmann::json j = detail::model_envelope("regression", model.forest, train);
  j["regression"] = {{"selected_features", model.selected_features},
                     {"lambda_predict", model.lambda_predict},
                     {"plain_kernel", model.plain_kernel}};
  detail::write_json_file(path, j);
}

// Loads a regression model and verifies it was fit on `train` (content
// fingerprint), since prediction re-reads training covariates and responses.
inline RegressionModel load_regression_model(const std::string& path,
                                             const Dataset& train) {
  nlohmann::json j = detail::load_json_file(path);
  detail::check_envelope(j, "regression", train);
  RegressionModel model;
  model.forest = forest_from_json(j);
  const auto& r = j.at("regression");
  model.selected_features = r.at("selected_features").get<std::vector<int>>();
  model.lambda_predict = r.at("lambda_predict").get<double>();
  model.plain_kernel = r.at("plain_kernel").get<bool>();
  return model;
}

inline void save_causal_model(const std::string& path, const CausalModel& model,
                              const Dataset& train) {
  nlohmann::json j = detail::model_envelope("causal", model.forest, train);
  j["causal"] = {
      {"m_hat", std::vector<double>(model.nuisances.m_hat.data(),
                                    model.nuisances.m_hat.data() +
                                        model.nuisances.m_hat.size())},
      {"e_hat", std::vector<double>(model.nuisances.e_hat.data(),
                                    model.nuisances.e_hat.data() +
                                        model.nuisances.e_hat.size())},
      {"lambda_tau", model.lambda_tau},
      {"lambda_a", model.lambda_a},
      {"local_linear", model.local_linear}};
  detail::write_json_file(path, j);
}

inline CausalModel load_causal_model(const std::string& path,
                                     const Dataset& train) {
  nlohmann::json j = detail::load_json_file(path);
  detail::check_envelope(j, "causal", train);
  CausalModel model;
  model.forest = forest_from_json(j);
  const auto& c = j.at("causal");
  std::vector<double> m_hat = c.at("m_hat").get<std::vector<double>>();
  std::vector<double> e_hat = c.at("e_hat").get<std::vector<double>>();
  model.nuisances.m_hat =
      Eigen::Map<Eigen::VectorXd>(m_hat.data(), static_cast<Eigen::Index>(m_hat.size()));
  model.nuisances.e_hat =
      Eigen::Map<Eigen::VectorXd>(e_hat.data(), static_cast<Eigen::Index>(e_hat.size()));
  model.lambda_tau = c.at("lambda_tau").get<double>();
  model.lambda_a = c.at("lambda_a").get<double>();
  model.local_linear = c.at("local_linear").get<bool>();
  return model;
}

}  // namespace llf
