#include <doctest.h>

#include <Eigen/Dense>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include <llf/causal.hpp>
#include <llf/model.hpp>
#include <llf/model_io.hpp>
#include <llf/simbench.hpp>

#include "test_support.hpp"

namespace {

llf::Dataset regression_data() {
  return testsup::random_dataset(
      120, 3, 301,
      [](const Eigen::VectorXd& x) { return 4.0 * x(0) - 2.0 * x(2); }, 0.3);
}

llf::RegressionModel small_regression_model(const llf::Dataset& data) {
  llf::ForestConfig config;
  // Enough bag groups that every probed row keeps an out-of-bag view.
  config.num_trees = 100;
  config.seed = 302;
  llf::RegressionFitOptions options;
  options.fixed_lambda = 0.2;
  return llf::fit_regression_model(data, config, options);
}

}  // namespace

TEST_CASE("regression models survive a save/load round trip") {
  llf::Dataset data = regression_data();
  llf::RegressionModel model = small_regression_model(data);
  std::string path = testsup::tmp_path("model_roundtrip.json");
  llf::save_regression_model(path, model, data);
  llf::RegressionModel loaded = llf::load_regression_model(path, data);

  CHECK(loaded.selected_features == model.selected_features);
  CHECK(loaded.lambda_predict == model.lambda_predict);
  CHECK(loaded.plain_kernel == model.plain_kernel);
  CHECK(loaded.forest.config.num_trees == model.forest.config.num_trees);
  CHECK(loaded.forest.config.seed == model.forest.config.seed);
  CHECK(loaded.forest.config.lambda_split == model.forest.config.lambda_split);
  CHECK(loaded.forest.num_rows == model.forest.num_rows);
  REQUIRE(loaded.forest.trees.size() == model.forest.trees.size());
  CHECK(testsup::same_forest_structure(loaded.forest, model.forest));

  // Bit-identical predictions, including out-of-bag and intervals.
  for (int i = 0; i < 10; ++i) {
    Eigen::VectorXd x0 = data.features.row(i);
    CHECK(llf::model_predict(loaded, data, x0) ==
          llf::model_predict(model, data, x0));
    llf::PredictionResult a = llf::model_predict_interval(model, data, x0, 0.9, i);
    llf::PredictionResult b = llf::model_predict_interval(loaded, data, x0, 0.9, i);
    CHECK(a.mu_hat == b.mu_hat);
    CHECK(a.sigma2 == b.sigma2);
    CHECK(a.lo == b.lo);
    CHECK(a.hi == b.hi);
  }
}

TEST_CASE("causal models survive a save/load round trip") {
  llf::SimSpec spec;
  spec.design = llf::SimDesign::kCausal1;
  spec.n = 150;
  spec.d = 3;
  spec.seed = 303;
  llf::SeededRng rng(303, llf::kStreamSimBase);
  llf::SimData sim = llf::generate(spec, rng);

  llf::ForestConfig config;
  config.num_trees = 25;
  config.seed = 304;
  llf::NuisanceEstimates nuisances = llf::estimate_nuisances(sim.data, config);
  llf::CausalFitOptions options;
  options.cv_cap = 60;
  llf::CausalModel model = llf::fit_llcf(sim.data, nuisances, config, options);

  std::string path = testsup::tmp_path("causal_roundtrip.json");
  llf::save_causal_model(path, model, sim.data);
  llf::CausalModel loaded = llf::load_causal_model(path, sim.data);

  CHECK(loaded.lambda_tau == model.lambda_tau);
  CHECK(loaded.lambda_a == model.lambda_a);
  CHECK(loaded.local_linear == model.local_linear);
  CHECK((loaded.nuisances.m_hat - model.nuisances.m_hat).norm() == 0.0);
  CHECK((loaded.nuisances.e_hat - model.nuisances.e_hat).norm() == 0.0);
  CHECK(testsup::same_forest_structure(loaded.forest, model.forest));
  for (int i = 0; i < 8; ++i) {
    Eigen::VectorXd x0 = sim.data.features.row(i);
    CHECK(llf::predict_tau(loaded, sim.data, x0) ==
          llf::predict_tau(model, sim.data, x0));
  }
}

TEST_CASE("model files are glued to their kind, version, and dataset") {
  llf::Dataset data = regression_data();
  llf::RegressionModel model = small_regression_model(data);
  std::string path = testsup::tmp_path("model_checks.json");
  llf::save_regression_model(path, model, data);

  SUBCASE("a regression file does not load as a causal model") {
    CHECK_THROWS_AS(llf::load_causal_model(path, data), llf::SchemaError);
  }
  SUBCASE("a bumped format version is refused") {
    nlohmann::json j = nlohmann::json::parse(std::ifstream(path));
    j["format_version"] = llf::kModelFormatVersion + 1;
    std::ofstream(path) << j.dump();
    CHECK_THROWS_AS(llf::load_regression_model(path, data), llf::ParseError);
  }
  SUBCASE("a different training table is refused") {
    llf::Dataset other = regression_data();
    other.responses(0) += 1.0;
    CHECK_THROWS_AS(llf::load_regression_model(path, other), llf::SchemaError);
  }
  SUBCASE("truncated JSON is a parse error") {
    std::string text = testsup::read_file(path);
    std::ofstream(path) << text.substr(0, text.size() / 2);
    CHECK_THROWS_AS(llf::load_regression_model(path, data), llf::ParseError);
  }
  SUBCASE("a missing file is a parse error") {
    CHECK_THROWS_AS(
        llf::load_regression_model(testsup::tmp_path("no_such_model.json"), data),
        llf::ParseError);
  }
}
