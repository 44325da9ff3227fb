#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

#include <llf/causal.hpp>
#include <llf/simbench.hpp>

#include "test_support.hpp"

using llf::CausalModel;
using llf::NuisanceEstimates;
using testsup::make_weights;

namespace {

struct HandProblem {
  llf::Dataset data;
  CausalModel model;  // forest left empty: weight-level entry points only
  llf::WeightVector weights;
  Eigen::VectorXd x0;
};

HandProblem hand_problem(bool local_linear, double lambda_tau,
                         double lambda_a) {
  HandProblem p;
  p.data.features.resize(6, 1);
  p.data.features << 0.1, 0.3, 0.45, 0.6, 0.8, 0.95;
  p.data.responses.resize(6);
  p.data.responses << 1.8, 0.4, 2.3, 0.1, 3.0, 0.7;
  Eigen::VectorXd w(6);
  w << 1.0, 0.0, 1.0, 0.0, 1.0, 0.0;
  p.data.treatment = w;
  p.data.feature_names = {"x1"};

  p.model.nuisances.m_hat = Eigen::VectorXd::Constant(6, 0.2);
  p.model.nuisances.e_hat = Eigen::VectorXd::Constant(6, 0.5);
  p.model.lambda_tau = lambda_tau;
  p.model.lambda_a = lambda_a;
  p.model.local_linear = local_linear;

  p.x0.resize(1);
  p.x0 << 0.5;
  p.weights = make_weights(
      {{0, 0.25}, {1, 0.1}, {2, 0.2}, {3, 0.15}, {4, 0.2}, {5, 0.1}}, p.x0);
  return p;
}

}  // namespace

// ============================================================================
// Heads at fixed weights
// ============================================================================

TEST_CASE("the local linear effect head minimizes the penalized objective") {
  HandProblem p = hand_problem(true, 0.3, 0.7);
  double tau = llf::predict_tau_from_weights(p.model, p.data, p.weights, p.x0);

  // Independent check: minimize over (a0, a1, tau, tau1) the weighted squared
  // error of y_res against [1, x - x0, w_res, w_res (x - x0)] plus the two
  // slope penalties, with a conjugate-gradient routine that never sees the
  // closed-form solver.
  auto objective = [&](const Eigen::VectorXd& c) {
    double total = 0.0;
    for (int k = 0; k < 6; ++k) {
      auto [row, alpha] = p.weights.entries[static_cast<std::size_t>(k)];
      double y_res = p.data.responses(row) - 0.2;
      double w_res = (*p.data.treatment)(row)-0.5;
      double centered = p.data.features(row, 0) - 0.5;
      double fitted =
          c(0) + c(1) * centered + c(2) * w_res + c(3) * w_res * centered;
      total += alpha * (y_res - fitted) * (y_res - fitted);
    }
    return total + 0.7 * c(1) * c(1) + 0.3 * c(3) * c(3);
  };
  Eigen::VectorXd best = testsup::minimize_quadratic(objective, Eigen::VectorXd::Zero(4));
  CHECK(tau == doctest::Approx(best(2)).epsilon(1e-6));
}

TEST_CASE("the plain effect head is a weighted two-parameter regression") {
  HandProblem p = hand_problem(false, 0.0, 0.0);
  double tau = llf::predict_tau_from_weights(p.model, p.data, p.weights, p.x0);

  auto objective = [&](const Eigen::VectorXd& c) {
    double total = 0.0;
    for (int k = 0; k < 6; ++k) {
      auto [row, alpha] = p.weights.entries[static_cast<std::size_t>(k)];
      double y_res = p.data.responses(row) - 0.2;
      double w_res = (*p.data.treatment)(row)-0.5;
      double err = y_res - c(0) - c(1) * w_res;
      total += alpha * err * err;
    }
    return total;
  };
  Eigen::VectorXd best = testsup::minimize_quadratic(objective, Eigen::VectorXd::Zero(2));
  CHECK(tau == doctest::Approx(best(1)).epsilon(1e-8));
}

TEST_CASE("huge slope penalties collapse the linear head onto the plain one") {
  HandProblem rigid = hand_problem(true, 1e12, 1e12);
  HandProblem plain = hand_problem(false, 0.0, 0.0);
  double tau_rigid =
      llf::predict_tau_from_weights(rigid.model, rigid.data, rigid.weights, rigid.x0);
  double tau_plain =
      llf::predict_tau_from_weights(plain.model, plain.data, plain.weights, plain.x0);
  CHECK(tau_rigid == doctest::Approx(tau_plain).epsilon(1e-4));
}

TEST_CASE("shifting the conditional-mean estimates leaves the effect alone") {
  // The intercept absorbs any constant offset in m_hat, for both heads.
  for (bool local_linear : {true, false}) {
    HandProblem base = hand_problem(local_linear, 0.3, 0.7);
    HandProblem shifted = hand_problem(local_linear, 0.3, 0.7);
    shifted.model.nuisances.m_hat.array() += 42.0;
    double tau_base =
        llf::predict_tau_from_weights(base.model, base.data, base.weights, base.x0);
    double tau_shifted = llf::predict_tau_from_weights(
        shifted.model, shifted.data, shifted.weights, shifted.x0);
    CHECK(tau_shifted == doctest::Approx(tau_base).epsilon(1e-9));
  }
}

TEST_CASE("predict_tau requires the treatment column") {
  HandProblem p = hand_problem(false, 0.0, 0.0);
  p.data.treatment.reset();
  CHECK_THROWS_AS(llf::predict_tau(p.model, p.data, p.x0), llf::SchemaError);
}

// ============================================================================
// Nuisance estimation
// ============================================================================

TEST_CASE("treatment_count sums the treatment indicator") {
  HandProblem p = hand_problem(false, 0.0, 0.0);
  CHECK(llf::treatment_count(p.data) == 3.0);
  p.data.treatment.reset();
  CHECK(llf::treatment_count(p.data) == 0.0);
}

TEST_CASE("nuisance estimation needs treatment variation") {
  llf::SimSpec spec;
  spec.design = llf::SimDesign::kCausal1;
  spec.n = 40;
  spec.d = 2;
  spec.seed = 71;
  llf::SeededRng rng(71, llf::kStreamSimBase);
  llf::SimData sim = llf::generate(spec, rng);
  llf::ForestConfig config;
  config.num_trees = 10;

  llf::Dataset all_treated = sim.data;
  all_treated.treatment = Eigen::VectorXd::Ones(40);
  CHECK_THROWS_AS(llf::estimate_nuisances(all_treated, config),
                  llf::OverlapError);
  llf::Dataset all_control = sim.data;
  all_control.treatment = Eigen::VectorXd::Zero(40);
  CHECK_THROWS_AS(llf::estimate_nuisances(all_control, config),
                  llf::OverlapError);
  llf::Dataset no_treatment = sim.data;
  no_treatment.treatment.reset();
  CHECK_THROWS_AS(llf::estimate_nuisances(no_treatment, config),
                  llf::SchemaError);
}

TEST_CASE("nuisance estimates stay in range on a randomized design") {
  llf::SimSpec spec;
  spec.design = llf::SimDesign::kCausal1;
  spec.n = 300;
  spec.d = 5;
  spec.seed = 73;
  llf::SeededRng rng(73, llf::kStreamSimBase);
  llf::SimData sim = llf::generate(spec, rng);
  llf::ForestConfig config;
  config.num_trees = 50;
  config.seed = 73;

  NuisanceEstimates nuisances = llf::estimate_nuisances(sim.data, config);
  REQUIRE(nuisances.m_hat.size() == 300);
  REQUIRE(nuisances.e_hat.size() == 300);
  CHECK(nuisances.m_hat.allFinite());
  for (int i = 0; i < 300; ++i) {
    CHECK(nuisances.e_hat(i) >= 0.01);
    CHECK(nuisances.e_hat(i) <= 0.99);
  }
  // The design randomizes treatment at probability one half.
  CHECK(std::abs(nuisances.e_hat.mean() - 0.5) < 0.15);
}

// ============================================================================
// Full fit
// ============================================================================

TEST_CASE("fitting on a randomized design beats the zero predictor") {
  llf::SimSpec spec;
  spec.design = llf::SimDesign::kCausal2;
  spec.n = 400;
  spec.d = 4;
  spec.seed = 79;
  llf::SeededRng rng(79, llf::kStreamSimBase);
  llf::SimData sim = llf::generate(spec, rng);

  llf::ForestConfig nuisance_config;
  nuisance_config.num_trees = 50;
  nuisance_config.seed = 79;
  NuisanceEstimates nuisances = llf::estimate_nuisances(sim.data, nuisance_config);

  llf::ForestConfig config;
  config.num_trees = 100;
  config.seed = 80;
  llf::CausalFitOptions options;
  options.cv_cap = 100;
  CausalModel model = llf::fit_llcf(sim.data, nuisances, config, options);

  CHECK(model.local_linear);
  bool tau_in_grid =
      std::find(options.lambda_grid.begin(), options.lambda_grid.end(),
                model.lambda_tau) != options.lambda_grid.end();
  bool a_in_grid =
      std::find(options.lambda_grid.begin(), options.lambda_grid.end(),
                model.lambda_a) != options.lambda_grid.end();
  CHECK(tau_in_grid);
  CHECK(a_in_grid);

  double sse = 0.0, sse_zero = 0.0;
  for (int i = 0; i < 60; ++i) {
    Eigen::VectorXd x0 = sim.data.features.row(i);
    double tau = llf::predict_tau(model, sim.data, x0);
    CHECK(std::isfinite(tau));
    sse += (tau - sim.truth(i)) * (tau - sim.truth(i));
    sse_zero += sim.truth(i) * sim.truth(i);
  }
  CHECK(sse < sse_zero);

  // Same seed, same answer.
  CausalModel again = llf::fit_llcf(sim.data, nuisances, config, options);
  CHECK(again.lambda_tau == model.lambda_tau);
  CHECK(again.lambda_a == model.lambda_a);
  Eigen::VectorXd x0 = sim.data.features.row(3);
  CHECK(llf::predict_tau(again, sim.data, x0) ==
        llf::predict_tau(model, sim.data, x0));

  // The plain head skips penalty selection entirely.
  llf::CausalFitOptions plain_options = options;
  plain_options.local_linear = false;
  CausalModel plain = llf::fit_llcf(sim.data, nuisances, config, plain_options);
  CHECK(!plain.local_linear);
  CHECK(plain.lambda_tau == 0.0);
  CHECK(plain.lambda_a == 0.0);
  CHECK(std::isfinite(llf::predict_tau(plain, sim.data, x0)));
}

TEST_CASE("causal fitting validates its inputs") {
  llf::SimSpec spec;
  spec.design = llf::SimDesign::kCausal1;
  spec.n = 60;
  spec.d = 2;
  spec.seed = 83;
  llf::SeededRng rng(83, llf::kStreamSimBase);
  llf::SimData sim = llf::generate(spec, rng);
  llf::ForestConfig config;
  config.num_trees = 10;

  NuisanceEstimates bad;
  bad.m_hat = Eigen::VectorXd::Zero(10);  // wrong length
  bad.e_hat = Eigen::VectorXd::Constant(60, 0.5);
  CHECK_THROWS_AS(llf::fit_llcf(sim.data, bad, config), llf::SchemaError);

  NuisanceEstimates ok;
  ok.m_hat = Eigen::VectorXd::Zero(60);
  ok.e_hat = Eigen::VectorXd::Constant(60, 0.5);
  llf::Dataset no_treatment = sim.data;
  no_treatment.treatment.reset();
  CHECK_THROWS_AS(llf::fit_llcf(no_treatment, ok, config), llf::SchemaError);
}

// ============================================================================
// Transformed-outcome error
// ============================================================================

TEST_CASE("the transformed-outcome error averages squared deviations") {
  llf::Dataset test;
  test.features.resize(4, 1);
  test.features << 0.0, 0.25, 0.5, 0.75;
  test.responses.resize(4);
  test.responses << 2.0, 1.0, 3.0, 0.5;
  Eigen::VectorXd w(4);
  w << 1.0, 0.0, 1.0, 0.0;
  test.treatment = w;
  test.feature_names = {"x1"};
  Eigen::VectorXd tau_hat(4);
  tau_hat << 1.5, -0.5, 2.0, -1.0;

  // Transformed outcomes (2W - 1) Y = (2, -1, 3, -0.5); squared deviations
  // 0.25, 0.25, 1, 0.25 average to 0.4375.
  CHECK(llf::transformed_outcome_error(test, tau_hat) ==
        doctest::Approx(0.4375).epsilon(1e-15));
  CHECK(llf::transformed_outcome_error(test, tau_hat, 0.4) ==
        doctest::Approx(0.0375).epsilon(1e-12));

  Eigen::VectorXd short_tau(3);
  short_tau << 1.0, 1.0, 1.0;
  CHECK_THROWS_AS(llf::transformed_outcome_error(test, short_tau),
                  llf::SchemaError);
  llf::Dataset no_treatment = test;
  no_treatment.treatment.reset();
  CHECK_THROWS_AS(llf::transformed_outcome_error(no_treatment, tau_hat),
                  llf::SchemaError);
}
