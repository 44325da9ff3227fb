#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <llf/simbench.hpp>

#include "test_support.hpp"

using llf::SimDesign;
using llf::SimSpec;
using llf::TheoryParams;

namespace {

Eigen::VectorXd point(std::initializer_list<double> values) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) x(i++) = v;
  return x;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream stream(text);
  std::string line;
  while (std::getline(stream, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

// ============================================================================
// Designs
// ============================================================================

TEST_CASE("design names round-trip and reject unknowns") {
  for (SimDesign design :
       {SimDesign::kBoundary, SimDesign::kFriedman, SimDesign::kLinearRamp,
        SimDesign::kStep, SimDesign::kCausal1, SimDesign::kCausal2})
    CHECK(llf::sim_design_from_string(llf::to_string(design)) == design);
  CHECK_THROWS_AS(llf::sim_design_from_string("nope"), llf::ConfigError);
}

TEST_CASE("dimension floors and default noise levels") {
  CHECK(llf::min_dimension(SimDesign::kBoundary) == 1);
  CHECK(llf::min_dimension(SimDesign::kLinearRamp) == 1);
  CHECK(llf::min_dimension(SimDesign::kStep) == 2);
  CHECK(llf::min_dimension(SimDesign::kCausal1) == 2);
  CHECK(llf::min_dimension(SimDesign::kCausal2) == 2);
  CHECK(llf::min_dimension(SimDesign::kFriedman) == 5);

  CHECK(llf::default_sigma(SimDesign::kBoundary) ==
        doctest::Approx(std::sqrt(20.0)).epsilon(1e-15));
  CHECK(llf::default_sigma(SimDesign::kFriedman) == 5.0);
  CHECK(llf::default_sigma(SimDesign::kLinearRamp) == 0.0);
  CHECK(llf::default_sigma(SimDesign::kStep) == 5.0);
  CHECK(llf::default_sigma(SimDesign::kCausal1) == 1.0);
  CHECK(llf::default_sigma(SimDesign::kCausal2) == 1.0);

  CHECK(llf::is_causal_design(SimDesign::kCausal1));
  CHECK(llf::is_causal_design(SimDesign::kCausal2));
  CHECK(!llf::is_causal_design(SimDesign::kStep));

  SimSpec spec;
  spec.design = SimDesign::kStep;
  CHECK(spec.resolved_sigma() == 5.0);
  spec.sigma = 2.5;
  CHECK(spec.resolved_sigma() == 2.5);
}

TEST_CASE("target functions match hand-computed values") {
  CHECK(llf::truth_value(SimDesign::kFriedman, point({0.5, 0.5, 0.5, 0.5, 0.5})) ==
        doctest::Approx(14.571067811865476).epsilon(1e-12));
  CHECK(llf::truth_value(SimDesign::kBoundary, point({0.0})) ==
        doctest::Approx(0.6931471805599453).epsilon(1e-12));
  CHECK(llf::truth_value(SimDesign::kBoundary, point({0.3})) ==
        doctest::Approx(1.9529776105260739).epsilon(1e-12));
  CHECK(llf::truth_value(SimDesign::kStep, point({0.2, 0.7})) ==
        doctest::Approx(4.878244121665079).epsilon(1e-12));
  CHECK(llf::truth_value(SimDesign::kCausal1, point({0.5, 0.9})) ==
        doctest::Approx(3.862172997584854).epsilon(1e-12));
  CHECK(llf::truth_value(SimDesign::kCausal2,
                         point({1.0 / 3.0, 1.0 / 3.0})) ==
        doctest::Approx(2.25).epsilon(1e-12));
  // 20 (x1 - 0.5)^3 + 10 x2 + 10 x3 at (0.1, 0.2, 0.3).
  CHECK(llf::truth_value(SimDesign::kLinearRamp, point({0.1, 0.2, 0.3})) ==
        doctest::Approx(3.72).epsilon(1e-12));
}

TEST_CASE("simulation draws are reproducible and carry their truth") {
  SimSpec spec;
  spec.design = SimDesign::kStep;
  spec.n = 50;
  spec.d = 3;
  spec.seed = 97;

  llf::SeededRng rng_a(97, llf::kStreamSimBase + 4);
  llf::SeededRng rng_b(97, llf::kStreamSimBase + 4);
  llf::SimData a = llf::generate(spec, rng_a);
  llf::SimData b = llf::generate(spec, rng_b);
  CHECK((a.data.features - b.data.features).norm() == 0.0);
  CHECK((a.data.responses - b.data.responses).norm() == 0.0);

  llf::SeededRng rng_c(97, llf::kStreamSimBase + 5);
  llf::SimData c = llf::generate(spec, rng_c);
  CHECK((a.data.features - c.data.features).norm() > 0.0);

  CHECK(!a.data.treatment);
  for (int i = 0; i < 50; ++i) {
    CHECK(a.data.features.row(i).minCoeff() >= 0.0);
    CHECK(a.data.features.row(i).maxCoeff() < 1.0);
    CHECK(a.truth(i) ==
          llf::truth_value(SimDesign::kStep, a.data.features.row(i)));
  }
  CHECK(a.data.feature_names ==
        std::vector<std::string>({"x1", "x2", "x3"}));

  SimSpec causal = spec;
  causal.design = SimDesign::kCausal1;
  llf::SeededRng rng_d(97, llf::kStreamSimBase + 6);
  llf::SimData cd = llf::generate(causal, rng_d);
  REQUIRE(cd.data.treatment.has_value());
  CHECK(cd.data.treatment_name == "w");
  for (int i = 0; i < 50; ++i) {
    double w = (*cd.data.treatment)(i);
    CHECK((w == 0.0 || w == 1.0));
  }
}

TEST_CASE("simulation specs enforce their dimension floors") {
  SimSpec spec;
  spec.design = SimDesign::kFriedman;
  spec.d = 4;
  llf::SeededRng rng(1, llf::kStreamSimBase);
  CHECK_THROWS_AS(llf::generate(spec, rng), llf::ConfigError);
  spec.design = SimDesign::kStep;
  spec.d = 1;
  CHECK_THROWS_AS(llf::generate(spec, rng), llf::ConfigError);
  spec.design = SimDesign::kCausal1;
  CHECK_THROWS_AS(llf::generate(spec, rng), llf::ConfigError);
  spec.design = SimDesign::kBoundary;
  spec.n = 0;
  CHECK_THROWS_AS(llf::generate(spec, rng), llf::SizeError);
}

// ============================================================================
// Rate helpers
// ============================================================================

TEST_CASE("subsample-rate thresholds match frozen reference values") {
  TheoryParams p;
  p.d = 1;
  p.pi = 1.0;
  p.omega = 0.2;
  CHECK(llf::beta_rf(p) == doctest::Approx(0.878235398683015).epsilon(1e-12));
  CHECK(llf::beta_min_llf(p).value ==
        doctest::Approx(0.8221729259027606).epsilon(1e-12));
  CHECK(!llf::beta_min_llf(p).outside_regime);

  p.omega = 0.5;
  CHECK(llf::beta_rf(p) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(llf::beta_min_llf(p).outside_regime);
}

TEST_CASE("the regression correction always lowers the rate threshold") {
  for (int d : {1, 5, 20}) {
    for (double omega : {0.05, 0.2, 0.35, 0.5}) {
      for (double pi : {0.25, 1.0}) {
        TheoryParams p;
        p.d = d;
        p.omega = omega;
        p.pi = pi;
        double rf = llf::beta_rf(p);
        llf::BetaMinResult llf_rate = llf::beta_min_llf(p);
        CHECK(rf > 0.0);
        CHECK(rf < 1.0);
        CHECK(llf_rate.value > 0.0);
        CHECK(llf_rate.value < rf);
        CHECK(llf_rate.outside_regime == (omega > 0.2));
      }
    }
  }
}

TEST_CASE("rate helpers reject out-of-range parameters") {
  TheoryParams p;
  p.d = 0;
  CHECK_THROWS_AS(llf::beta_rf(p), llf::ConfigError);
  p.d = 1;
  p.omega = 0.6;
  CHECK_THROWS_AS(llf::beta_rf(p), llf::ConfigError);
  p.omega = 0.0;
  CHECK_THROWS_AS(llf::beta_min_llf(p), llf::ConfigError);
  p.omega = 0.2;
  p.pi = 1.5;
  CHECK_THROWS_AS(llf::beta_rf(p), llf::ConfigError);
}

TEST_CASE("the reference penalty growth rate matches frozen values") {
  TheoryParams p;
  p.d = 20;
  p.omega = 0.2;
  p.pi = 0.5;
  p.min_leaf = 5;
  p.subsample = 935.2484478226215;
  p.n = 2000.0;
  CHECK(llf::theoretical_lambda(p) ==
        doctest::Approx(13.33748125653175).epsilon(1e-12));

  TheoryParams q;
  q.d = 3;
  q.omega = 0.2;
  q.pi = 1.0;
  q.min_leaf = 5;
  q.subsample = 50.0;
  q.n = 100.0;
  CHECK(llf::theoretical_lambda(q) ==
        doctest::Approx(1.8746236887995058).epsilon(1e-12));

  // Growing n at fixed subsample shrinks the recommended penalty.
  TheoryParams r = q;
  r.n = 200.0;
  CHECK(llf::theoretical_lambda(r) < llf::theoretical_lambda(q));

  // The full-sample edge is allowed; oversampling is not.
  TheoryParams full = q;
  full.subsample = 100.0;
  CHECK_NOTHROW(llf::theoretical_lambda(full));
  TheoryParams over = q;
  over.subsample = 100.5;
  CHECK_THROWS_AS(llf::theoretical_lambda(over), llf::ConfigError);
  TheoryParams no_leaf = q;
  no_leaf.min_leaf = 0;
  CHECK_THROWS_AS(llf::theoretical_lambda(no_leaf), llf::ConfigError);
  TheoryParams no_s = q;
  no_s.subsample = 0.0;
  CHECK_THROWS_AS(llf::theoretical_lambda(no_s), llf::ConfigError);
}

// ============================================================================
// Benchmark tables
// ============================================================================

TEST_CASE("csv rendering joins header and rows") {
  llf::BenchTable table;
  table.header = {"a", "b"};
  table.rows = {{"1", "2"}, {"3", "4"}};
  CHECK(table.to_csv() == "a,b\n1,2\n3,4\n");
  llf::BenchTable empty;
  CHECK(empty.to_csv() == "\n");
}

TEST_CASE("the accuracy benchmark produces a well-formed table") {
  SimSpec spec;
  spec.design = SimDesign::kBoundary;
  spec.n = 80;
  spec.d = 2;
  spec.seed = 5;
  llf::BenchOptions options;
  options.num_trees = 20;
  options.n_test = 50;
  options.repeats = 2;
  options.lambda_cap = 40;
  options.num_threads = 2;

  llf::BenchTable table = llf::run_rmse_benchmark(
      spec,
      {llf::RegressionMethod::kPlainForest,
       llf::RegressionMethod::kLocalLinearForest},
      options);
  auto rows = parse_csv(table.to_csv());
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == std::vector<std::string>(
                       {"method", "d", "n", "sigma", "rmse", "rmse_sd"}));
  CHECK(rows[1][0] == "rf");
  CHECK(rows[2][0] == "llf");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    CHECK(rows[r][1] == "2");
    CHECK(rows[r][2] == "80");
    CHECK(std::stod(rows[r][4]) > 0.0);   // rmse
    CHECK(std::stod(rows[r][5]) >= 0.0);  // spread
  }

  // Thread count must not leak into results.
  llf::BenchOptions serial = options;
  serial.num_threads = 1;
  CHECK(llf::run_rmse_benchmark(
            spec,
            {llf::RegressionMethod::kPlainForest,
             llf::RegressionMethod::kLocalLinearForest},
            serial)
            .to_csv() == table.to_csv());
}

TEST_CASE("the coverage benchmark produces a well-formed table") {
  SimSpec spec;
  spec.design = SimDesign::kStep;
  spec.n = 150;
  spec.d = 2;
  spec.seed = 11;
  llf::BenchOptions options;
  options.num_trees = 30;
  options.repeats = 1;
  options.coverage_cap = 25;
  options.lambda_cap = 40;
  options.num_threads = 2;

  llf::BenchTable table = llf::run_coverage_benchmark(spec, options);
  auto rows = parse_csv(table.to_csv());
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == std::vector<std::string>({"method", "d", "n", "sigma",
                                             "coverage", "length", "rmse"}));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    double cov = std::stod(rows[r][4]);
    CHECK(cov >= 0.0);
    CHECK(cov <= 1.0);
    CHECK(std::stod(rows[r][5]) >= 0.0);
  }

  llf::BenchOptions serial = options;
  serial.num_threads = 1;
  CHECK(llf::run_coverage_benchmark(spec, serial).to_csv() == table.to_csv());
}

TEST_CASE("the treatment-effect benchmark produces a well-formed table") {
  SimSpec spec;
  spec.design = SimDesign::kCausal1;
  spec.n = 100;
  spec.d = 2;
  spec.seed = 13;
  llf::BenchOptions options;
  options.num_trees = 20;
  options.n_test = 40;
  options.repeats = 1;
  options.num_threads = 2;

  llf::BenchTable table = llf::run_causal_benchmark(spec, options);
  auto rows = parse_csv(table.to_csv());
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][0] == "cf");
  CHECK(rows[2][0] == "llcf");
  CHECK(std::stod(rows[1][4]) > 0.0);
  CHECK(std::stod(rows[2][4]) > 0.0);

  llf::BenchOptions serial = options;
  serial.num_threads = 1;
  CHECK(llf::run_causal_benchmark(spec, serial).to_csv() == table.to_csv());
}

TEST_CASE("benchmarks reject mismatched designs and bad options") {
  SimSpec regression;
  regression.design = SimDesign::kBoundary;
  regression.n = 50;
  regression.d = 1;
  SimSpec causal;
  causal.design = SimDesign::kCausal1;
  causal.n = 50;
  causal.d = 2;
  llf::BenchOptions options;
  options.repeats = 0;
  CHECK_THROWS_AS(llf::run_rmse_benchmark(
                      regression, {llf::RegressionMethod::kPlainForest}, options),
                  llf::ConfigError);
  options.repeats = 1;
  CHECK_THROWS_AS(llf::run_rmse_benchmark(
                      causal, {llf::RegressionMethod::kPlainForest}, options),
                  llf::ConfigError);
  CHECK_THROWS_AS(llf::run_coverage_benchmark(causal, options),
                  llf::ConfigError);
  CHECK_THROWS_AS(llf::run_causal_benchmark(regression, options),
                  llf::ConfigError);
  llf::BenchOptions bad_level = options;
  bad_level.level = 1.0;
  CHECK_THROWS_AS(llf::run_coverage_benchmark(regression, bad_level),
                  llf::ConfigError);
}
