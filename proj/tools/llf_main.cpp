// Command-line front end: fit/predict/tune/weights for regression forests,
// causal-fit/causal-predict for treatment effects, plus simulation and
// benchmark table generation.  Every run prints the fully resolved
// configuration so results can be reproduced from logs alone.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "llf/llf.hpp"

namespace {

struct CommonFlags {
  std::string data_path;
  std::string response = "y";
  std::string treatment;
  std::string out_path;
  std::string model_path;
  std::string test_path;
  std::string features_csv;
  double ci_level = 0.0;  // 0 = no interval columns
  bool tune = false;
  std::uint64_t seed = 42;
  int threads = 0;
  double lambda = -1.0;  // negative = select by out-of-bag error
};

void add_forest_flags(CLI::App* cmd, llf::ForestConfig& config) {
  cmd->add_option("--trees", config.num_trees, "Number of trees");
  cmd->add_option("--min-leaf", config.min_leaf_size, "Minimum leaf size");
  cmd->add_option("--mtry", config.mtry,
                  "Candidate variables per split (0 = automatic)");
  cmd->add_option("--subsample-fraction", config.subsample_fraction,
                  "Per-tree subsample fraction of n");
  std::string* rule = new std::string("ridge");
  cmd->add_option("--split-rule", *rule, "Split rule: cart or ridge")
      ->check(CLI::IsMember({"cart", "ridge"}));
  cmd->callback([&config, rule]() {
    config.split_rule = llf::split_rule_from_string(*rule);
  });
}

nlohmann::json resolved_config_json(const llf::ForestConfig& config, int d,
                                    int threads) {
  nlohmann::json j = llf::config_to_json(config);
  j["mtry_resolved"] = config.resolved_mtry(d);
  j["residual_cutoff_resolved"] = config.resolved_residual_cutoff(d);
  j["threads"] = llf::resolve_num_threads(threads);
  return j;
}

void print_resolved_config(const llf::ForestConfig& config, int d, int threads) {
  std::cout << "config: " << resolved_config_json(config, d, threads).dump()
            << "\n";
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Feature list flag: comma-separated column names, or 1-based indices.
std::vector<int> parse_feature_list(const std::string& csv,
                                    const std::vector<std::string>& names) {
  std::vector<int> out;
  std::string cur;
  auto flush = [&]() {
    if (cur.empty()) return;
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (names[j] == cur) {
        out.push_back(static_cast<int>(j));
        cur.clear();
        return;
      }
    }
    try {
      std::size_t pos = 0;
      int idx = std::stoi(cur, &pos);
      if (pos == cur.size() && idx >= 1 && idx <= static_cast<int>(names.size())) {
        out.push_back(idx - 1);
        cur.clear();
        return;
      }
    } catch (...) {
    }
    throw llf::SchemaError("unknown feature '" + cur + "' in --features");
  };
  for (char c : csv) {
    if (c == ',') {
      flush();
    } else if (c != ' ') {
      cur.push_back(c);
    }
  }
  flush();
  if (out.empty()) throw llf::SchemaError("--features list is empty");
  return out;
}

// Test-point matrix from a CSV that must contain every training feature
// column (extra columns are ignored).
Eigen::MatrixXd load_test_features(const std::string& path,
                                   const std::vector<std::string>& names) {
  std::ifstream in(path);
  if (!in) throw llf::ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw llf::SizeError("'" + path + "' is empty");
  std::vector<std::string> header = llf::detail::split_csv_line(line);
  std::vector<int> source_col(names.size(), -1);
  std::string missing;
  for (std::size_t j = 0; j < names.size(); ++j) {
    for (std::size_t h = 0; h < header.size(); ++h)
      if (header[h] == names[j]) source_col[j] = static_cast<int>(h);
    if (source_col[j] < 0) missing += (missing.empty() ? "" : ", ") + names[j];
  }
  if (!missing.empty())
    throw llf::SchemaError("'" + path + "' is missing feature columns: " +
                           missing);
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (llf::detail::trim(line).empty()) continue;
    std::vector<std::string> cells = llf::detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw llf::SchemaError("row " + std::to_string(line_no) +
                             " has the wrong number of cells");
    std::vector<double> row(names.size());
    for (std::size_t j = 0; j < names.size(); ++j)
      row[j] = llf::detail::parse_cell(
          cells[static_cast<std::size_t>(source_col[j])], line_no,
          source_col[j] + 1);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw llf::SizeError("'" + path + "' has no data rows");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < names.size(); ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return x;
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
  if (path.empty()) return std::cout;
  file.open(path);
  if (!file) throw llf::ParseError("cannot write '" + path + "'");
  return file;
}

// ----------------------------------------------------------------------------
// fit
// ----------------------------------------------------------------------------

int cmd_fit(const CommonFlags& flags, llf::ForestConfig config) {
  llf::Dataset data = llf::load_csv(flags.data_path, flags.response);
  config.seed = flags.seed;

  llf::RegressionFitOptions options;
  options.num_threads = flags.threads;
  if (!flags.features_csv.empty())
    options.feature_override =
        parse_feature_list(flags.features_csv, data.feature_names);
  if (flags.lambda >= 0.0) options.fixed_lambda = flags.lambda;

  if (flags.tune) {
    llf::TuningGrid grid;
    llf::SeededRng rng(flags.seed, llf::kStreamTuningBase);
    llf::CvResult cv = llf::cross_validate(data, grid, config, rng, flags.threads);
    config = cv.best_config;
    if (!options.fixed_lambda) options.fixed_lambda = cv.best_lambda;
    if (!flags.out_path.empty()) {
      std::ofstream table(flags.out_path + ".cv.csv");
      table << "mtry,min_leaf,subsample_fraction,lambda,cv_mse\n";
      for (const auto& row : cv.table)
        table << row.mtry << ',' << row.min_leaf << ','
              << format_value(row.subsample_fraction) << ','
              << format_value(row.lambda) << ',' << format_value(row.cv_mse)
              << '\n';
    }
  }

  print_resolved_config(config, data.d(), flags.threads);
  llf::RegressionModel model = llf::fit_regression_model(data, config, options);
  if (flags.out_path.empty())
    throw llf::ConfigError("fit requires --out for the model file");
  llf::save_regression_model(flags.out_path, model, data);

  std::cout << "n: " << data.n() << "\nd: " << data.d()
            << "\ntrees: " << config.num_trees
            << "\nlambda_predict: " << format_value(model.lambda_predict)
            << "\nselected_features:";
  for (int f : model.selected_features)
    std::cout << ' ' << data.feature_names[static_cast<std::size_t>(f)];
  std::cout << "\nmodel: " << flags.out_path << "\n";
  return 0;
}

// ----------------------------------------------------------------------------
// predict
// ----------------------------------------------------------------------------

int cmd_predict(const CommonFlags& flags) {
  llf::Dataset data = llf::load_csv(flags.data_path, flags.response);
  llf::RegressionModel model =
      llf::load_regression_model(flags.model_path, data);
  print_resolved_config(model.forest.config, data.d(), flags.threads);

  bool with_ci = flags.ci_level > 0.0;
  std::ofstream file;
  std::ostream& out = open_output(file, flags.out_path);
  out << (with_ci ? "prediction,ci_lo,ci_hi" : "prediction") << '\n';

  auto emit = [&](double mu, double lo, double hi) {
    out << format_value(mu);
    if (with_ci) out << ',' << format_value(lo) << ',' << format_value(hi);
    out << '\n';
  };

  if (flags.test_path.empty()) {
    // Out-of-bag predictions, one per training row.
    const int n = data.n();
    struct Row {
      double mu = 0.0, lo = 0.0, hi = 0.0;
    };
    std::vector<Row> rows(static_cast<std::size_t>(n));
    llf::parallel_for(n, llf::resolve_num_threads(flags.threads), [&](int i) {
      Eigen::VectorXd x0 = data.features.row(i);
      Row& r = rows[static_cast<std::size_t>(i)];
      // A row that landed in every tree's half-sample (possible with very
      // few trees) has no out-of-bag view; fall back to the in-bag value.
      if (with_ci) {
        llf::PredictionResult pr;
        try {
          pr = llf::model_predict_interval(model, data, x0, flags.ci_level, i);
        } catch (const llf::Error&) {
          pr = llf::model_predict_interval(model, data, x0, flags.ci_level);
        }
        r = {pr.mu_hat, pr.lo, pr.hi};
      } else {
        try {
          r.mu = llf::model_predict_oob(model, data, i);
        } catch (const llf::Error&) {
          r.mu = llf::model_predict(model, data, x0);
        }
      }
    });
    for (const Row& r : rows) emit(r.mu, r.lo, r.hi);
  } else {
    Eigen::MatrixXd x_test =
        load_test_features(flags.test_path, data.feature_names);
    const int m = static_cast<int>(x_test.rows());
    struct Row {
      double mu = 0.0, lo = 0.0, hi = 0.0;
    };
    std::vector<Row> rows(static_cast<std::size_t>(m));
    llf::parallel_for(m, llf::resolve_num_threads(flags.threads), [&](int i) {
      Eigen::VectorXd x0 = x_test.row(i);
      Row& r = rows[static_cast<std::size_t>(i)];
      if (with_ci) {
        llf::PredictionResult pr =
            llf::model_predict_interval(model, data, x0, flags.ci_level);
        r = {pr.mu_hat, pr.lo, pr.hi};
      } else {
        r.mu = llf::model_predict(model, data, x0);
      }
    });
    for (const Row& r : rows) emit(r.mu, r.lo, r.hi);
  }
  return 0;
}

// ----------------------------------------------------------------------------
// tune
// ----------------------------------------------------------------------------

int cmd_tune(const CommonFlags& flags, llf::ForestConfig config) {
  llf::Dataset data = llf::load_csv(flags.data_path, flags.response);
  config.seed = flags.seed;
  print_resolved_config(config, data.d(), flags.threads);
  llf::TuningGrid grid;
  llf::SeededRng rng(flags.seed, llf::kStreamTuningBase);
  llf::CvResult cv = llf::cross_validate(data, grid, config, rng, flags.threads);

  std::ofstream file;
  std::ostream& out = open_output(file, flags.out_path);
  out << "mtry,min_leaf,subsample_fraction,lambda,cv_mse\n";
  for (const auto& row : cv.table)
    out << row.mtry << ',' << row.min_leaf << ','
        << format_value(row.subsample_fraction) << ','
        << format_value(row.lambda) << ',' << format_value(row.cv_mse) << '\n';

  nlohmann::json chosen = llf::config_to_json(cv.best_config);
  chosen["lambda_predict"] = cv.best_lambda;
  std::cout << "chosen: " << chosen.dump() << "\n";
  return 0;
}

// ----------------------------------------------------------------------------
// weights
// ----------------------------------------------------------------------------

int cmd_weights(const CommonFlags& flags, const std::string& point_csv) {
  llf::Dataset data = llf::load_csv(flags.data_path, flags.response);
  llf::RegressionModel model =
      llf::load_regression_model(flags.model_path, data);
  print_resolved_config(model.forest.config, data.d(), flags.threads);

  std::vector<double> values;
  std::string cur;
  auto flush = [&]() {
    if (cur.empty()) return;
    values.push_back(llf::detail::parse_cell(cur, 1, static_cast<int>(values.size()) + 1));
    cur.clear();
  };
  for (char c : point_csv) {
    if (c == ',')
      flush();
    else if (c != ' ')
      cur.push_back(c);
  }
  flush();
  if (static_cast<int>(values.size()) != data.d())
    throw llf::SchemaError("--point needs exactly " + std::to_string(data.d()) +
                           " comma-separated values");
  Eigen::VectorXd x0 =
      Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));

  llf::WeightVector weights = llf::forest_weights(model.forest, x0);
  std::ofstream file;
  std::ostream& out = open_output(file, flags.out_path);
  out << "index,weight\n";
  for (const auto& [row, w] : weights.entries)
    out << row << ',' << format_value(w) << '\n';
  return 0;
}

// ----------------------------------------------------------------------------
// simulate / bench
// ----------------------------------------------------------------------------

void write_dataset_csv(std::ostream& out, const llf::Dataset& data) {
  for (int j = 0; j < data.d(); ++j)
    out << data.feature_names[static_cast<std::size_t>(j)] << ',';
  if (data.treatment) out << data.treatment_name << ',';
  out << data.response_name << '\n';
  for (int i = 0; i < data.n(); ++i) {
    for (int j = 0; j < data.d(); ++j)
      out << format_value(data.features(i, j)) << ',';
    if (data.treatment) out << format_value((*data.treatment)(i)) << ',';
    out << format_value(data.responses(i)) << '\n';
  }
}

int cmd_simulate(const llf::SimSpec& spec, const std::string& out_path,
                 const std::string& truth_path) {
  llf::SeededRng rng(spec.seed, llf::kStreamSimBase);
  llf::SimData sim = llf::generate(spec, rng);
  std::ofstream file;
  std::ostream& out = open_output(file, out_path);
  write_dataset_csv(out, sim.data);
  if (!truth_path.empty()) {
    std::ofstream truth(truth_path);
    if (!truth) throw llf::ParseError("cannot write '" + truth_path + "'");
    truth << "truth\n";
    for (int i = 0; i < sim.data.n(); ++i)
      truth << format_value(sim.truth(i)) << '\n';
  }
  return 0;
}

int emit_bench_table(const llf::BenchTable& table, const std::string& out_path) {
  std::ofstream file;
  std::ostream& out = open_output(file, out_path);
  out << table.to_csv();
  return 0;
}

// ----------------------------------------------------------------------------
// causal
// ----------------------------------------------------------------------------

int cmd_causal_fit(const CommonFlags& flags, llf::ForestConfig config) {
  if (flags.treatment.empty())
    throw llf::ConfigError("causal-fit requires --treatment");
  llf::Dataset data =
      llf::load_csv(flags.data_path, flags.response, flags.treatment);
  config.seed = flags.seed;
  print_resolved_config(config, data.d(), flags.threads);

  llf::NuisanceEstimates nuisances =
      llf::estimate_nuisances(data, config, flags.threads);
  llf::CausalFitOptions options;
  options.num_threads = flags.threads;
  llf::CausalModel model = llf::fit_llcf(data, nuisances, config, options);
  if (flags.out_path.empty())
    throw llf::ConfigError("causal-fit requires --out for the model file");
  llf::save_causal_model(flags.out_path, model, data);
  std::cout << "n: " << data.n() << "\nd: " << data.d()
            << "\nlambda_tau: " << format_value(model.lambda_tau)
            << "\nlambda_a: " << format_value(model.lambda_a)
            << "\nmodel: " << flags.out_path << "\n";
  return 0;
}

int cmd_causal_predict(const CommonFlags& flags) {
  if (flags.treatment.empty())
    throw llf::ConfigError("causal-predict requires --treatment");
  llf::Dataset data =
      llf::load_csv(flags.data_path, flags.response, flags.treatment);
  llf::CausalModel model = llf::load_causal_model(flags.model_path, data);
  print_resolved_config(model.forest.config, data.d(), flags.threads);

  std::ofstream file;
  std::ostream& out = open_output(file, flags.out_path);
  out << "tau_hat\n";
  if (flags.test_path.empty()) {
    const int n = data.n();
    std::vector<double> taus(static_cast<std::size_t>(n), 0.0);
    llf::parallel_for(n, llf::resolve_num_threads(flags.threads), [&](int i) {
      Eigen::VectorXd x0 = data.features.row(i);
      llf::WeightVector weights;
      try {
        weights = llf::forest_weights_oob(model.forest, x0, i);
      } catch (const llf::Error&) {
        // In-bag everywhere: no out-of-bag kernel for this row.
        weights = llf::forest_weights(model.forest, x0);
      }
      taus[static_cast<std::size_t>(i)] =
          llf::predict_tau_from_weights(model, data, weights, x0);
    });
    for (double t : taus) out << format_value(t) << '\n';
  } else {
    Eigen::MatrixXd x_test =
        load_test_features(flags.test_path, data.feature_names);
    const int m = static_cast<int>(x_test.rows());
    std::vector<double> taus(static_cast<std::size_t>(m), 0.0);
    llf::parallel_for(m, llf::resolve_num_threads(flags.threads), [&](int i) {
      taus[static_cast<std::size_t>(i)] =
          llf::predict_tau(model, data, x_test.row(i));
    });
    for (double t : taus) out << format_value(t) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local linear forests: honest forests as kernels for "
               "ridge-penalized local regression"};
  app.require_subcommand(1);

  CommonFlags flags;
  llf::ForestConfig config;
  std::string point_csv;
  llf::SimSpec spec;
  std::string design_name = "boundary";
  std::string truth_path;
  llf::BenchOptions bench;

  auto add_common = [&](CLI::App* cmd, bool needs_data, bool needs_model) {
    if (needs_data) {
      cmd->add_option("--data", flags.data_path, "Training CSV")->required();
      cmd->add_option("--response", flags.response, "Response column name")
          ->required();
      cmd->add_option("--treatment", flags.treatment, "Treatment column name");
    }
    if (needs_model)
      cmd->add_option("--model", flags.model_path, "Model JSON file")->required();
    cmd->add_option("--out", flags.out_path, "Output file");
    cmd->add_option("--seed", flags.seed, "Master RNG seed");
    cmd->add_option("--threads", flags.threads,
                    "Worker threads (0 = LLF_THREADS or hardware)");
  };

  CLI::App* fit = app.add_subcommand("fit", "Fit a local linear forest");
  add_common(fit, true, false);
  fit->add_flag("--tune", flags.tune, "Cross-validate before the final fit");
  fit->add_option("--lambda", flags.lambda, "Fixed prediction ridge penalty");
  fit->add_option("--features", flags.features_csv,
                  "Comma list of regression features (overrides lasso)");
  add_forest_flags(fit, config);

  CLI::App* predict = app.add_subcommand("predict", "Predict with a model");
  add_common(predict, true, true);
  predict->add_option("--test", flags.test_path,
                      "Test CSV (omit for out-of-bag predictions)");
  predict->add_option("--ci", flags.ci_level,
                      "Also emit a confidence interval at this level");

  CLI::App* tune = app.add_subcommand("tune", "Cross-validate parameters");
  add_common(tune, true, false);
  add_forest_flags(tune, config);

  CLI::App* weights = app.add_subcommand("weights", "Dump kernel weights");
  add_common(weights, true, true);
  weights->add_option("--point", point_csv, "Comma-separated test point")
      ->required();

  CLI::App* simulate = app.add_subcommand("simulate", "Generate benchmark data");
  simulate->add_option("--design", design_name, "Data-generating design")
      ->required();
  simulate->add_option("--n", spec.n, "Rows")->required();
  simulate->add_option("--d", spec.d, "Features")->required();
  simulate->add_option("--sigma", spec.sigma, "Noise SD (design default if unset)");
  simulate->add_option("--seed", spec.seed, "Master RNG seed");
  simulate->add_option("--out", flags.out_path, "Dataset CSV path");
  simulate->add_option("--truth-out", truth_path, "Truth CSV path");

  CLI::App* bench_cmd = app.add_subcommand("bench", "Run benchmark tables");
  bench_cmd->require_subcommand(1);
  auto add_bench_common = [&](CLI::App* cmd) {
    cmd->add_option("--design", design_name, "Data-generating design")->required();
    cmd->add_option("--n", spec.n, "Training rows")->required();
    cmd->add_option("--d", spec.d, "Features")->required();
    cmd->add_option("--sigma", spec.sigma, "Noise SD (design default if unset)");
    cmd->add_option("--seed", spec.seed, "Master RNG seed");
    cmd->add_option("--repeats", bench.repeats, "Independent train/test draws");
    cmd->add_option("--trees", bench.num_trees, "Trees per forest");
    cmd->add_option("--n-test", bench.n_test, "Test points per repeat");
    cmd->add_option("--threads", bench.num_threads, "Worker threads");
    cmd->add_option("--out", flags.out_path, "Output CSV path");
  };
  CLI::App* bench_rmse = bench_cmd->add_subcommand("rmse", "Test-set RMSE table");
  add_bench_common(bench_rmse);
  CLI::App* bench_coverage =
      bench_cmd->add_subcommand("coverage", "OOB interval coverage table");
  add_bench_common(bench_coverage);
  bench_coverage->add_option("--level", bench.level, "Confidence level");
  bench_coverage->add_option("--coverage-points", bench.coverage_cap,
                             "Training points scored per repeat (0 = all)");
  CLI::App* bench_causal =
      bench_cmd->add_subcommand("causal", "Treatment-effect RMSE table");
  add_bench_common(bench_causal);

  CLI::App* causal_fit =
      app.add_subcommand("causal-fit", "Fit a local linear causal forest");
  add_common(causal_fit, true, false);
  add_forest_flags(causal_fit, config);

  CLI::App* causal_predict =
      app.add_subcommand("causal-predict", "Predict treatment effects");
  add_common(causal_predict, true, true);
  causal_predict->add_option("--test", flags.test_path,
                             "Test CSV (omit for out-of-bag estimates)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(fit)) return cmd_fit(flags, config);
    if (app.got_subcommand(predict)) return cmd_predict(flags);
    if (app.got_subcommand(tune)) return cmd_tune(flags, config);
    if (app.got_subcommand(weights)) return cmd_weights(flags, point_csv);
    if (app.got_subcommand(simulate)) {
      spec.design = llf::sim_design_from_string(design_name);
      return cmd_simulate(spec, flags.out_path, truth_path);
    }
    if (app.got_subcommand(bench_cmd)) {
      spec.design = llf::sim_design_from_string(design_name);
      if (bench_cmd->got_subcommand(bench_rmse)) {
        llf::BenchTable table = llf::run_rmse_benchmark(
            spec,
            {llf::RegressionMethod::kPlainForest,
             llf::RegressionMethod::kLocalLinearForest},
            bench);
        return emit_bench_table(table, flags.out_path);
      }
      if (bench_cmd->got_subcommand(bench_coverage))
        return emit_bench_table(llf::run_coverage_benchmark(spec, bench),
                                flags.out_path);
      return emit_bench_table(llf::run_causal_benchmark(spec, bench),
                              flags.out_path);
    }
    if (app.got_subcommand(causal_fit)) return cmd_causal_fit(flags, config);
    if (app.got_subcommand(causal_predict)) return cmd_causal_predict(flags);
  } catch (const llf::SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const llf::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const llf::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const llf::SizeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const llf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
