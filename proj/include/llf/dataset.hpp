#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "llf/errors.hpp"
#include "llf/rng.hpp"

namespace llf {

// ============================================================================
// Dataset
// ============================================================================

// In-memory training or test table.  Rows are observations; features are
// stored densely because the solvers gather arbitrary row subsets.
struct Dataset {
  Eigen::MatrixXd features;                  // n x d
  Eigen::VectorXd responses;                 // n
  std::optional<Eigen::VectorXd> treatment;  // n, binary, causal only
  std::vector<std::string> feature_names;    // d
  std::string response_name = "y";
  std::string treatment_name;

  int n() const { return static_cast<int>(features.rows()); }
  int d() const { return static_cast<int>(features.cols()); }

  void validate() const {
    if (features.rows() < 1 || features.cols() < 1)
      throw SizeError("dataset needs at least one row and one feature");
    if (responses.size() != features.rows())
      throw SchemaError("responses length does not match feature rows");
    if (!feature_names.empty() &&
        static_cast<int>(feature_names.size()) != d())
      throw SchemaError("feature name count does not match feature columns");
    if (!features.allFinite() || !responses.allFinite())
      throw ParseError("dataset contains non-finite values");
    if (treatment) {
      if (treatment->size() != features.rows())
        throw SchemaError("treatment length does not match feature rows");
      for (int i = 0; i < treatment->size(); ++i) {
        double w = (*treatment)(i);
        if (w != 0.0 && w != 1.0)
          throw ParseError("treatment column must be binary 0/1");
      }
    }
  }

  // Order-sensitive content hash (FNV-1a over dims, names and raw value
  // bits).  Stored in model files so predictions can refuse a dataset that
  // is not the one the forest was grown on.
  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto mix_byte = [&h](unsigned char b) {
      h ^= b;
      h *= 0x100000001B3ULL;
    };
    auto mix_u64 = [&](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) mix_byte(static_cast<unsigned char>(v >> (8 * i)));
    };
    auto mix_double = [&](double x) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      mix_u64(bits);
    };
    mix_u64(static_cast<std::uint64_t>(n()));
    mix_u64(static_cast<std::uint64_t>(d()));
    for (const auto& name : feature_names)
      for (char c : name) mix_byte(static_cast<unsigned char>(c));
    for (char c : response_name) mix_byte(static_cast<unsigned char>(c));
    for (int j = 0; j < d(); ++j)
      for (int i = 0; i < n(); ++i) mix_double(features(i, j));
    for (int i = 0; i < n(); ++i) mix_double(responses(i));
    if (treatment)
      for (int i = 0; i < n(); ++i) mix_double((*treatment)(i));
    return h;
  }
};

// ============================================================================
// CSV loading
// ============================================================================

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  cells.push_back(trim(cur));
  return cells;
}

inline double parse_cell(const std::string& cell, int row, int col) {
  double value = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ParseError("row " + std::to_string(row) + ", column " +
                     std::to_string(col) + ": cannot parse '" + cell +
                     "' as a number");
  if (!std::isfinite(value))
    throw ParseError("row " + std::to_string(row) + ", column " +
                     std::to_string(col) + ": non-finite value");
  return value;
}

}  // namespace detail

// Loads a strict numeric CSV with a header row.  `response_column` names the
// outcome; `treatment_column`, when non-empty, names a binary 0/1 column.
// Every other column becomes a feature, in file order.  Cells must parse
// fully as finite numbers; ragged rows are rejected.
inline Dataset load_csv(const std::string& path,
                        const std::string& response_column,
                        const std::string& treatment_column = "") {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw SizeError("'" + path + "' is empty");
  std::vector<std::string> header = detail::split_csv_line(line);
  int num_cols = static_cast<int>(header.size());

  int response_idx = -1;
  int treatment_idx = -1;
  std::vector<int> feature_cols;
  for (int j = 0; j < num_cols; ++j) {
    if (header[j] == response_column) {
      if (response_idx >= 0)
        throw SchemaError("duplicate response column '" + response_column + "'");
      response_idx = j;
    } else if (!treatment_column.empty() && header[j] == treatment_column) {
      if (treatment_idx >= 0)
        throw SchemaError("duplicate treatment column '" + treatment_column + "'");
      treatment_idx = j;
    } else {
      feature_cols.push_back(j);
    }
  }
  if (response_idx < 0)
    throw SchemaError("response column '" + response_column + "' not found in '" +
                      path + "'");
  if (!treatment_column.empty() && treatment_idx < 0)
    throw SchemaError("treatment column '" + treatment_column +
                      "' not found in '" + path + "'");
  if (feature_cols.empty())
    throw SchemaError("'" + path + "' has no feature columns");

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (static_cast<int>(cells.size()) != num_cols)
      throw SchemaError("row " + std::to_string(line_no) + " has " +
                        std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(num_cols));
    std::vector<double> parsed(cells.size());
    for (int j = 0; j < num_cols; ++j)
      parsed[static_cast<std::size_t>(j)] = detail::parse_cell(cells[static_cast<std::size_t>(j)], line_no, j + 1);
    rows.push_back(std::move(parsed));
  }
  if (rows.empty()) throw SizeError("'" + path + "' has no data rows");

  Dataset data;
  int n = static_cast<int>(rows.size());
  int d = static_cast<int>(feature_cols.size());
  data.features.resize(n, d);
  data.responses.resize(n);
  for (int j = 0; j < d; ++j)
    data.feature_names.push_back(header[static_cast<std::size_t>(feature_cols[static_cast<std::size_t>(j)])]);
  data.response_name = response_column;
  for (int i = 0; i < n; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    for (int j = 0; j < d; ++j)
      data.features(i, j) = row[static_cast<std::size_t>(feature_cols[static_cast<std::size_t>(j)])];
    data.responses(i) = row[static_cast<std::size_t>(response_idx)];
  }
  if (treatment_idx >= 0) {
    Eigen::VectorXd w(n);
    for (int i = 0; i < n; ++i) w(i) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(treatment_idx)];
    data.treatment = std::move(w);
    data.treatment_name = treatment_column;
  }
  data.validate();
  return data;
}

// ============================================================================
// Honest subsampling
// ============================================================================

// Draws s indices without replacement from {0, ..., n-1} and splits them
// into two disjoint sets: J (structure, size ~ (1 - honesty_fraction) * s)
// and I (leaf population).  Both are returned sorted.  Each set always gets
// at least one index.
inline std::pair<std::vector<int>, std::vector<int>> draw_disjoint_subsamples(
    int n, int s, double honesty_fraction, SeededRng& rng) {
  if (s < 2) throw SizeError("subsample size must be at least 2");
  if (s > n)
    throw SizeError("subsample size " + std::to_string(s) +
                    " exceeds available rows " + std::to_string(n));
  if (!(honesty_fraction > 0.0) || !(honesty_fraction < 1.0))
    throw ConfigError("honesty fraction must lie strictly between 0 and 1");
  std::vector<int> drawn = rng.sample_without_replacement(n, s);
  long j_size = std::lround((1.0 - honesty_fraction) * s);
  j_size = std::min<long>(std::max<long>(j_size, 1), s - 1);
  std::vector<int> j_set(drawn.begin(), drawn.begin() + j_size);
  std::vector<int> i_set(drawn.begin() + j_size, drawn.end());
  std::sort(j_set.begin(), j_set.end());
  std::sort(i_set.begin(), i_set.end());
  return {std::move(j_set), std::move(i_set)};
}

}  // namespace llf
