#pragma once

// The 9-dimensional article representation
//   [N, mean_t, median_t, var_t, range_t, mean_s, median_s, var_s, range_s]
// built from the two surprise-score sequences.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "satnews/error.hpp"
#include "satnews/surprise.hpp"

namespace satnews {

struct ScoreStats {
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double variance = 0.0;  // sample variance, n - 1 denominator; 0 when n == 1
  double range = 0.0;
};

inline ScoreStats summarize(std::span<const double> scores) {
  if (scores.empty()) throw EmptyScores();
  ScoreStats s;
  s.n = scores.size();
  double sum = 0.0;
  for (double v : scores) sum += v;
  s.mean = sum / static_cast<double>(s.n);

  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = s.n / 2;
  s.median = s.n % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  s.range = sorted.back() - sorted.front();

  if (s.n > 1) {
    double ss = 0.0;
    for (double v : scores) ss += (v - s.mean) * (v - s.mean);
    s.variance = ss / static_cast<double>(s.n - 1);
  }
  return s;
}

inline constexpr std::size_t kFeatureDim = 9;

inline constexpr std::array<const char*, kFeatureDim> kFeatureNames = {
    "N", "mean_t", "median_t", "var_t", "range_t", "mean_s", "median_s", "var_s", "range_s"};

struct FeatureVector {
  std::string id;
  std::optional<Label> label;
  std::array<double, kFeatureDim> values{};
};

inline FeatureVector feature_vector(const ArticleScorePair& pair) {
  if (pair.true_scores.size() != pair.satire_scores.size())
    throw DataError("article '" + pair.article_id + "' has score sequences of different lengths");
  const auto t = summarize(pair.true_scores);
  const auto s = summarize(pair.satire_scores);
  return {pair.article_id,
          pair.label,
          {static_cast<double>(t.n), t.mean, t.median, t.variance, t.range, s.mean, s.median, s.variance,
           s.range}};
}

/// Cumulative feature groups: 1 mean, 2 + median, 3 + variance, 4 + range,
/// 5 + sample size. Each statistic contributes its true/satire pair.
inline std::vector<std::size_t> feature_group(int group) {
  if (group < 1 || group > 5) throw ConfigError("feature group must be in 1..5");
  std::vector<std::size_t> cols;
  for (int stat = 0; stat < std::min(group, 4); ++stat) {
    cols.push_back(1 + static_cast<std::size_t>(stat));
    cols.push_back(5 + static_cast<std::size_t>(stat));
  }
  if (group == 5) cols.insert(cols.begin(), 0);
  return cols;
}

// ---------------------------------------------------------------------------
// CSV: id,label,N,mean_t,median_t,var_t,range_t,mean_s,median_s,var_s,range_s

inline std::string csv_header() {
  std::string h = "id,label";
  for (auto name : kFeatureNames) h += std::string(",") + name;
  return h;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_features_csv(const std::string& path, std::span<const FeatureVector> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write feature file " + path);
  out << csv_header() << '\n';
  for (const auto& r : rows) {
    if (r.id.find_first_of(",\"\n") != std::string::npos)
      throw DataError("article id '" + r.id + "' cannot be written to CSV unquoted");
    out << r.id << ',' << (r.label ? to_string(*r.label) : "");
    for (double v : r.values) out << ',' << format_double(v);
    out << '\n';
  }
}

inline std::vector<FeatureVector> read_features_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature file " + path);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != csv_header())
    throw DataError(path + ": line 1: expected header '" + csv_header() + "'");
  std::vector<FeatureVector> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    const auto where = path + ": line " + std::to_string(line_no) + ": ";
    if (cells.size() != 2 + kFeatureDim)
      throw DataError(where + "expected " + std::to_string(2 + kFeatureDim) + " columns");
    FeatureVector r;
    r.id = cells[0];
    auto label_text = std::string(detail::trim(cells[1]));
    if (!label_text.empty()) {
      r.label = parse_label(label_text);
      if (!r.label) throw DataError(where + "unknown label '" + label_text + "'");
    }
    for (std::size_t k = 0; k < kFeatureDim; ++k) {
      try {
        std::size_t used = 0;
        r.values[k] = std::stod(cells[2 + k], &used);
        if (used != cells[2 + k].size()) throw std::invalid_argument("trailing");
      } catch (const std::logic_error&) {
        throw DataError(where + "bad number in column " + kFeatureNames[k]);
      }
      if (!std::isfinite(r.values[k])) throw DataError(where + "non-finite value in column " + kFeatureNames[k]);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace satnews
