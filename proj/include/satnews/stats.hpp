#pragma once

// Wilcoxon signed-rank test, plug-in mutual information over equal-frequency
// bins, and binary classification metrics with satire as the positive class.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "satnews/corpus.hpp"
#include "satnews/error.hpp"
#include "satnews/features.hpp"

namespace satnews {

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

enum class WilcoxonMethod { exact, normal_approx };

inline std::string to_string(WilcoxonMethod m) { return m == WilcoxonMethod::exact ? "exact" : "normal_approx"; }

struct WilcoxonResult {
  std::size_t n_effective = 0;
  double w_plus = 0.0;
  double w_minus = 0.0;
  double w = 0.0;  // min(w_plus, w_minus)
  double p_two_sided = 1.0;
  WilcoxonMethod method = WilcoxonMethod::exact;
  bool ties = false;
};

inline constexpr std::size_t kWilcoxonExactMaxN = 25;

/// Ranks of the values (1-based), ties receiving their average rank.
inline std::vector<double> average_ranks(std::span<const double> values, bool* has_ties = nullptr) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  if (has_ties) *has_ties = false;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    if (j > i && has_ties) *has_ties = true;
    i = j + 1;
  }
  return ranks;
}

/// Null distribution of W+ for n untied ranks: counts[s] = number of sign
/// assignments with W+ = s.
inline std::vector<double> signed_rank_counts(std::size_t n) {
  const std::size_t total = n * (n + 1) / 2;
  std::vector<double> counts(total + 1, 0.0);
  counts[0] = 1.0;
  for (std::size_t r = 1; r <= n; ++r)
    for (std::size_t s = total; s >= r; --s) counts[s] += counts[s - r];
  return counts;
}

/// Two-sided test of d = x - y. Zero differences are dropped. Exact null
/// distribution when at most 25 nonzero differences remain and none tie;
/// otherwise the normal approximation with tie and continuity corrections.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("paired samples must have equal length");
  if (x.empty()) throw DataError("paired samples must be nonempty");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (!std::isfinite(d)) throw NumericalError("non-finite paired difference");
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) throw DegeneratePairs();

  std::vector<double> magnitudes(diffs.size());
  std::transform(diffs.begin(), diffs.end(), magnitudes.begin(), [](double d) { return std::abs(d); });
  WilcoxonResult r;
  const auto ranks = average_ranks(magnitudes, &r.ties);
  r.n_effective = diffs.size();
  for (std::size_t i = 0; i < diffs.size(); ++i) (diffs[i] > 0 ? r.w_plus : r.w_minus) += ranks[i];
  r.w = std::min(r.w_plus, r.w_minus);

  const double n = static_cast<double>(r.n_effective);
  if (r.n_effective <= kWilcoxonExactMaxN && !r.ties) {
    r.method = WilcoxonMethod::exact;
    const auto counts = signed_rank_counts(r.n_effective);
    const auto w = static_cast<std::size_t>(r.w);
    double tail = 0.0;
    for (std::size_t s = 0; s <= w; ++s) tail += counts[s];
    r.p_two_sided = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(r.n_effective)));
    return r;
  }

  r.method = WilcoxonMethod::normal_approx;
  const double mean = n * (n + 1) / 4.0;
  double var = n * (n + 1) * (2 * n + 1) / 24.0;
  std::sort(magnitudes.begin(), magnitudes.end());
  for (std::size_t i = 0; i < magnitudes.size();) {
    std::size_t j = i;
    while (j < magnitudes.size() && magnitudes[j] == magnitudes[i]) ++j;
    const double t = static_cast<double>(j - i);
    var -= (t * t * t - t) / 48.0;
    i = j;
  }
  const double deviation = std::max(0.0, std::abs(r.w - mean) - 0.5);
  const double z = var > 0 ? deviation / std::sqrt(var) : 0.0;
  // The p-value is reported as strictly positive even when erfc underflows.
  r.p_two_sided = std::clamp(std::erfc(z / std::sqrt(2.0)), std::numeric_limits<double>::min(), 1.0);
  return r;
}

inline nlohmann::json to_json(const WilcoxonResult& r) {
  return {{"n_effective", r.n_effective}, {"w_plus", r.w_plus},     {"w_minus", r.w_minus}, {"W", r.w},
          {"p_two_sided", r.p_two_sided}, {"method", to_string(r.method)}, {"ties", r.ties}};
}

// ---------------------------------------------------------------------------
// Mutual information

/// Equal-frequency binning on ranks. Tied values share a bin; a value is
/// placed by the centre of its rank block, so at most `bins` cells are used.
inline std::vector<int> equal_frequency_bins(std::span<const double> values, int bins) {
  if (bins < 2) throw ConfigError("mutual information needs at least 2 bins");
  const auto ranks = average_ranks(values);
  const double n = static_cast<double>(values.size());
  std::vector<int> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    // average_ranks is 1-based; rank - 0.5 is the block centre on [0, n).
    const double centre = ranks[i] - 0.5;
    out[i] = std::min(bins - 1, static_cast<int>(std::floor(centre * bins / n)));
  }
  return out;
}

/// Plug-in estimate of I(X;Y) in bits from a joint count table.
inline double mutual_information_from_counts(const std::vector<std::vector<double>>& joint) {
  double total = 0.0;
  std::vector<double> px(joint.size(), 0.0);
  std::vector<double> py;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    if (py.size() < joint[i].size()) py.resize(joint[i].size(), 0.0);
    for (std::size_t j = 0; j < joint[i].size(); ++j) {
      px[i] += joint[i][j];
      py[j] += joint[i][j];
      total += joint[i][j];
    }
  }
  if (total <= 0) return 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < joint.size(); ++i)
    for (std::size_t j = 0; j < joint[i].size(); ++j) {
      const double c = joint[i][j];
      if (c <= 0) continue;
      mi += (c / total) * std::log2(c * total / (px[i] * py[j]));
    }
  return std::max(0.0, mi);
}

/// MI in bits between a real feature (equal-frequency binned) and a binary
/// label given as 0/1.
inline double mutual_information(std::span<const double> feature, std::span<const int> labels, int bins = 16) {
  if (feature.size() != labels.size()) throw DataError("feature and label samples differ in length");
  if (bins < 2) throw ConfigError("mutual information needs at least 2 bins");
  if (feature.empty()) return 0.0;
  const auto cells = equal_frequency_bins(feature, bins);
  std::vector<std::vector<double>> joint(static_cast<std::size_t>(bins), std::vector<double>(2, 0.0));
  for (std::size_t i = 0; i < feature.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("labels must be 0 or 1");
    joint[static_cast<std::size_t>(cells[i])][static_cast<std::size_t>(labels[i])] += 1.0;
  }
  return mutual_information_from_counts(joint);
}

struct MiReport {
  int bins = 16;
  std::vector<std::pair<std::string, double>> features;  // name, bits
};

inline MiReport mi_report(std::span<const FeatureVector> rows, int bins = 16) {
  std::vector<int> labels;
  for (const auto& r : rows) {
    if (!r.label) throw DataError("mutual information needs labeled feature rows ('" + r.id + "' has none)");
    labels.push_back(*r.label == Label::satire ? 1 : 0);
  }
  MiReport report{bins, {}};
  std::vector<double> column(rows.size());
  for (std::size_t k = 0; k < kFeatureDim; ++k) {
    for (std::size_t i = 0; i < rows.size(); ++i) column[i] = rows[i].values[k];
    report.features.emplace_back(kFeatureNames[k], mutual_information(column, labels, bins));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool degenerate = false;  // a zero denominator forced precision, recall or f1 to 0
};

inline Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  Metrics m{tp, fp, fn, tn};
  const double total = static_cast<double>(tp + fp + fn + tn);
  if (total == 0) throw DataError("metrics need at least one prediction");
  m.accuracy = static_cast<double>(tp + tn) / total;
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp); else m.degenerate = true;
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn); else m.degenerate = true;
  if (m.precision + m.recall > 0) {
    m.f1 = 2 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.degenerate = true;
  }
  return m;
}

inline Metrics classification_metrics(std::span<const Label> predictions, std::span<const Label> gold) {
  if (predictions.size() != gold.size()) throw DataError("prediction and gold sequences differ in length");
  if (predictions.empty()) throw DataError("metrics need at least one prediction");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool p = predictions[i] == Label::satire;
    const bool g = gold[i] == Label::satire;
    if (p && g) ++tp;
    else if (p) ++fp;
    else if (g) ++fn;
    else ++tn;
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

inline nlohmann::json to_json(const Metrics& m) {
  return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
          {"tp", m.tp},             {"fp", m.fp},               {"fn", m.fn},         {"tn", m.tn},
          {"degenerate", m.degenerate}};
}

}  // namespace satnews
