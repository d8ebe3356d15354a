#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "satnews/stats.hpp"
#include "oracles.hpp"

using namespace satnews;
using namespace satnews::oracles;

TEST(Wilcoxon, IdenticalSamplesAreDegenerate) {
  const std::vector<double> x = {1, 2, 3};
  EXPECT_THROW(wilcoxon_signed_rank(x, x), DegeneratePairs);
  EXPECT_THROW(wilcoxon_signed_rank(x, std::vector<double>{1, 2}), DataError);
}

TEST(Wilcoxon, AllPositiveFivePairs) {
  const std::vector<double> x = {1.1, 2.2, 3.3, 4.4, 5.5}, y = {0, 0, 0, 0, 0};
  const auto r = wilcoxon_signed_rank(x, y);
  EXPECT_EQ(r.n_effective, 5u);
  EXPECT_EQ(r.w, 0.0);
  EXPECT_EQ(r.method, WilcoxonMethod::exact);
  EXPECT_DOUBLE_EQ(r.p_two_sided, 0.0625);
}

TEST(Wilcoxon, ExactMatchesEnumerationOnTwelvePairs) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int fixture = 0; fixture < 25; ++fixture) {
    std::vector<double> x(12), y(12), d(12);
    const double shift = 0.15 * fixture;
    for (int i = 0; i < 12; ++i) {
      x[i] = normal(rng) + shift;
      y[i] = normal(rng);
      d[i] = x[i] - y[i];
    }
    const auto r = wilcoxon_signed_rank(x, y);
    ASSERT_EQ(r.method, WilcoxonMethod::exact);
    EXPECT_NEAR(r.p_two_sided, enumeration_p(d), 1e-12) << "fixture " << fixture;
  }
}

TEST(Wilcoxon, NormalApproximationMatchesReference) {
  // Reference p-values from scipy.stats.wilcoxon(zero_method="wilcox",
  // correction=True, method="approx") on the same arrays.
  const std::vector<double> x = {0.0,  0.47, 1.68, 3.63, 6.32, 2.45, 6.62, 4.23, 2.58, 1.67,
                                 1.5,  2.07, 3.38, 5.43, 8.22, 4.45, 8.72, 6.43, 4.88, 4.07,
                                 4.0,  4.67, 6.08, 8.23, 3.82, 7.45, 4.52, 9.63, 8.18, 7.47};
  const std::vector<double> y = {0.0,  0.53, 1.06, 1.59, 2.12, 2.65, 3.18, 3.71, 4.24, 4.77,
                                 0.2,  0.73, 1.26, 1.79, 2.32, 2.85, 3.38, 3.91, 4.44, 4.97,
                                 0.4,  0.93, 1.46, 1.99, 2.52, 3.05, 3.58, 4.11, 4.64, 0.07};
  const auto r = wilcoxon_signed_rank(x, y);
  EXPECT_EQ(r.n_effective, 29u);
  EXPECT_EQ(r.method, WilcoxonMethod::normal_approx);
  EXPECT_DOUBLE_EQ(r.w, 37.0);
  EXPECT_NEAR(r.p_two_sided, 9.934904305972164e-05, 1e-12);

  const std::vector<double> a = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13};
  const std::vector<double> b = {0, 0, 5, 2, 3, 8, 5, 8, 6, 13, 9, 9, 14};
  const auto t = wilcoxon_signed_rank(a, b);
  EXPECT_TRUE(t.ties);
  EXPECT_EQ(t.n_effective, 12u);
  EXPECT_EQ(t.method, WilcoxonMethod::normal_approx);
  EXPECT_DOUBLE_EQ(t.w, 24.5);
  EXPECT_NEAR(t.p_two_sided, 0.2606056605304138, 1e-12);
}

TEST(Wilcoxon, SymmetricInArguments) {
  const std::vector<double> x = {3.1, 0.2, 5.5, 2.0, 7.7, 1.3, 4.4, 6.1};
  const std::vector<double> y = {2.0, 1.0, 1.5, 2.5, 3.0, 0.1, 0.3, 0.9};
  const auto a = wilcoxon_signed_rank(x, y);
  const auto b = wilcoxon_signed_rank(y, x);
  EXPECT_EQ(a.w, b.w);
  EXPECT_EQ(a.p_two_sided, b.p_two_sided);
  EXPECT_EQ(a.w_plus, b.w_minus);
}

TEST(Wilcoxon, LargeShiftReachesMinimumP) {
  std::vector<double> x(10), y(10);
  for (int i = 0; i < 10; ++i) {
    x[i] = 1000.0 + i;
    y[i] = -0.5 * i * i;
  }
  const auto r = wilcoxon_signed_rank(x, y);
  EXPECT_DOUBLE_EQ(r.p_two_sided, 2.0 / 1024.0);

  std::vector<double> big_x(200), big_y(200);
  for (int i = 0; i < 200; ++i) {
    big_x[i] = 1e6 + i;
    big_y[i] = 0.001 * i;
  }
  const auto big = wilcoxon_signed_rank(big_x, big_y);
  EXPECT_GT(big.p_two_sided, 0.0);
  EXPECT_LT(big.p_two_sided, 1e-30);
}

TEST(Wilcoxon, SignedRankCountsSumToPowerOfTwo) {
  for (std::size_t n : {1u, 5u, 12u, 25u}) {
    const auto counts = signed_rank_counts(n);
    double total = 0;
    for (double c : counts) total += c;
    EXPECT_DOUBLE_EQ(total, std::ldexp(1.0, static_cast<int>(n)));
  }
}

TEST(Mi, IndependentFeatureNearZero) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  std::bernoulli_distribution coin(0.5);
  std::vector<double> f(10000);
  std::vector<int> y(10000);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f[i] = normal(rng);
    y[i] = coin(rng);
  }
  const double mi = mutual_information(f, y);
  EXPECT_GE(mi, 0.0);
  EXPECT_LT(mi, 0.02);
}

TEST(Mi, DeterministicBinaryFeatureIsOneBit) {
  std::vector<double> f;
  std::vector<int> y;
  for (int i = 0; i < 1000; ++i) {
    y.push_back(i % 2);
    f.push_back(i % 2);
  }
  for (int bins : {2, 16})
    EXPECT_NEAR(mutual_information(f, y, bins), 1.0, 1e-9);
}

TEST(Mi, ClosedFormJoint) {
  // Direct evaluation of sum p(x,y) log2(p(x,y) / (p(x) p(y))) with all
  // marginals 0.5.
  const double oracle = 2 * 0.4 * std::log2(0.4 / 0.25) + 2 * 0.1 * std::log2(0.1 / 0.25);
  EXPECT_NEAR(oracle, 0.278, 1e-3);
  EXPECT_NEAR(mutual_information_from_counts({{40, 10}, {10, 40}}), oracle, 1e-12);

  std::vector<double> f;
  std::vector<int> y;
  auto add = [&](int x, int label, int count) {
    for (int i = 0; i < count; ++i) {
      f.push_back(x);
      y.push_back(label);
    }
  };
  add(0, 0, 400);
  add(0, 1, 100);
  add(1, 0, 100);
  add(1, 1, 400);
  EXPECT_NEAR(mutual_information(f, y), 0.278, 1e-3);
  EXPECT_NEAR(mutual_information(f, y), oracle, 1e-12);
}

TEST(Mi, ConstantFeatureAndBounds) {
  const std::vector<double> f(100, 3.0);
  std::vector<int> y(100);
  for (int i = 0; i < 100; ++i) y[i] = i % 3 == 0;
  EXPECT_EQ(mutual_information(f, y), 0.0);
  EXPECT_THROW(mutual_information(f, y, 1), ConfigError);
  EXPECT_THROW(mutual_information(f, std::vector<int>(99)), DataError);
}

TEST(Mi, InvariantUnderAffineMaps) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  std::vector<double> f(1024), g(1024), h(1024);
  std::vector<int> y(1024);
  for (std::size_t i = 0; i < f.size(); ++i) {
    y[i] = static_cast<int>(i % 2);
    f[i] = normal(rng) + 0.7 * y[i];
    g[i] = 3.0 * f[i] - 2.0;
    h[i] = -0.5 * f[i] + 1.0;
  }
  const double base = mutual_information(f, y);
  EXPECT_GT(base, 0.05);
  EXPECT_LE(base, 1.0);
  EXPECT_NEAR(mutual_information(g, y), base, 1e-12);
  EXPECT_NEAR(mutual_information(h, y), base, 1e-12);
}

TEST(Mi, EqualFrequencyBinsKeepTiesTogether) {
  const std::vector<double> v = {5, 1, 1, 1, 1, 2, 3, 4};
  const auto bins = equal_frequency_bins(v, 4);
  EXPECT_EQ(bins[1], bins[2]);
  EXPECT_EQ(bins[2], bins[4]);
  for (int b : bins) {
    EXPECT_GE(b, 0);
    EXPECT_LT(b, 4);
  }
  EXPECT_EQ(bins[0], 3);
}

TEST(Metrics, Examples) {
  const auto all = metrics_from_counts(3, 0, 0, 5);
  EXPECT_EQ(all.accuracy, 1.0);
  EXPECT_EQ(all.precision, 1.0);
  EXPECT_EQ(all.recall, 1.0);
  EXPECT_EQ(all.f1, 1.0);
  EXPECT_FALSE(all.degenerate);

  const auto half = metrics_from_counts(1, 1, 1, 1);
  EXPECT_EQ(half.accuracy, 0.5);
  EXPECT_EQ(half.precision, 0.5);
  EXPECT_EQ(half.recall, 0.5);
  EXPECT_EQ(half.f1, 0.5);

  const auto none = metrics_from_counts(0, 0, 4, 6);
  EXPECT_EQ(none.precision, 0.0);
  EXPECT_EQ(none.recall, 0.0);
  EXPECT_EQ(none.f1, 0.0);
  EXPECT_TRUE(none.degenerate);
}

TEST(Metrics, FromLabelSequences) {
  using L = Label;
  const std::vector<Label> pred = {L::satire, L::satire, L::true_news, L::true_news, L::satire};
  const std::vector<Label> gold = {L::satire, L::true_news, L::satire, L::true_news, L::satire};
  const auto m = classification_metrics(pred, gold);
  EXPECT_EQ(m.tp, 2u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.fn, 1u);
  EXPECT_EQ(m.tn, 1u);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.6);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3.0);
  EXPECT_THROW(classification_metrics(pred, std::vector<Label>{L::satire}), DataError);
  EXPECT_EQ(classification_metrics(gold, gold).f1, 1.0);
}

TEST(Metrics, HarmonicMean) {
  const auto m = metrics_from_counts(6, 2, 4, 10);
  EXPECT_DOUBLE_EQ(m.precision, 0.75);
  EXPECT_DOUBLE_EQ(m.recall, 0.6);
  EXPECT_DOUBLE_EQ(m.f1, 2 * 0.75 * 0.6 / 1.35);
}
