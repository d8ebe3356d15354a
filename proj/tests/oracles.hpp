#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "satnews/lm.hpp"
#include "satnews/svm.hpp"

namespace satnews::oracles {

double oracle_kernel(const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& v, bool poly, int degree,
                     double gamma, double coef0) {
  const double dot = u.dot(v);
  return poly ? std::pow(gamma * dot + coef0, degree) : dot;
}

// Exact minimum of 0.5 a'Qa - e'a subject to 0 <= a <= C, y'a = 0, found by
// enumerating every assignment of {at 0, at C, free} and solving the
// equality-constrained stationarity system on the free set.
double exact_dual_minimum(const Eigen::MatrixXd& k, const std::vector<int>& y, double c) {
  const int n = static_cast<int>(y.size());
  Eigen::MatrixXd q(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) q(i, j) = y[i] * y[j] * k(i, j);
  auto objective = [&](const Eigen::VectorXd& a) { return 0.5 * a.dot(q * a) - a.sum(); };

  double best = INFINITY;
  int total = 1;
  for (int i = 0; i < n; ++i) total *= 3;
  for (int code = 0; code < total; ++code) {
    std::vector<int> state(n);
    int rest = code;
    for (int i = 0; i < n; ++i) {
      state[i] = rest % 3;
      rest /= 3;
    }
    std::vector<int> free;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      if (state[i] == 1) a(i) = c;
      if (state[i] == 2) free.push_back(i);
    }
    const int m = static_cast<int>(free.size());
    if (m == 0) {
      double eq = 0;
      for (int i = 0; i < n; ++i) eq += y[i] * a(i);
      if (std::abs(eq) < 1e-12) best = std::min(best, objective(a));
      continue;
    }
    // [Q_FF y_F; y_F' 0] [a_F; lambda] = [e_F - Q_FB a_B; -y_B' a_B]
    Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(m + 1, m + 1);
    Eigen::VectorXd rhs(m + 1);
    double fixed_eq = 0;
    for (int i = 0; i < n; ++i) fixed_eq += y[i] * a(i);
    for (int r = 0; r < m; ++r) {
      for (int s = 0; s < m; ++s) sys(r, s) = q(free[r], free[s]);
      sys(r, m) = y[free[r]];
      sys(m, r) = y[free[r]];
      rhs(r) = 1.0 - q.row(free[r]).dot(a);
    }
    rhs(m) = -fixed_eq;
    const Eigen::VectorXd sol = sys.completeOrthogonalDecomposition().solve(rhs);
    if ((sys * sol - rhs).norm() > 1e-9) continue;
    bool feasible = true;
    for (int r = 0; r < m; ++r) {
      if (sol(r) < -1e-12 || sol(r) > c + 1e-12) feasible = false;
      a(free[r]) = std::clamp(sol(r), 0.0, c);
    }
    if (feasible) best = std::min(best, objective(a));
  }
  return best;
}

struct Fixture {
  Eigen::MatrixXd x;
  std::vector<int> y;
};

Fixture random_fixture(std::uint64_t seed, int n, int d) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Fixture f{Eigen::MatrixXd(n, d), std::vector<int>(static_cast<std::size_t>(n))};
  for (int i = 0; i < n; ++i) {
    f.y[static_cast<std::size_t>(i)] = i % 2 == 0 ? 1 : -1;
    for (int k = 0; k < d; ++k) f.x(i, k) = normal(rng) + 0.8 * f.y[static_cast<std::size_t>(i)];
  }
  return f;
}

SvmOptions raw_options(KernelKind kind, double c) {
  SvmOptions o;
  o.c = c;
  o.kernel.kind = kind;
  o.kernel.degree = 3;
  o.kernel.gamma = 0.5;
  o.kernel.coef0 = 1.0;
  o.standardize = false;
  return o;
}

// Two-sided exact p by enumerating all 2^n sign patterns over ranks 1..n.
double enumeration_p(const std::vector<double>& d) {
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<int> rank(n);
  for (std::size_t r = 0; r < n; ++r) rank[order[r]] = static_cast<int>(r + 1);
  int w_plus = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += rank[i];
    if (d[i] > 0) w_plus += rank[i];
  }
  const int w = std::min(w_plus, total - w_plus);
  std::uint64_t at_most = 0;
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    int s = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) s += static_cast<int>(i + 1);
    if (s <= w) ++at_most;
  }
  return std::min(1.0, 2.0 * static_cast<double>(at_most) / std::ldexp(1.0, static_cast<int>(n)));
}


// Central differences against the analytic chunk gradient.
double max_gradient_error(const LmModel& model, const std::vector<TokenId>& inputs,
                          const std::vector<TokenId>& targets, Eigen::Index streams,
                          const LmState& state0, bool with_dropout) {
  const double step = 1e-5;
  auto loss_at = [&](const LmModel& m, LmParams* grads) {
    LmState s = state0;
    LmParams scratch = LmParams::zeros(m.config, m.vocab_size());
    std::mt19937_64 rng(99);
    DropoutSource d{with_dropout ? &rng : nullptr, m.config.dropout};
    return chunk_loss_and_grad(m, inputs, targets, streams, s, grads ? *grads : scratch, 1.0, d);
  };
  LmParams analytic = LmParams::zeros(model.config, model.vocab_size());
  loss_at(model, &analytic);

  LmModel probe = model;
  std::vector<MatrixXd*> grad_tensors;
  analytic.for_each([&](const std::string&, MatrixXd& g) { grad_tensors.push_back(&g); });
  double worst = 0.0;
  std::size_t k = 0;
  probe.params.for_each([&](const std::string&, MatrixXd& w) {
    const MatrixXd& g = *grad_tensors[k++];
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double orig = w.data()[i];
      w.data()[i] = orig + step;
      const double up = loss_at(probe, nullptr);
      w.data()[i] = orig - step;
      const double down = loss_at(probe, nullptr);
      w.data()[i] = orig;
      const double numeric = (up - down) / (2 * step);
      const double a = g.data()[i];
      // Below ~1e-5 the difference quotient is dominated by roundoff (eps * loss / step).
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-5});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  });
  return worst;
}

}  // namespace satnews::oracles
