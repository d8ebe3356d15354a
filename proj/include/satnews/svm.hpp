#pragma once

// Kernel SVM (linear / polynomial) on standardized features, trained with
// SMO using second-order working-set selection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <list>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "satnews/corpus.hpp"
#include "satnews/error.hpp"

namespace satnews {

enum class KernelKind { linear, polynomial };

inline std::string to_string(KernelKind k) { return k == KernelKind::linear ? "linear" : "poly"; }

inline KernelKind parse_kernel(const std::string& text) {
  if (text == "linear") return KernelKind::linear;
  if (text == "poly" || text == "polynomial") return KernelKind::polynomial;
  throw ConfigError("unknown kernel '" + text + "' (expected linear or poly)");
}

/// K(u, v) = <u, v> for linear, (gamma <u, v> + coef0)^degree for polynomial.
/// An unset gamma resolves at training time to 1 / (dim * variance of the
/// standardized training matrix).
struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  int degree = 3;
  std::optional<double> gamma;
  double coef0 = 0.0;

  void validate() const {
    if (degree < 1) throw ConfigError("polynomial degree must be >= 1");
    if (gamma && !(*gamma > 0)) throw ConfigError("gamma must be positive");
  }

  double operator()(std::span<const double> u, std::span<const double> v) const {
    double dot = 0.0;
    for (std::size_t k = 0; k < u.size(); ++k) dot += u[k] * v[k];
    if (kind == KernelKind::linear) return dot;
    const double base = gamma.value_or(1.0) * dot + coef0;
    double out = 1.0;
    for (int d = 0; d < degree; ++d) out *= base;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Standardization

/// Per-column (x - mean) / std with population std. Columns whose spread is
/// negligible are passed through unchanged.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> scale;

  static Scaler fit(const Eigen::MatrixXd& x) {
    if (x.rows() == 0) throw DataError("cannot fit a scaler on an empty matrix");
    Scaler s;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double m = x.col(j).mean();
      const double var = (x.col(j).array() - m).square().mean();
      const double sd = std::sqrt(var);
      const double magnitude = std::max(1.0, x.col(j).cwiseAbs().maxCoeff());
      if (sd <= 1e-12 * magnitude) {
        s.mean.push_back(0.0);
        s.scale.push_back(1.0);
      } else {
        s.mean.push_back(m);
        s.scale.push_back(sd);
      }
    }
    return s;
  }

  std::size_t dim() const { return mean.size(); }

  std::vector<double> transform(std::span<const double> x) const {
    if (x.size() != dim()) throw DataError("scaler dimension mismatch");
    std::vector<double> out(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) out[k] = (x[k] - mean[k]) / scale[k];
    return out;
  }

  std::vector<double> inverse_transform(std::span<const double> z) const {
    if (z.size() != dim()) throw DataError("scaler dimension mismatch");
    std::vector<double> out(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[k] * scale[k] + mean[k];
    return out;
  }

  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd out = x;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      out.col(j) = (x.col(j).array() - mean[static_cast<std::size_t>(j)]) / scale[static_cast<std::size_t>(j)];
    return out;
  }
};

// ---------------------------------------------------------------------------
// Model

struct SvmModel {
  KernelSpec kernel;  // gamma always resolved
  double c = 1.0;
  double positive_weight = 1.0;
  double negative_weight = 1.0;
  Scaler scaler;
  std::vector<std::size_t> columns;  // input columns used, in order
  std::size_t input_dim = 0;
  Eigen::MatrixXd support_vectors;  // n_sv x dim, standardized
  std::vector<double> dual_coef;    // alpha_i * y_i
  double bias = 0.0;

  std::size_t n_support() const { return dual_coef.size(); }
};

struct SvmOptions {
  double c = 1.0;
  KernelSpec kernel;
  double tol = 1e-3;
  std::int64_t max_iterations = 10'000'000;
  double positive_weight = 1.0;  // C multiplier for the +1 (satire) class
  double negative_weight = 1.0;
  bool standardize = true;
  std::vector<std::size_t> columns;  // empty: all columns
  std::size_t cache_bytes = std::size_t{256} << 20;
  std::function<void(const std::string&)> warn;
};

struct SvmTrainInfo {
  std::int64_t iterations = 0;
  bool converged = false;
  double gap = 0.0;             // max violation m(alpha) - M(alpha) at exit
  double dual_objective = 0.0;  // 0.5 a'Qa - e'a
  std::vector<double> alpha;    // one per training row
};

namespace detail {

// LRU cache of kernel-matrix rows.
class KernelRows {
 public:
  KernelRows(const Eigen::MatrixXd& x, const KernelSpec& k, std::size_t budget_bytes)
      : n_(static_cast<std::size_t>(x.rows())), dim_(static_cast<std::size_t>(x.cols())), kernel_(k) {
    data_.resize(n_ * dim_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t c = 0; c < dim_; ++c)
        data_[i * dim_ + c] = x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    capacity_ = std::max<std::size_t>(2, budget_bytes / std::max<std::size_t>(1, n_ * sizeof(double)));
    diag_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) diag_[i] = eval(i, i);
  }

  double diag(std::size_t i) const { return diag_[i]; }

  // The returned row stays valid until two further distinct rows are requested.
  const std::vector<double>& row(std::size_t i) {
    if (auto it = index_.find(i); it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->second;
    }
    if (lru_.size() >= capacity_) {
      index_.erase(lru_.back().first);
      lru_.pop_back();
    }
    std::vector<double> r(n_);
    for (std::size_t j = 0; j < n_; ++j) r[j] = eval(i, j);
    lru_.emplace_front(i, std::move(r));
    index_[i] = lru_.begin();
    return lru_.front().second;
  }

  double eval(std::size_t i, std::size_t j) const {
    return kernel_(std::span<const double>(&data_[i * dim_], dim_), std::span<const double>(&data_[j * dim_], dim_));
  }

 private:
  std::size_t n_, dim_;
  const KernelSpec& kernel_;
  std::vector<double> data_;
  std::size_t capacity_;
  std::vector<double> diag_;
  std::list<std::pair<std::size_t, std::vector<double>>> lru_;
  std::unordered_map<std::size_t, std::list<std::pair<std::size_t, std::vector<double>>>::iterator> index_;
};

inline Eigen::MatrixXd select_columns(const Eigen::MatrixXd& x, const std::vector<std::size_t>& columns) {
  if (columns.empty()) return x;
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] >= static_cast<std::size_t>(x.cols())) throw ConfigError("feature column out of range");
    out.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(columns[k]));
  }
  return out;
}

}  // namespace detail

/// Solves min 0.5 a'Qa - e'a s.t. 0 <= a_i <= C_i, y'a = 0 with
/// Q_ij = y_i y_j K(x_i, x_j), on rows that are already transformed.
inline SvmTrainInfo solve_smo(const Eigen::MatrixXd& x, std::span<const int> y, const KernelSpec& kernel,
                              std::span<const double> upper, double tol, std::int64_t max_iterations,
                              std::size_t cache_bytes, double* rho_out) {
  const std::size_t n = y.size();
  constexpr double kTau = 1e-12;
  detail::KernelRows rows(x, kernel, cache_bytes);
  std::vector<double> alpha(n, 0.0);
  std::vector<double> grad(n, -1.0);
  auto is_upper = [&](std::size_t t) { return alpha[t] >= upper[t]; };
  auto is_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

  SvmTrainInfo info;
  for (;;) {
    // Working set selection, second order.
    double gmax = -INFINITY;
    double gmin = INFINITY;
    std::size_t i = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * grad[t];
      if ((y[t] == 1 && !is_upper(t)) || (y[t] == -1 && !is_lower(t))) {
        if (v >= gmax) {
          gmax = v;
          i = t;
        }
      }
      if ((y[t] == 1 && !is_lower(t)) || (y[t] == -1 && !is_upper(t))) gmin = std::min(gmin, v);
    }
    info.gap = gmax - gmin;
    if (i == n || info.gap < tol) {
      info.converged = true;
      break;
    }
    if (info.iterations >= max_iterations) break;

    const auto& ki = rows.row(i);
    std::size_t j = n;
    double best = INFINITY;
    for (std::size_t t = 0; t < n; ++t) {
      if (!((y[t] == 1 && !is_lower(t)) || (y[t] == -1 && !is_upper(t)))) continue;
      const double b = gmax + y[t] * grad[t];
      if (b <= 0) continue;
      double a = rows.diag(i) + rows.diag(t) - 2.0 * ki[t];
      if (a <= 0) a = kTau;
      const double obj = -(b * b) / a;
      if (obj <= best) {
        best = obj;
        j = t;
      }
    }
    if (j == n) {
      info.converged = true;
      break;
    }
    ++info.iterations;

    const auto& kj = rows.row(j);
    const double qii = rows.diag(i), qjj = rows.diag(j), kij = ki[j];
    const double old_i = alpha[i], old_j = alpha[j];
    const double ci = upper[i], cj = upper[j];

    if (y[i] != y[j]) {
      double quad = qii + qjj - 2.0 * kij;
      if (quad <= 0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > ci - cj) {
        if (alpha[i] > ci) {
          alpha[i] = ci;
          alpha[j] = ci - diff;
        }
      } else if (alpha[j] > cj) {
        alpha[j] = cj;
        alpha[i] = cj + diff;
      }
    } else {
      double quad = qii + qjj - 2.0 * kij;
      if (quad <= 0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > ci) {
        if (alpha[i] > ci) {
          alpha[i] = ci;
          alpha[j] = sum - ci;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > cj) {
        if (alpha[j] > cj) {
          alpha[j] = cj;
          alpha[i] = sum - cj;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }

    const double di = alpha[i] - old_i;
    const double dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t)
      grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
  }

  // rho: average of y_i G_i over free vectors, midpoint of the feasible
  // interval when there are none.
  double ub = INFINITY, lb = -INFINITY, sum_free = 0.0;
  std::size_t n_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (is_upper(t)) {
      if (y[t] == -1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (is_lower(t)) {
      if (y[t] == 1) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++n_free;
      sum_free += yg;
    }
  }
  *rho_out = n_free > 0 ? sum_free / static_cast<double>(n_free) : 0.5 * (ub + lb);

  double obj = 0.0;
  for (std::size_t t = 0; t < n; ++t) obj += alpha[t] * (grad[t] - 1.0);
  info.dual_objective = 0.5 * obj;
  info.alpha = std::move(alpha);
  return info;
}

/// Fits the scaler on `x`, resolves gamma, and runs SMO. Labels are +1
/// (satire) / -1.
inline SvmModel train_svm(const Eigen::MatrixXd& x, std::span<const int> y, const SvmOptions& options,
                          SvmTrainInfo* info_out = nullptr) {
  options.kernel.validate();
  if (!(options.c > 0)) throw ConfigError("C must be positive");
  if (!(options.tol > 0)) throw ConfigError("tol must be positive");
  if (!(options.positive_weight > 0 && options.negative_weight > 0))
    throw ConfigError("class weights must be positive");
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw DataError("feature rows and labels differ in count");
  bool has_pos = false, has_neg = false;
  for (int v : y) {
    if (v == 1) has_pos = true;
    else if (v == -1) has_neg = true;
    else throw DataError("SVM labels must be +1 or -1");
  }
  if (!has_pos || !has_neg) throw DegenerateLabels("SVM training needs at least one example of each class");
  if (!x.allFinite()) throw NumericalError("non-finite feature values");

  SvmModel model;
  model.c = options.c;
  model.positive_weight = options.positive_weight;
  model.negative_weight = options.negative_weight;
  model.input_dim = static_cast<std::size_t>(x.cols());
  model.columns = options.columns;
  if (model.columns.empty())
    for (std::size_t k = 0; k < model.input_dim; ++k) model.columns.push_back(k);

  const Eigen::MatrixXd selected = detail::select_columns(x, model.columns);
  if (options.standardize) {
    model.scaler = Scaler::fit(selected);
  } else {
    model.scaler.mean.assign(static_cast<std::size_t>(selected.cols()), 0.0);
    model.scaler.scale.assign(static_cast<std::size_t>(selected.cols()), 1.0);
  }
  const Eigen::MatrixXd z = model.scaler.transform(selected);

  model.kernel = options.kernel;
  if (model.kernel.kind == KernelKind::polynomial && !model.kernel.gamma) {
    const double var = (z.array() - z.mean()).square().mean();
    model.kernel.gamma = var > 0 ? 1.0 / (static_cast<double>(z.cols()) * var) : 1.0;
  }
  if (!model.kernel.gamma) model.kernel.gamma = 1.0;

  std::vector<double> upper(y.size());
  for (std::size_t t = 0; t < y.size(); ++t)
    upper[t] = options.c * (y[t] == 1 ? options.positive_weight : options.negative_weight);

  double rho = 0.0;
  SvmTrainInfo info =
      solve_smo(z, y, model.kernel, upper, options.tol, options.max_iterations, options.cache_bytes, &rho);
  if (!info.converged && options.warn)
    options.warn("SMO stopped after " + std::to_string(info.iterations) +
                 " iterations without converging; remaining KKT gap " + std::to_string(info.gap));

  std::vector<Eigen::Index> sv;
  for (std::size_t t = 0; t < y.size(); ++t)
    if (info.alpha[t] > 0) sv.push_back(static_cast<Eigen::Index>(t));
  model.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), z.cols());
  for (std::size_t k = 0; k < sv.size(); ++k) {
    model.support_vectors.row(static_cast<Eigen::Index>(k)) = z.row(sv[k]);
    model.dual_coef.push_back(info.alpha[static_cast<std::size_t>(sv[k])] * y[static_cast<std::size_t>(sv[k])]);
  }
  model.bias = -rho;
  if (info_out) *info_out = std::move(info);
  return model;
}

/// Sum_i coef_i K(sv_i, scaled x) + b, for an input of the model's full input dimension.
inline double decision_function(const SvmModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim)
    throw DataError("expected " + std::to_string(model.input_dim) + " features, got " + std::to_string(x.size()));
  std::vector<double> picked(model.columns.size());
  for (std::size_t k = 0; k < model.columns.size(); ++k) picked[k] = x[model.columns[k]];
  const auto z = model.scaler.transform(picked);
  double sum = model.bias;
  std::vector<double> sv(z.size());
  for (std::size_t i = 0; i < model.n_support(); ++i) {
    for (std::size_t k = 0; k < sv.size(); ++k)
      sv[k] = model.support_vectors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    sum += model.dual_coef[i] * model.kernel(sv, z);
  }
  return sum;
}

inline Label predict(const SvmModel& model, std::span<const double> x) {
  return decision_function(model, x) > 0 ? Label::satire : Label::true_news;
}

/// Dense kernel matrix of the rows of `x` (already transformed).
inline Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& x, const KernelSpec& kernel) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k(n, n);
  std::vector<double> u(static_cast<std::size_t>(x.cols())), v(u.size());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      for (std::size_t c = 0; c < u.size(); ++c) {
        u[c] = x(i, static_cast<Eigen::Index>(c));
        v[c] = x(j, static_cast<Eigen::Index>(c));
      }
      k(i, j) = kernel(u, v);
    }
  return k;
}

// ---------------------------------------------------------------------------
// Serialization: "SVM1" | u64 header length | JSON header | float64 block
// (support vectors row-major, then dual coefficients).

inline void save_svm(const std::string& path, const SvmModel& m) {
  nlohmann::json h;
  h["kernel"] = {{"kind", to_string(m.kernel.kind)},
                 {"degree", m.kernel.degree},
                 {"gamma", m.kernel.gamma.value_or(1.0)},
                 {"coef0", m.kernel.coef0}};
  h["C"] = m.c;
  h["class_weights"] = {{"satire", m.positive_weight}, {"true", m.negative_weight}};
  h["scaler"] = {{"mean", m.scaler.mean}, {"scale", m.scaler.scale}};
  h["columns"] = m.columns;
  h["input_dim"] = m.input_dim;
  h["n_support"] = m.n_support();
  h["dim"] = m.support_vectors.cols();
  h["bias"] = m.bias;
  const std::string text = h.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write SVM model file " + path);
  out.write("SVM1", 4);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (Eigen::Index i = 0; i < m.support_vectors.rows(); ++i)
    for (Eigen::Index k = 0; k < m.support_vectors.cols(); ++k) {
      const double v = m.support_vectors(i, k);
      out.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  out.write(reinterpret_cast<const char*>(m.dual_coef.data()),
            static_cast<std::streamsize>(m.dual_coef.size() * sizeof(double)));
  if (!out) throw DataError("failed writing SVM model file " + path);
}

inline SvmModel load_svm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open SVM model file " + path);
  char magic[4];
  std::uint64_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, "SVM1", 4) != 0) throw DataError(path + " is not an SVM1 model file");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw DataError(path + ": truncated header");
  SvmModel m;
  try {
    const auto h = nlohmann::json::parse(text);
    m.kernel.kind = parse_kernel(h.at("kernel").at("kind").get<std::string>());
    m.kernel.degree = h.at("kernel").at("degree").get<int>();
    m.kernel.gamma = h.at("kernel").at("gamma").get<double>();
    m.kernel.coef0 = h.at("kernel").at("coef0").get<double>();
    m.c = h.at("C").get<double>();
    m.positive_weight = h.at("class_weights").at("satire").get<double>();
    m.negative_weight = h.at("class_weights").at("true").get<double>();
    m.scaler.mean = h.at("scaler").at("mean").get<std::vector<double>>();
    m.scaler.scale = h.at("scaler").at("scale").get<std::vector<double>>();
    m.columns = h.at("columns").get<std::vector<std::size_t>>();
    m.input_dim = h.at("input_dim").get<std::size_t>();
    m.bias = h.at("bias").get<double>();
    const auto n_sv = h.at("n_support").get<Eigen::Index>();
    const auto dim = h.at("dim").get<Eigen::Index>();
    if (static_cast<std::size_t>(dim) != m.columns.size() || m.scaler.dim() != m.columns.size())
      throw DataError(path + ": inconsistent dimensions in header");
    for (auto c : m.columns)
      if (c >= m.input_dim) throw DataError(path + ": column index out of range");
    m.support_vectors.resize(n_sv, dim);
    for (Eigen::Index i = 0; i < n_sv; ++i)
      for (Eigen::Index k = 0; k < dim; ++k) {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof v);
        m.support_vectors(i, k) = v;
      }
    m.dual_coef.resize(static_cast<std::size_t>(n_sv));
    in.read(reinterpret_cast<char*>(m.dual_coef.data()), static_cast<std::streamsize>(n_sv * 8));
    if (!in) throw DataError(path + ": truncated support-vector block");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed header (" + e.what() + ")");
  }
  return m;
}

}  // namespace satnews
