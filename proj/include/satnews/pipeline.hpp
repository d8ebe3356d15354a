#pragma once

// Stage functions behind the command-line tool. Every stage reads its inputs
// from and writes its outputs to a single output directory.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "satnews/corpus.hpp"
#include "satnews/error.hpp"
#include "satnews/features.hpp"
#include "satnews/lm.hpp"
#include "satnews/stats.hpp"
#include "satnews/surprise.hpp"
#include "satnews/svm.hpp"
#include "satnews/synthetic.hpp"

namespace satnews {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration: flat `key = value` text, `#` starts a comment.

struct PipelineConfig {
  std::uint64_t seed = 1;
  unsigned jobs = 1;
  SegmentUnit unit = SegmentUnit::sentence;
  std::string lm_fraction = "2/3";
  std::string validation_fraction = "1/5";  // only used when no validation file is given
  std::string test_fraction = "1/5";        // only used when no test file is given
  int min_count = 5;
  LmConfig lm;
  StoragePrecision lm_precision = StoragePrecision::f64;
  KernelSpec kernel{KernelKind::polynomial, 3, std::nullopt, 0.0};
  double c = 1.0;
  double tol = 1e-3;
  std::int64_t max_iter = 10'000'000;
  double satire_weight = 1.0;
  int mi_bins = 16;

  void set(const std::string& key, const std::string& value) {
    auto fail = [&] { throw ConfigError("bad value '" + value + "' for config key '" + key + "'"); };
    auto as_int = [&]() -> long long {
      long long v = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc{} || p != value.data() + value.size()) fail();
      return v;
    };
    auto as_double = [&]() -> double {
      try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) fail();
        return v;
      } catch (const std::logic_error&) {
        fail();
      }
      return 0.0;
    };
    auto as_fraction = [&] {
      const auto [n, d] = parse_fraction(value);
      SplitPlan{n, d, 0}.validate();
      return value;
    };

    if (key == "seed") {
      if (as_int() < 0) fail();
      seed = static_cast<std::uint64_t>(as_int());
    } else if (key == "jobs") {
      if (as_int() < 1) fail();
      jobs = static_cast<unsigned>(as_int());
    } else if (key == "unit") {
      if (value == "sentence") unit = SegmentUnit::sentence;
      else if (value == "paragraph") unit = SegmentUnit::paragraph;
      else fail();
    } else if (key == "lm_fraction") {
      lm_fraction = as_fraction();
    } else if (key == "validation_fraction") {
      validation_fraction = as_fraction();
    } else if (key == "test_fraction") {
      test_fraction = as_fraction();
    } else if (key == "min_count") {
      min_count = static_cast<int>(as_int());
    } else if (key == "embed_dim") {
      lm.embed_dim = static_cast<int>(as_int());
    } else if (key == "hidden_dim") {
      lm.hidden_dim = static_cast<int>(as_int());
    } else if (key == "num_layers") {
      lm.num_layers = static_cast<int>(as_int());
    } else if (key == "dropout") {
      lm.dropout = as_double();
    } else if (key == "epochs") {
      lm.epochs = static_cast<int>(as_int());
    } else if (key == "bptt_len") {
      lm.bptt_len = static_cast<int>(as_int());
    } else if (key == "batch_size") {
      lm.batch_size = static_cast<int>(as_int());
    } else if (key == "learning_rate") {
      lm.learning_rate = as_double();
    } else if (key == "lr_decay") {
      lm.lr_decay = as_double();
    } else if (key == "grad_clip") {
      lm.grad_clip = as_double();
    } else if (key == "init_range") {
      lm.init_range = as_double();
    } else if (key == "lm_precision") {
      if (value == "f64") lm_precision = StoragePrecision::f64;
      else if (value == "f32") lm_precision = StoragePrecision::f32;
      else fail();
    } else if (key == "kernel") {
      kernel.kind = parse_kernel(value);
    } else if (key == "degree") {
      kernel.degree = static_cast<int>(as_int());
    } else if (key == "gamma") {
      if (value == "auto") kernel.gamma.reset();
      else kernel.gamma = as_double();
    } else if (key == "coef0") {
      kernel.coef0 = as_double();
    } else if (key == "C") {
      c = as_double();
    } else if (key == "tol") {
      tol = as_double();
    } else if (key == "max_iter") {
      max_iter = as_int();
    } else if (key == "satire_weight") {
      satire_weight = as_double();
    } else if (key == "mi_bins") {
      mi_bins = static_cast<int>(as_int());
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }

  void validate() const {
    LmConfig probe = lm;
    probe.validate();
    kernel.validate();
    if (min_count < 1) throw ConfigError("min_count must be >= 1");
    if (!(c > 0) || !(tol > 0)) throw ConfigError("C and tol must be positive");
    if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
    if (!(satire_weight > 0)) throw ConfigError("satire_weight must be positive");
    if (mi_bins < 2) throw ConfigError("mi_bins must be >= 2");
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto text = detail::trim(line);
      if (text.empty()) continue;
      const auto eq = text.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError(path + ": line " + std::to_string(line_no) + ": expected key = value");
      try {
        set(std::string(detail::trim(text.substr(0, eq))), std::string(detail::trim(text.substr(eq + 1))));
      } catch (const ConfigError& e) {
        throw ConfigError(path + ": line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  /// Every key with its resolved value, in a fixed order; `load_file` accepts this text back.
  std::string resolved() const {
    auto num = [](double v) { return format_double(v); };
    std::ostringstream out;
    out << "seed = " << seed << "\n"
        << "jobs = " << jobs << "\n"
        << "unit = " << (unit == SegmentUnit::sentence ? "sentence" : "paragraph") << "\n"
        << "lm_fraction = " << lm_fraction << "\n"
        << "validation_fraction = " << validation_fraction << "\n"
        << "test_fraction = " << test_fraction << "\n"
        << "min_count = " << min_count << "\n"
        << "embed_dim = " << lm.embed_dim << "\n"
        << "hidden_dim = " << lm.hidden_dim << "\n"
        << "num_layers = " << lm.num_layers << "\n"
        << "dropout = " << num(lm.dropout) << "\n"
        << "epochs = " << lm.epochs << "\n"
        << "bptt_len = " << lm.bptt_len << "\n"
        << "batch_size = " << lm.batch_size << "\n"
        << "learning_rate = " << num(lm.learning_rate) << "\n"
        << "lr_decay = " << num(lm.lr_decay) << "\n"
        << "grad_clip = " << num(lm.grad_clip) << "\n"
        << "init_range = " << num(lm.init_range) << "\n"
        << "lm_precision = " << (lm_precision == StoragePrecision::f64 ? "f64" : "f32") << "\n"
        << "kernel = " << to_string(kernel.kind) << "\n"
        << "degree = " << kernel.degree << "\n"
        << "gamma = " << (kernel.gamma ? num(*kernel.gamma) : std::string("auto")) << "\n"
        << "coef0 = " << num(kernel.coef0) << "\n"
        << "C = " << num(c) << "\n"
        << "tol = " << num(tol) << "\n"
        << "max_iter = " << max_iter << "\n"
        << "satire_weight = " << num(satire_weight) << "\n"
        << "mi_bins = " << mi_bins << "\n";
    return out.str();
  }

  /// LM config for one domain; the two domains get distinct derived seeds.
  LmConfig lm_for(Label domain) const {
    LmConfig out = lm;
    out.seed = seed * 2 + (domain == Label::satire ? 1 : 0);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Output directory layout

enum class Split { lm, clf, validation, test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::lm: return "lm";
    case Split::clf: return "clf";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "";
}

inline Split parse_split(const std::string& text) {
  for (Split s : {Split::lm, Split::clf, Split::validation, Split::test})
    if (to_string(s) == text) return s;
  throw ConfigError("unknown split '" + text + "' (expected lm, clf, validation or test)");
}

inline constexpr Split kScoredSplits[] = {Split::clf, Split::validation, Split::test};

struct Layout {
  fs::path dir;

  fs::path docs(Split s) const { return dir / ("docs_" + to_string(s) + ".jsonl"); }
  fs::path vocab() const { return dir / "vocab.txt"; }
  fs::path lm_model(Label d) const { return dir / ("lm_" + to_string(d) + ".lmd"); }
  fs::path scores(Split s) const { return dir / ("scores_" + to_string(s) + ".jsonl"); }
  fs::path features(Split s) const { return dir / ("features_" + to_string(s) + ".csv"); }
  fs::path svm() const { return dir / "svm.model"; }
  fs::path metrics() const { return dir / "metrics.json"; }
  fs::path ablation() const { return dir / "ablation.json"; }
  fs::path mi_csv() const { return dir / "mi.csv"; }
  fs::path mi_json() const { return dir / "mi.json"; }
  fs::path wilcoxon() const { return dir / "wilcoxon.json"; }
  fs::path resolved_config() const { return dir / "config.resolved"; }
};

using Logger = std::function<void(const std::string&)>;

namespace detail {

inline void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw DataError("missing " + p.string() + " (" + hint + ")");
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

inline std::string label_counts(std::span<const RawDocument> docs) {
  std::size_t t = 0, s = 0;
  for (const auto& d : docs) (d.label == Label::satire ? s : t) += 1;
  return "true=" + std::to_string(t) + " satire=" + std::to_string(s);
}

inline SplitPlan plan_from(const std::string& fraction, std::uint64_t seed) {
  const auto [n, d] = parse_fraction(fraction);
  SplitPlan plan{n, d, seed};
  plan.validate();
  return plan;
}

inline std::vector<Document> encode_all(std::span<const RawDocument> docs, const Vocabulary& vocab) {
  std::vector<Document> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(vocab.encode(tokenize_document(d)));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

struct SplitCounts {
  std::map<std::string, std::string> per_split;  // split name -> "true=.. satire=.."
};

/// Writes docs_{lm,clf,validation,test}.jsonl. Without explicit validation or
/// test files, stratified holdouts are carved out of `train_path` first.
inline SplitCounts run_split(const PipelineConfig& cfg, const Layout& layout, const std::string& train_path,
                             const std::optional<std::string>& validation_path,
                             const std::optional<std::string>& test_path, const Logger& log) {
  fs::create_directories(layout.dir);
  auto train = read_documents(train_path, cfg.unit, true);
  if (train.empty()) throw EmptyCorpus(train_path + " contains no documents");
  std::vector<RawDocument> validation, test;
  if (validation_path) validation = read_documents(*validation_path, cfg.unit, true);
  if (test_path) test = read_documents(*test_path, cfg.unit, true);

  // Holdouts: first separate everything held out, then divide it.
  const auto [vn, vd] = parse_fraction(cfg.validation_fraction);
  const auto [tn, td] = parse_fraction(cfg.test_fraction);
  std::int64_t hold_num = 0, hold_den = 1;
  if (!validation_path) {
    hold_num = vn;
    hold_den = vd;
  }
  if (!test_path) {
    hold_num = hold_num * td + tn * hold_den;
    hold_den = hold_den * td;
  }
  if (hold_num > 0) {
    const auto g = std::gcd(hold_num, hold_den);
    hold_num /= g;
    hold_den /= g;
    if (hold_num >= hold_den) throw ConfigError("validation and test fractions leave no training data");
    auto [kept, held] = split_lm_clf<RawDocument>(
        train, SplitPlan{hold_den - hold_num, hold_den, cfg.seed ^ 0x5EEDF00DULL});
    train = std::move(kept);
    if (!validation_path && !test_path) {
      // validation share of the holdout: (vn/vd) / (hold_num/hold_den)
      std::int64_t num = vn * hold_den, den = vd * hold_num;
      const auto g2 = std::gcd(num, den);
      auto [v, t] = split_lm_clf<RawDocument>(held, SplitPlan{num / g2, den / g2, cfg.seed ^ 0xA11CEULL});
      validation = std::move(v);
      test = std::move(t);
    } else if (!validation_path) {
      validation = std::move(held);
    } else {
      test = std::move(held);
    }
  }

  auto [lm_docs, clf_docs] = split_lm_clf<RawDocument>(train, detail::plan_from(cfg.lm_fraction, cfg.seed));
  SplitCounts counts;
  const std::pair<Split, const std::vector<RawDocument>*> parts[] = {
      {Split::lm, &lm_docs}, {Split::clf, &clf_docs}, {Split::validation, &validation}, {Split::test, &test}};
  for (const auto& [split, docs] : parts) {
    write_documents(layout.docs(split).string(), *docs);
    counts.per_split[to_string(split)] = detail::label_counts(*docs);
    log("split " + to_string(split) + ": " + detail::label_counts(*docs));
  }
  return counts;
}

/// One vocabulary shared by both LMs, from the union of LM-training documents.
inline Vocabulary run_build_vocab(const PipelineConfig& cfg, const Layout& layout, const Logger& log) {
  detail::require_file(layout.docs(Split::lm), "run split first");
  const auto docs = read_documents(layout.docs(Split::lm).string());
  std::vector<TokenizedDocument> tokenized;
  for (const auto& d : docs) tokenized.push_back(tokenize_document(d));
  auto vocab = build_vocab(tokenized, cfg.min_count);
  vocab.save(layout.vocab().string());
  log("vocabulary: " + std::to_string(vocab.size()) + " types (min_count " + std::to_string(cfg.min_count) +
      "), fingerprint " + vocab.fingerprint());
  return vocab;
}

inline Vocabulary load_vocab(const Layout& layout) {
  if (!fs::exists(layout.vocab()))
    throw DataError("vocabulary file " + layout.vocab().string() + " not found; run build-vocab first");
  return Vocabulary::load(layout.vocab().string());
}

inline TrainResult run_train_lm(const PipelineConfig& cfg, const Layout& layout, Label domain,
                                const Logger& log) {
  const auto vocab = load_vocab(layout);
  detail::require_file(layout.docs(Split::lm), "run split first");
  std::vector<RawDocument> raw;
  for (auto& d : read_documents(layout.docs(Split::lm).string()))
    if (d.label == domain) raw.push_back(std::move(d));
  if (raw.empty()) throw EmptyCorpus("no " + to_string(domain) + " documents in the LM split");
  const auto docs = detail::encode_all(raw, vocab);

  std::vector<Document> heldout;
  if (fs::exists(layout.docs(Split::validation))) {
    std::vector<RawDocument> val;
    for (auto& d : read_documents(layout.docs(Split::validation).string()))
      if (d.label == domain) val.push_back(std::move(d));
    heldout = detail::encode_all(val, vocab);
  }

  const auto lm_cfg = cfg.lm_for(domain);
  TrainOptions options;
  options.heldout = heldout;
  options.on_epoch = [&](const EpochReport& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "lm %s epoch %d/%d train_loss=%.4f heldout_loss=%s lr=%g tokens=%zu time=%.1fs",
                  to_string(domain).c_str(), r.epoch, lm_cfg.epochs, r.train_loss,
                  r.heldout_loss ? std::to_string(*r.heldout_loss).c_str() : "n/a", r.learning_rate, r.tokens,
                  r.seconds);
    log(buf);
  };
  log("training " + to_string(domain) + " LM on " + std::to_string(docs.size()) + " documents");
  auto result = train(docs, vocab, lm_cfg, options);
  save_model(layout.lm_model(domain).string(), result.model, cfg.lm_precision);
  return result;
}

inline void run_score(const PipelineConfig& cfg, const Layout& layout, const std::vector<Split>& splits,
                      const Logger& log) {
  const auto vocab = load_vocab(layout);
  for (Label d : {Label::true_news, Label::satire})
    detail::require_file(layout.lm_model(d), "run train-lm --domain " + to_string(d) + " first");
  const auto true_lm = load_model(layout.lm_model(Label::true_news).string());
  const auto satire_lm = load_model(layout.lm_model(Label::satire).string());
  check_fingerprints(true_lm, satire_lm, vocab.fingerprint());
  for (Split s : splits) {
    detail::require_file(layout.docs(s), "run split first");
    const auto raw = read_documents(layout.docs(s).string());
    const auto docs = detail::encode_all(raw, vocab);
    const auto pairs = score_documents(true_lm, satire_lm, docs, cfg.jobs);
    write_scores(layout.scores(s).string(), pairs);
    log("scored " + to_string(s) + ": " + std::to_string(pairs.size()) + " documents");
  }
}

inline void run_featurize(const Layout& layout, const std::vector<Split>& splits, const Logger& log) {
  for (Split s : splits) {
    detail::require_file(layout.scores(s), "run score first");
    std::vector<FeatureVector> rows;
    for (const auto& p : read_scores(layout.scores(s).string())) rows.push_back(feature_vector(p));
    write_features_csv(layout.features(s).string(), rows);
    log("features " + to_string(s) + ": " + std::to_string(rows.size()) + " rows");
  }
}

namespace detail {

struct LabeledMatrix {
  Eigen::MatrixXd x;
  std::vector<int> y;  // +1 satire, -1 true
};

inline LabeledMatrix to_matrix(std::span<const FeatureVector> rows) {
  LabeledMatrix m{Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), kFeatureDim), {}};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].label) throw DataError("feature row '" + rows[i].id + "' has no label");
    m.y.push_back(label_sign(*rows[i].label));
    for (std::size_t k = 0; k < kFeatureDim; ++k)
      m.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i].values[k];
  }
  return m;
}

inline std::vector<FeatureVector> read_split_features(const Layout& layout, Split s) {
  require_file(layout.features(s), "run featurize first");
  return read_features_csv(layout.features(s).string());
}

inline SvmOptions svm_options(const PipelineConfig& cfg, const Logger& log) {
  SvmOptions o;
  o.c = cfg.c;
  o.kernel = cfg.kernel;
  o.tol = cfg.tol;
  o.max_iterations = cfg.max_iter;
  o.positive_weight = cfg.satire_weight;
  o.warn = [log](const std::string& m) { log("warning: " + m); };
  return o;
}

inline Metrics evaluate_rows(const SvmModel& model, std::span<const FeatureVector> rows) {
  std::vector<Label> pred, gold;
  for (const auto& r : rows) {
    if (!r.label) throw DataError("feature row '" + r.id + "' has no label");
    pred.push_back(predict(model, r.values));
    gold.push_back(*r.label);
  }
  return classification_metrics(pred, gold);
}

inline nlohmann::json group_names(const std::vector<std::size_t>& cols) {
  nlohmann::json names = nlohmann::json::array();
  for (auto c : cols) names.push_back(kFeatureNames[c]);
  return names;
}

}  // namespace detail

/// Trains the classifier on classifier-split features restricted to the
/// cumulative feature group (5 = all nine features).
inline SvmModel run_train_clf(const PipelineConfig& cfg, const Layout& layout, int group, const Logger& log) {
  const auto rows = detail::read_split_features(layout, Split::clf);
  const auto data = detail::to_matrix(rows);
  auto options = detail::svm_options(cfg, log);
  options.columns = feature_group(group);
  SvmTrainInfo info;
  auto model = train_svm(data.x, data.y, options, &info);
  save_svm(layout.svm().string(), model);
  log("svm: " + std::to_string(model.n_support()) + " support vectors, " + std::to_string(info.iterations) +
      " iterations, gap " + format_double(info.gap));
  return model;
}

/// Metrics of the saved classifier on the validation and test splits.
inline nlohmann::json run_evaluate(const Layout& layout, const Logger& log) {
  detail::require_file(layout.svm(), "run train-clf first");
  const auto model = load_svm(layout.svm().string());
  nlohmann::json out = nlohmann::json::object();
  for (Split s : {Split::validation, Split::test}) {
    if (!fs::exists(layout.features(s))) continue;
    const auto rows = detail::read_split_features(layout, s);
    if (rows.empty()) continue;
    const auto m = detail::evaluate_rows(model, rows);
    out[to_string(s)] = to_json(m);
    log(to_string(s) + ": acc=" + format_double(m.accuracy) + " f1=" + format_double(m.f1));
  }
  if (out.empty()) throw DataError("no validation or test features to evaluate");
  out["features"] = detail::group_names(model.columns);
  detail::write_text(layout.metrics(), out.dump(2) + "\n");
  return out;
}

/// Cumulative feature-group ablation: one classifier per group, each scored
/// on validation and test.
inline nlohmann::json run_ablation(const PipelineConfig& cfg, const Layout& layout, const Logger& log) {
  const auto train_rows = detail::read_split_features(layout, Split::clf);
  const auto data = detail::to_matrix(train_rows);
  std::map<Split, std::vector<FeatureVector>> eval;
  for (Split s : {Split::validation, Split::test})
    if (fs::exists(layout.features(s))) eval[s] = detail::read_split_features(layout, s);

  nlohmann::json rows = nlohmann::json::array();
  for (int group = 1; group <= 5; ++group) {
    auto options = detail::svm_options(cfg, log);
    options.columns = feature_group(group);
    const auto model = train_svm(data.x, data.y, options);
    nlohmann::json row{{"group", group}, {"features", detail::group_names(options.columns)}};
    std::string summary = "ablation group " + std::to_string(group);
    for (const auto& [s, features] : eval) {
      if (features.empty()) continue;
      const auto m = detail::evaluate_rows(model, features);
      row[to_string(s)] = to_json(m);
      summary += " " + to_string(s) + "_f1=" + format_double(m.f1);
    }
    log(summary);
    rows.push_back(row);
  }
  nlohmann::json out{{"ablation", rows}};
  detail::write_text(layout.ablation(), out.dump(2) + "\n");
  return out;
}

namespace detail {

inline std::vector<FeatureVector> features_for(const Layout& layout, const std::string& which) {
  if (which != "all") return read_split_features(layout, parse_split(which));
  std::vector<FeatureVector> rows;
  for (Split s : kScoredSplits)
    for (auto& r : read_split_features(layout, s)) rows.push_back(std::move(r));
  return rows;
}

}  // namespace detail

inline MiReport run_mi(const PipelineConfig& cfg, const Layout& layout, const std::string& which,
                       const Logger& log) {
  const auto rows = detail::features_for(layout, which);
  const auto report = mi_report(rows, cfg.mi_bins);
  std::string csv = "feature,mi_bits\n";
  nlohmann::json features = nlohmann::json::array();
  for (const auto& [name, bits] : report.features) {
    csv += name + "," + format_double(bits) + "\n";
    features.push_back({{"feature", name}, {"mi_bits", bits}});
  }
  detail::write_text(layout.mi_csv(), csv);
  nlohmann::json out{{"split", which},
                     {"samples", rows.size()},
                     {"binning", {{"method", "equal_frequency"}, {"bins", report.bins}}},
                     {"features", features}};
  detail::write_text(layout.mi_json(), out.dump(2) + "\n");
  log("mutual information over " + std::to_string(rows.size()) + " " + which + " rows written");
  return report;
}

/// Paired tests of each statistic (mean, median, variance, range) between
/// the true-LM and satire-LM columns, for satire-labeled, true-labeled and
/// all articles.
inline nlohmann::json run_wilcoxon(const Layout& layout, const std::string& which, const Logger& log) {
  const auto rows = detail::features_for(layout, which);
  static constexpr const char* kStats[] = {"mean", "median", "variance", "range"};
  nlohmann::json groups = nlohmann::json::object();
  for (const std::string group : {"satire", "true", "all"}) {
    nlohmann::json tests = nlohmann::json::object();
    for (std::size_t k = 0; k < 4; ++k) {
      std::vector<double> x, y;
      for (const auto& r : rows) {
        if (group != "all" && (!r.label || to_string(*r.label) != group)) continue;
        x.push_back(r.values[1 + k]);
        y.push_back(r.values[5 + k]);
      }
      if (x.empty()) {
        tests[kStats[k]] = {{"n", 0}, {"error", "no articles in group"}};
        continue;
      }
      try {
        auto j = to_json(wilcoxon_signed_rank(x, y));
        j["n"] = x.size();
        tests[kStats[k]] = j;
        log("wilcoxon " + group + " " + kStats[k] + ": p=" + format_double(j["p_two_sided"].get<double>()));
      } catch (const DegeneratePairs& e) {
        tests[kStats[k]] = {{"n", x.size()}, {"error", e.what()}};
      }
    }
    groups[group] = tests;
  }
  nlohmann::json out{{"split", which}, {"x", "true-LM statistic"}, {"y", "satire-LM statistic"}, {"groups", groups}};
  detail::write_text(layout.wilcoxon(), out.dump(2) + "\n");
  return out;
}

/// Writes a labeled synthetic corpus as JSONL.
inline std::size_t run_synth(const SyntheticCorpusSpec& spec, const std::string& path, const Logger& log) {
  if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  const auto docs = synthetic_corpus(spec);
  write_documents(path, docs);
  log("synthetic corpus: " + std::to_string(docs.size()) + " documents -> " + path);
  return docs.size();
}

/// Every stage in order, from a labeled corpus to metrics and reports.
inline void run_all(const PipelineConfig& cfg, const Layout& layout, const std::string& train_path,
                    const std::optional<std::string>& validation_path,
                    const std::optional<std::string>& test_path, const Logger& log) {
  fs::create_directories(layout.dir);
  detail::write_text(layout.resolved_config(), cfg.resolved());
  run_split(cfg, layout, train_path, validation_path, test_path, log);
  run_build_vocab(cfg, layout, log);
  for (Label d : {Label::true_news, Label::satire}) run_train_lm(cfg, layout, d, log);
  const std::vector<Split> splits(std::begin(kScoredSplits), std::end(kScoredSplits));
  run_score(cfg, layout, splits, log);
  run_featurize(layout, splits, log);
  run_train_clf(cfg, layout, 5, log);
  run_evaluate(layout, log);
  run_ablation(cfg, layout, log);
  run_mi(cfg, layout, "clf", log);
  run_wilcoxon(layout, "all", log);
}

}  // namespace satnews
