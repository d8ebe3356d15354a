#pragma once

// Command-line front end. `run_cli` returns the process exit code:
// 0 success, 2 configuration error, 3 data error, 4 numerical failure.

#include <chrono>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "satnews/pipeline.hpp"

namespace satnews {

inline int run_cli(int argc, const char* const* argv, std::ostream& log_stream = std::cerr) {
  CLI::App app{"Satirical news detection from language-model surprise scores"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::vector<std::string> overrides;
  std::optional<std::string> kernel, gamma;
  std::optional<int> degree;
  std::optional<double> c, tol;

  app.add_option("--config", config_path, "flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "global seed");
  app.add_option("--out-dir", out_dir, "directory holding every stage's inputs and outputs");
  app.add_option("--jobs", jobs, "worker threads for scoring");
  app.add_option("--set", overrides, "config override, key=value (repeatable)");
  app.add_option("--kernel", kernel, "linear or poly");
  app.add_option("--degree", degree, "polynomial kernel degree");
  app.add_option("--C", c, "SVM box constraint");
  app.add_option("--gamma", gamma, "kernel scale, or auto");
  app.add_option("--tol", tol, "SMO stopping tolerance");
  app.fallthrough();

  std::string train_path;
  std::optional<std::string> validation_path, test_path;
  auto add_inputs = [&](CLI::App* sub) {
    sub->add_option("--train", train_path, "labeled JSONL corpus")->required()->check(CLI::ExistingFile);
    sub->add_option("--validation", validation_path, "labeled JSONL validation set")->check(CLI::ExistingFile);
    sub->add_option("--test", test_path, "labeled JSONL test set")->check(CLI::ExistingFile);
  };

  auto* split = app.add_subcommand("split", "write lm/clf/validation/test document files");
  add_inputs(split);
  auto* build_vocab_cmd = app.add_subcommand("build-vocab", "shared vocabulary from the LM split");
  auto* train_lm = app.add_subcommand("train-lm", "train one domain's language model");
  std::string domain;
  train_lm->add_option("--domain", domain, "true or satire")
      ->required()
      ->check(CLI::IsMember({"true", "satire"}));

  std::vector<std::string> splits;
  auto* score = app.add_subcommand("score", "per-sentence surprise scores under both LMs");
  score->add_option("--split", splits, "clf, validation, test (default all three)");
  auto* featurize = app.add_subcommand("featurize", "nine-feature vectors from scores");
  featurize->add_option("--split", splits, "clf, validation, test (default all three)");

  int group = 5;
  auto* train_clf = app.add_subcommand("train-clf", "train the SVM on classifier-split features");
  train_clf->add_option("--group", group, "cumulative feature group 1..5")->check(CLI::Range(1, 5));

  bool ablation = false;
  auto* evaluate = app.add_subcommand("evaluate", "metrics on validation and test");
  evaluate->add_flag("--ablation", ablation, "train and score all five cumulative feature groups");

  std::string mi_split = "clf", wilcoxon_split = "all";
  auto* mi = app.add_subcommand("mi", "mutual information of each feature with the label");
  mi->add_option("--split", mi_split, "clf, validation, test or all");
  auto* wilcoxon = app.add_subcommand("wilcoxon", "paired signed-rank tests, true-LM vs satire-LM statistics");
  wilcoxon->add_option("--split", wilcoxon_split, "clf, validation, test or all (default: every scored article)");

  SyntheticCorpusSpec synth_spec;
  std::string synth_output;
  auto* synth = app.add_subcommand("synth", "write a labeled synthetic Markov corpus");
  synth->add_option("--output", synth_output, "JSONL destination")->required();
  synth->add_option("--docs-per-label", synth_spec.docs_per_label);
  synth->add_option("--vocab-size", synth_spec.vocab_size);
  synth->add_option("--true-noise", synth_spec.true_noise, "off-structure token probability, true source");
  synth->add_option("--satire-noise", synth_spec.satire_noise, "off-structure token probability, satire source");
  synth->add_option("--corpus-seed", synth_spec.seed);

  auto* run = app.add_subcommand("run", "every stage from split to wilcoxon");
  add_inputs(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, log_stream, log_stream);
    return code == 0 ? 0 : 2;
  }

  const auto start = std::chrono::steady_clock::now();
  const Logger log = [&](const std::string& message) {
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "[%8.1fs] ", t);
    log_stream << stamp << message << std::endl;
  };

  try {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      cfg.set(std::string(detail::trim(std::string_view(kv).substr(0, eq))),
              std::string(detail::trim(std::string_view(kv).substr(eq + 1))));
    }
    if (seed) cfg.seed = *seed;
    if (jobs) {
      if (*jobs < 1) throw ConfigError("--jobs must be >= 1");
      cfg.jobs = *jobs;
    }
    if (kernel) cfg.set("kernel", *kernel);
    if (degree) cfg.kernel.degree = *degree;
    if (c) cfg.c = *c;
    if (gamma) cfg.set("gamma", *gamma);
    if (tol) cfg.tol = *tol;
    cfg.validate();

    const Layout layout{out_dir};
    if (!synth->parsed()) {
      fs::create_directories(layout.dir);
      detail::write_text(layout.resolved_config(), cfg.resolved());
    }

    std::vector<Split> chosen;
    for (const auto& s : splits) {
      const auto parsed = parse_split(s);
      if (parsed == Split::lm) throw ConfigError("the LM split is not scored");
      chosen.push_back(parsed);
    }
    if (chosen.empty()) chosen.assign(std::begin(kScoredSplits), std::end(kScoredSplits));

    if (split->parsed()) {
      run_split(cfg, layout, train_path, validation_path, test_path, log);
    } else if (build_vocab_cmd->parsed()) {
      run_build_vocab(cfg, layout, log);
    } else if (train_lm->parsed()) {
      run_train_lm(cfg, layout, domain == "satire" ? Label::satire : Label::true_news, log);
    } else if (score->parsed()) {
      run_score(cfg, layout, chosen, log);
    } else if (featurize->parsed()) {
      run_featurize(layout, chosen, log);
    } else if (train_clf->parsed()) {
      run_train_clf(cfg, layout, group, log);
    } else if (evaluate->parsed()) {
      if (ablation) run_ablation(cfg, layout, log);
      else run_evaluate(layout, log);
    } else if (mi->parsed()) {
      run_mi(cfg, layout, mi_split, log);
    } else if (wilcoxon->parsed()) {
      run_wilcoxon(layout, wilcoxon_split, log);
    } else if (synth->parsed()) {
      run_synth(synth_spec, synth_output, log);
    } else if (run->parsed()) {
      run_all(cfg, layout, train_path, validation_path, test_path, log);
    }
    return 0;
  } catch (const Error& e) {
    log_stream << "error: " << e.what() << std::endl;
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    log_stream << "error: " << e.what() << std::endl;
    return 1;
  }
}

}  // namespace satnews
