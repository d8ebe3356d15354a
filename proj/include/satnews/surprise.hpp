#pragma once

// Per-sentence surprise scores of an article under the true-news and
// satire language models.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "satnews/corpus.hpp"
#include "satnews/error.hpp"
#include "satnews/lm.hpp"

namespace satnews {

struct ArticleScorePair {
  std::string article_id;
  std::optional<Label> label;
  std::vector<double> true_scores;
  std::vector<double> satire_scores;

  std::size_t size() const { return true_scores.size(); }
};

/// Mean token loss (nats) of the sentence, <eos> target included.
inline double surprise_score(const LmModel& model, std::span<const TokenId> sentence_ids) {
  const auto losses = token_losses(model, sentence_ids);
  double sum = 0.0;
  for (double v : losses) sum += v;
  return sum / static_cast<double>(losses.size());
}

inline void check_fingerprints(const LmModel& true_lm, const LmModel& satire_lm,
                               const std::string& doc_fingerprint) {
  if (true_lm.vocab_fingerprint != satire_lm.vocab_fingerprint)
    throw VocabMismatch("true and satire models were trained on different vocabularies (" +
                        true_lm.vocab_fingerprint + " vs " + satire_lm.vocab_fingerprint + ")");
  if (doc_fingerprint != true_lm.vocab_fingerprint)
    throw VocabMismatch("document encoded with vocabulary " + doc_fingerprint +
                        " but models expect " + true_lm.vocab_fingerprint);
}

inline ArticleScorePair score_article(const LmModel& true_lm, const LmModel& satire_lm,
                                      const Document& doc) {
  check_fingerprints(true_lm, satire_lm, doc.vocab_fingerprint);
  if (doc.sentences.empty()) throw EmptyDocument("document '" + doc.id + "' has no sentences");
  ArticleScorePair pair{doc.id, doc.label, {}, {}};
  pair.true_scores.reserve(doc.sentences.size());
  pair.satire_scores.reserve(doc.sentences.size());
  for (const auto& sentence : doc.sentences) {
    pair.true_scores.push_back(surprise_score(true_lm, sentence));
    pair.satire_scores.push_back(surprise_score(satire_lm, sentence));
  }
  return pair;
}

/// Scores documents on up to `jobs` threads; results keep the input order.
inline std::vector<ArticleScorePair> score_documents(const LmModel& true_lm, const LmModel& satire_lm,
                                                     std::span<const Document> docs, unsigned jobs = 1) {
  std::vector<ArticleScorePair> out(docs.size());
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, docs.size()))));
  if (jobs == 1) {
    for (std::size_t i = 0; i < docs.size(); ++i) out[i] = score_article(true_lm, satire_lm, docs[i]);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (unsigned w = 0; w < jobs; ++w)
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < docs.size(); i = next++) {
        try {
          out[i] = score_article(true_lm, satire_lm, docs[i]);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = docs.size();
        }
      }
    });
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

// ---------------------------------------------------------------------------
// Score dump: one JSON object per line with id, label, true_scores, satire_scores.

inline nlohmann::json to_json(const ArticleScorePair& p) {
  return {{"id", p.article_id},
          {"label", p.label ? nlohmann::json(to_string(*p.label)) : nlohmann::json(nullptr)},
          {"true_scores", p.true_scores},
          {"satire_scores", p.satire_scores}};
}

inline ArticleScorePair score_pair_from_json(const nlohmann::json& j, std::size_t line_no) {
  auto where = "line " + std::to_string(line_no) + ": ";
  ArticleScorePair p;
  try {
    p.article_id = j.at("id").get<std::string>();
    if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
      p.label = parse_label(it->get<std::string>());
      if (!p.label) throw DataError(where + "unknown label");
    }
    p.true_scores = j.at("true_scores").get<std::vector<double>>();
    p.satire_scores = j.at("satire_scores").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + "malformed score record (" + e.what() + ")");
  }
  if (p.true_scores.empty() || p.true_scores.size() != p.satire_scores.size())
    throw DataError(where + "score sequences must be nonempty and of equal length");
  for (double v : p.true_scores)
    if (!std::isfinite(v) || v < 0) throw DataError(where + "scores must be finite and >= 0");
  for (double v : p.satire_scores)
    if (!std::isfinite(v) || v < 0) throw DataError(where + "scores must be finite and >= 0");
  return p;
}

inline void write_scores(const std::string& path, std::span<const ArticleScorePair> pairs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write score file " + path);
  for (const auto& p : pairs) out << to_json(p).dump() << '\n';
}

inline std::vector<ArticleScorePair> read_scores(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open score file " + path);
  std::vector<ArticleScorePair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": invalid JSON");
    }
    try {
      out.push_back(score_pair_from_json(j, line_no));
    } catch (const DataError& e) {
      throw DataError(path + ": " + e.what());
    }
  }
  return out;
}

}  // namespace satnews
