#pragma once

// Document ingestion, sentence segmentation, tokenization, vocabulary and
// the stratified LM/classifier split.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "satnews/error.hpp"

namespace satnews {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

enum class Label { true_news, satire };

inline std::string to_string(Label label) { return label == Label::satire ? "satire" : "true"; }

inline std::optional<Label> parse_label(std::string_view text) {
  if (text == "true") return Label::true_news;
  if (text == "satire") return Label::satire;
  return std::nullopt;
}

// +1 for the positive (satire) class, -1 otherwise.
inline int label_sign(Label label) { return label == Label::satire ? 1 : -1; }

enum class SegmentUnit { sentence, paragraph };

/// A labeled article before tokenization. `sentences` holds segmented raw text.
struct RawDocument {
  std::string id;
  std::optional<Label> label;
  std::vector<std::string> sentences;
};

struct TokenizedDocument {
  std::string id;
  std::optional<Label> label;
  std::vector<std::vector<std::string>> sentences;
};

/// An article encoded against a particular vocabulary.
struct Document {
  std::string id;
  std::optional<Label> label;
  std::vector<TokenSeq> sentences;
  std::string vocab_fingerprint;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
inline bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
inline bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

// ASCII punctuation; bytes >= 0x80 (UTF-8 continuation) count as word characters.
inline bool is_punct(char c) {
  auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u) != 0;
}

inline constexpr std::array<std::string_view, 40> kAbbreviations = {
    "Mr.",   "Mrs.", "Ms.",  "Dr.",  "St.",   "Jr.",  "Sr.",  "Prof.", "U.S.",  "U.K.",
    "U.N.",  "etc.", "vs.",  "e.g.", "i.e.",  "Inc.", "Co.",  "Corp.", "Ltd.",  "Gen.",
    "Sen.",  "Rep.", "Gov.", "Lt.",  "Col.",  "Sgt.", "Capt.", "Mt.",  "No.",   "Jan.",
    "Feb.",  "Mar.", "Apr.", "Aug.", "Sept.", "Oct.", "Nov.", "Dec.", "Ave.",  "a.m."};

inline bool ends_with_abbreviation(std::string_view text, std::size_t period_pos) {
  std::size_t start = period_pos;
  while (start > 0 && !is_space(text[start - 1])) --start;
  std::string_view word = text.substr(start, period_pos - start + 1);
  // Leading quotes/brackets do not belong to the abbreviation.
  while (!word.empty() && (word.front() == '"' || word.front() == '(' || word.front() == '\''))
    word.remove_prefix(1);
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

}  // namespace detail

/// Splits on . ! ? (optionally followed by closing quotes or brackets) when the
/// next non-space character is uppercase. A period closing a known
/// abbreviation never ends a sentence.
inline std::vector<std::string> segment_sentences(std::string_view raw_text) {
  std::string_view text = detail::trim(raw_text);
  if (text.empty()) throw EmptyDocument("cannot segment empty text");

  std::vector<std::string> sentences;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    auto piece = detail::trim(text.substr(start, end - start));
    if (!piece.empty()) sentences.emplace_back(piece);
    start = end;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t end = i + 1;
    while (end < text.size() && (text[end] == '"' || text[end] == '\'' || text[end] == ')'))
      ++end;
    if (end >= text.size() || !detail::is_space(text[end])) continue;
    std::size_t next = end;
    while (next < text.size() && detail::is_space(text[next])) ++next;
    if (next >= text.size()) break;
    char lead = text[next];
    if (lead == '"' || lead == '(' || lead == '\'') {
      if (next + 1 >= text.size()) continue;
      lead = text[next + 1];
    }
    if (!detail::is_upper(lead)) continue;
    if (c == '.' && detail::ends_with_abbreviation(text, i)) continue;
    emit(end);
    i = end - 1;
  }
  emit(text.size());
  return sentences;
}

/// Paragraphs are separated by one or more blank lines.
inline std::vector<std::string> segment_paragraphs(std::string_view raw_text) {
  std::string_view text = detail::trim(raw_text);
  if (text.empty()) throw EmptyDocument("cannot segment empty text");

  std::vector<std::string> paragraphs;
  std::istringstream in{std::string(text)};
  std::string line;
  std::string current;
  auto flush = [&] {
    auto piece = detail::trim(current);
    if (!piece.empty()) paragraphs.emplace_back(piece);
    current.clear();
  };
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) {
      flush();
      continue;
    }
    if (!current.empty()) current += ' ';
    current += line;
  }
  flush();
  return paragraphs;
}

inline std::vector<std::string> segment(std::string_view raw_text, SegmentUnit unit) {
  return unit == SegmentUnit::sentence ? segment_sentences(raw_text) : segment_paragraphs(raw_text);
}

namespace detail {

inline constexpr std::array<std::string_view, 6> kClitics = {"'s", "'re", "'ve", "'ll", "'d", "'m"};

// Splits one whitespace-free chunk into word, clitic and punctuation tokens.
inline void tokenize_chunk(std::string_view chunk, std::vector<std::string>& out) {
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    // "don't" -> "do" "n't"
    if (word.size() > 3 && word.compare(word.size() - 3, 3, "n't") == 0) {
      out.push_back(word.substr(0, word.size() - 3));
      out.emplace_back("n't");
    } else {
      out.push_back(word);
    }
    word.clear();
  };

  for (std::size_t i = 0; i < chunk.size(); ++i) {
    char c = chunk[i];
    if (c == '\'') {
      bool matched = false;
      for (auto clitic : kClitics) {
        if (!word.empty() && chunk.substr(i, clitic.size()) == clitic &&
            (i + clitic.size() == chunk.size() || is_punct(chunk[i + clitic.size()]))) {
          flush();
          out.emplace_back(clitic);
          i += clitic.size() - 1;
          matched = true;
          break;
        }
      }
      if (matched) continue;
      // "n't" keeps its apostrophe inside the word until flush splits it.
      if (!word.empty() && word.back() == 'n' && i + 1 < chunk.size() && chunk[i + 1] == 't' &&
          (i + 2 == chunk.size() || is_punct(chunk[i + 2]))) {
        word += "'t";
        ++i;
        continue;
      }
      // A standalone clitic token such as "'s" from already-tokenized text.
      if (word.empty()) {
        for (auto clitic : kClitics) {
          if (chunk.substr(i) == clitic) {
            out.emplace_back(clitic);
            i = chunk.size();
            matched = true;
            break;
          }
        }
        if (matched) break;
      }
      flush();
      out.emplace_back("'");
      continue;
    }
    if (is_punct(c)) {
      // Keep decimal points and digit group separators inside numbers.
      if ((c == '.' || c == ',') && !word.empty() && is_digit(word.back()) && i + 1 < chunk.size() &&
          is_digit(chunk[i + 1])) {
        word += c;
        continue;
      }
      flush();
      out.emplace_back(1, c);
      continue;
    }
    word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  flush();
}

}  // namespace detail

/// Lowercases, splits on whitespace, separates punctuation and splits the
/// clitics 's 're 've 'll 'd 'm n't into their own tokens.
inline std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < sentence.size()) {
    while (i < sentence.size() && detail::is_space(sentence[i])) ++i;
    std::size_t j = i;
    while (j < sentence.size() && !detail::is_space(sentence[j])) ++j;
    if (j > i) detail::tokenize_chunk(sentence.substr(i, j - i), tokens);
    i = j;
  }
  return tokens;
}

inline TokenizedDocument tokenize_document(const RawDocument& doc) {
  TokenizedDocument out{doc.id, doc.label, {}};
  for (const auto& sentence : doc.sentences) {
    auto tokens = tokenize(sentence);
    if (!tokens.empty()) out.sentences.push_back(std::move(tokens));
  }
  if (out.sentences.empty()) throw EmptyDocument("document '" + doc.id + "' has no tokens");
  return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  static constexpr TokenId kUnk = 0;
  static constexpr TokenId kEos = 1;
  static constexpr std::string_view kUnkToken = "<unk>";
  static constexpr std::string_view kEosToken = "<eos>";

  Vocabulary() : tokens_{std::string(kUnkToken), std::string(kEosToken)} { reindex(); }

  /// Builds from an id-ordered token list; entries 0 and 1 must be the specials.
  static Vocabulary from_tokens(std::vector<std::string> tokens, int min_count = 0) {
    if (tokens.size() < 2 || tokens[0] != kUnkToken || tokens[1] != kEosToken)
      throw DataError("vocabulary must start with <unk> and <eos>");
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    v.min_count_ = min_count;
    v.reindex();
    if (v.index_.size() != v.tokens_.size()) throw DataError("vocabulary contains duplicate tokens");
    return v;
  }

  std::size_t size() const noexcept { return tokens_.size(); }
  int min_count() const noexcept { return min_count_; }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }

  TokenId id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnk : it->second;
  }
  bool contains(std::string_view token) const { return index_.count(std::string(token)) != 0; }

  const std::string& token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
      throw VocabMismatch("token id " + std::to_string(id) + " outside vocabulary");
    return tokens_[static_cast<std::size_t>(id)];
  }

  TokenSeq encode(std::span<const std::string> tokens) const {
    TokenSeq ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
  }

  std::vector<std::string> decode(std::span<const TokenId> ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (auto i : ids) out.push_back(token(i));
    return out;
  }

  Document encode(const TokenizedDocument& doc) const {
    Document out{doc.id, doc.label, {}, fingerprint_};
    out.sentences.reserve(doc.sentences.size());
    for (const auto& s : doc.sentences) out.sentences.push_back(encode(s));
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary file " + path);
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open vocabulary file " + path + " (run build-vocab first)");
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    return from_tokens(std::move(tokens));
  }

 private:
  void reindex() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i)
      index_.emplace(tokens_[i], static_cast<TokenId>(i));
    // FNV-1a over the newline-joined token list.
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& t : tokens_) {
      for (unsigned char c : t) h = (h ^ c) * 1099511628211ULL;
      h = (h ^ static_cast<unsigned char>('\n')) * 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    fingerprint_ = buf;
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  std::string fingerprint_;
  int min_count_ = 0;
};

/// Tokens with frequency >= min_count get ids 2.. in order of decreasing
/// frequency (ties broken lexicographically); everything else maps to <unk>.
inline Vocabulary build_vocab(std::span<const TokenizedDocument> documents, int min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  std::map<std::string, std::int64_t> counts;
  std::size_t n_tokens = 0;
  for (const auto& doc : documents)
    for (const auto& sentence : doc.sentences)
      for (const auto& t : sentence) {
        ++counts[t];
        ++n_tokens;
      }
  if (n_tokens == 0) throw EmptyCorpus("cannot build a vocabulary from an empty corpus");

  std::vector<std::pair<std::string, std::int64_t>> kept;
  for (auto& [token, count] : counts)
    if (count >= min_count && token != Vocabulary::kUnkToken && token != Vocabulary::kEosToken)
      kept.emplace_back(token, count);
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  std::vector<std::string> tokens{std::string(Vocabulary::kUnkToken),
                                  std::string(Vocabulary::kEosToken)};
  for (auto& [token, count] : kept) tokens.push_back(token);
  return Vocabulary::from_tokens(std::move(tokens), min_count);
}

// ---------------------------------------------------------------------------
// Splitting

/// Fraction of each label's documents routed to LM training, as an exact
/// rational so that e.g. 2/3 of 101268 is 67512 and not 67511.
struct SplitPlan {
  std::int64_t numerator = 2;
  std::int64_t denominator = 3;
  std::uint64_t seed = 1;

  void validate() const {
    if (denominator <= 0 || numerator <= 0 || numerator >= denominator)
      throw ConfigError("split fraction must lie strictly between 0 and 1");
  }
  std::size_t part_size(std::size_t n) const {
    return static_cast<std::size_t>(static_cast<std::int64_t>(n) * numerator / denominator);
  }
};

/// Parses "2/3" or a decimal such as "0.5".
inline std::pair<std::int64_t, std::int64_t> parse_fraction(const std::string& text) {
  try {
    if (auto slash = text.find('/'); slash != std::string::npos)
      return {std::stoll(text.substr(0, slash)), std::stoll(text.substr(slash + 1))};
    auto dot = text.find('.');
    std::int64_t den = 1;
    std::string digits = text;
    if (dot != std::string::npos) {
      std::size_t places = text.size() - dot - 1;
      if (places > 9) throw ConfigError("too many decimal places in fraction " + text);
      for (std::size_t i = 0; i < places; ++i) den *= 10;
      digits.erase(dot, 1);
    }
    std::int64_t num = std::stoll(digits);
    std::int64_t g = std::gcd(num, den);
    return {num / g, den / g};
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse fraction '" + text + "'");
  }
}

namespace detail {

// Shuffles index lists independently per label, in first-seen label order.
template <typename Doc>
std::vector<std::vector<std::size_t>> shuffled_strata(std::span<const Doc> docs, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> strata(3);  // true, satire, unlabeled
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto& label = docs[i].label;
    strata[label ? static_cast<std::size_t>(*label) : 2].push_back(i);
  }
  std::mt19937_64 rng(seed);
  for (auto& s : strata) std::shuffle(s.begin(), s.end(), rng);
  return strata;
}

}  // namespace detail

/// Stratified split: per label, floor(fraction * count) documents go to the
/// first part. Each part preserves the input order of its documents.
template <typename Doc>
std::pair<std::vector<Doc>, std::vector<Doc>> split_lm_clf(std::span<const Doc> docs,
                                                           const SplitPlan& plan) {
  plan.validate();
  if (docs.empty()) throw EmptyCorpus("cannot split an empty collection");
  std::vector<bool> to_first(docs.size(), false);
  for (const auto& stratum : detail::shuffled_strata(docs, plan.seed)) {
    std::size_t take = plan.part_size(stratum.size());
    for (std::size_t k = 0; k < take; ++k) to_first[stratum[k]] = true;
  }
  std::pair<std::vector<Doc>, std::vector<Doc>> out;
  for (std::size_t i = 0; i < docs.size(); ++i)
    (to_first[i] ? out.first : out.second).push_back(docs[i]);
  return out;
}

// ---------------------------------------------------------------------------
// JSONL I/O

/// Parses one JSONL record. `text` is segmented with `unit`; `sentences` is
/// taken as already segmented.
inline RawDocument parse_document(const nlohmann::json& j, SegmentUnit unit, std::size_t line_no) {
  auto where = [&] { return "line " + std::to_string(line_no) + ": "; };
  if (!j.is_object()) throw DataError(where() + "expected a JSON object");
  RawDocument doc;
  if (auto it = j.find("id"); it != j.end()) {
    doc.id = it->is_string() ? it->get<std::string>() : it->dump();
  } else {
    doc.id = std::to_string(line_no);
  }
  if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw DataError(where() + "label must be a string");
    doc.label = parse_label(it->get<std::string>());
    if (!doc.label) throw DataError(where() + "unknown label '" + it->get<std::string>() + "'");
  }
  if (auto it = j.find("sentences"); it != j.end()) {
    if (!it->is_array()) throw DataError(where() + "sentences must be an array of strings");
    for (const auto& s : *it) {
      if (!s.is_string()) throw DataError(where() + "sentences must be an array of strings");
      const auto& text = s.get_ref<const std::string&>();
      auto piece = detail::trim(text);
      if (!piece.empty()) doc.sentences.emplace_back(piece);
    }
    if (doc.sentences.empty()) throw EmptyDocument(where() + "document has no sentences");
  } else if (auto t = j.find("text"); t != j.end() && t->is_string()) {
    try {
      doc.sentences = segment(t->get<std::string>(), unit);
    } catch (const EmptyDocument&) {
      throw EmptyDocument(where() + "document text is empty");
    }
  } else {
    throw DataError(where() + "document needs a 'text' string or a 'sentences' array");
  }
  return doc;
}

/// Reads a JSONL document file. With `require_label`, a record without a
/// label is a DataError naming its line.
inline std::vector<RawDocument> read_documents(const std::string& path,
                                               SegmentUnit unit = SegmentUnit::sentence,
                                               bool require_label = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open document file " + path);
  std::vector<RawDocument> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path + ": line " + std::to_string(line_no) + ": invalid JSON (" + e.what() + ")");
    }
    try {
      docs.push_back(parse_document(j, unit, line_no));
    } catch (const Error& e) {
      throw DataError(path + ": " + e.what());
    }
    if (require_label && !docs.back().label)
      throw DataError(path + ": line " + std::to_string(line_no) + ": missing label");
  }
  return docs;
}

inline nlohmann::json to_json(const RawDocument& doc) {
  nlohmann::json j;
  j["id"] = doc.id;
  j["label"] = doc.label ? nlohmann::json(to_string(*doc.label)) : nlohmann::json(nullptr);
  j["sentences"] = doc.sentences;
  return j;
}

inline void write_documents(const std::string& path, std::span<const RawDocument> docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write document file " + path);
  for (const auto& doc : docs) out << to_json(doc).dump() << '\n';
}

}  // namespace satnews
