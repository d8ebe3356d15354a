#pragma once

// Order-2 Markov text sources for desk-scale experiments. Two sources built
// with the same structure seed and opposite parity put their high-probability
// successor mass on disjoint token sets for every context.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "satnews/corpus.hpp"

namespace satnews {

class MarkovSource {
 public:
  /// `successors` high-probability tokens per context receive (1 - noise)
  /// of the mass; the remaining `noise` is spread uniformly over the vocabulary.
  MarkovSource(int vocab_size, int successors, double noise, int parity, std::uint64_t structure_seed)
      : vocab_size_(vocab_size),
        successors_(successors),
        noise_(noise),
        parity_(parity & 1),
        seed_(structure_seed) {
    if (vocab_size < 2 * successors || successors < 1)
      throw ConfigError("Markov source needs vocab_size >= 2 * successors >= 2");
    if (!(noise >= 0.0 && noise < 1.0)) throw ConfigError("Markov noise must lie in [0, 1)");
  }

  int vocab_size() const { return vocab_size_; }

  /// High-probability successors of the context (prev2, prev1); -1 marks the
  /// sentence start.
  std::vector<int> successors(int prev2, int prev1) const {
    const std::uint64_t key = mix(seed_ ^ mix(static_cast<std::uint64_t>(prev1 + 1) * 2 +
                                              static_cast<std::uint64_t>((prev2 + 1) & 1)));
    const int base = static_cast<int>(key % static_cast<std::uint64_t>(vocab_size_));
    const int step = std::max(1, vocab_size_ / (2 * successors_));
    std::vector<int> out;
    for (int j = parity_; j < 2 * successors_; j += 2) out.push_back((base + j * step) % vocab_size_);
    return out;
  }

  std::vector<double> next_distribution(int prev2, int prev1) const {
    std::vector<double> p(static_cast<std::size_t>(vocab_size_), noise_ / vocab_size_);
    for (int s : successors(prev2, prev1)) p[static_cast<std::size_t>(s)] += (1.0 - noise_) / successors_;
    return p;
  }

  template <typename Rng>
  int sample_next(Rng& rng, int prev2, int prev1) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng) < noise_) return std::uniform_int_distribution<int>(0, vocab_size_ - 1)(rng);
    auto s = successors(prev2, prev1);
    return s[std::uniform_int_distribution<std::size_t>(0, s.size() - 1)(rng)];
  }

  /// A sentence whose length is uniform on [min_len, max_len]; token k is
  /// emitted as id k + id_offset.
  template <typename Rng>
  TokenSeq sentence(Rng& rng, int min_len, int max_len, int id_offset) const {
    const int len = std::uniform_int_distribution<int>(min_len, max_len)(rng);
    TokenSeq out;
    int prev2 = -1, prev1 = -1;
    for (int k = 0; k < len; ++k) {
      const int next = sample_next(rng, prev2, prev1);
      out.push_back(static_cast<TokenId>(next + id_offset));
      prev2 = prev1;
      prev1 = next;
    }
    return out;
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  int vocab_size_;
  int successors_;
  double noise_;
  int parity_;
  std::uint64_t seed_;
};

struct SyntheticCorpusSpec {
  int docs_per_label = 2000;
  int min_sentences = 5;
  int max_sentences = 15;
  int min_tokens = 5;
  int max_tokens = 20;
  int vocab_size = 500;
  int successors = 4;
  double true_noise = 0.1;
  double satire_noise = 0.2;  // satire is the less predictable domain
  std::uint64_t seed = 1;
};

inline std::string synthetic_word(int k) { return "w" + std::to_string(k); }

/// Two labeled corpora rendered as raw text: each sentence is capitalized and
/// ends with a period. Documents alternate true/satire.
inline std::vector<RawDocument> synthetic_corpus(const SyntheticCorpusSpec& spec) {
  const MarkovSource true_source(spec.vocab_size, spec.successors, spec.true_noise, 0, spec.seed);
  const MarkovSource satire_source(spec.vocab_size, spec.successors, spec.satire_noise, 1, spec.seed);
  std::mt19937_64 rng(spec.seed * 0x2545F4914F6CDD1DULL + 17);
  std::vector<RawDocument> docs;
  for (int d = 0; d < spec.docs_per_label; ++d) {
    for (Label label : {Label::true_news, Label::satire}) {
      const MarkovSource& src = label == Label::satire ? satire_source : true_source;
      RawDocument doc{to_string(label) + "-" + std::to_string(d), label, {}};
      const int n = std::uniform_int_distribution<int>(spec.min_sentences, spec.max_sentences)(rng);
      for (int s = 0; s < n; ++s) {
        auto ids = src.sentence(rng, spec.min_tokens, spec.max_tokens, 0);
        std::string text;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          std::string w = synthetic_word(ids[k]);
          if (k == 0) w[0] = 'W';
          if (k > 0) text += ' ';
          text += w;
        }
        text += '.';
        doc.sentences.push_back(std::move(text));
      }
      docs.push_back(std::move(doc));
    }
  }
  return docs;
}

}  // namespace satnews
