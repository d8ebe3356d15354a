#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "satnews/corpus.hpp"
#include "test_support.hpp"

using namespace satnews;
using Strings = std::vector<std::string>;

TEST(Segment, SplitsOnTerminalPunctuation) {
  EXPECT_EQ(segment_sentences("A. B? C!"), (Strings{"A.", "B?", "C!"}));
  EXPECT_EQ(segment_sentences("no terminal punctuation"), (Strings{"no terminal punctuation"}));
  EXPECT_EQ(segment_sentences("  padded text.  "), (Strings{"padded text."}));
}

TEST(Segment, AbbreviationsDoNotSplit) {
  EXPECT_EQ(segment_sentences("Mr. Smith left. He ran."), (Strings{"Mr. Smith left.", "He ran."}));
  EXPECT_EQ(segment_sentences("Dr. Who met Mrs. Jones in the U.S. Army. Then they left."),
            (Strings{"Dr. Who met Mrs. Jones in the U.S. Army.", "Then they left."}));
}

TEST(Segment, LowercaseContinuationAndQuotes) {
  EXPECT_EQ(segment_sentences("It costs 3.5 dollars. fine"), (Strings{"It costs 3.5 dollars. fine"}));
  EXPECT_EQ(segment_sentences("He said \"Stop.\" Then he left."), (Strings{"He said \"Stop.\"", "Then he left."}));
}

TEST(Segment, EmptyInputThrows) {
  EXPECT_THROW(segment_sentences(""), EmptyDocument);
  EXPECT_THROW(segment_sentences(" \n\t "), EmptyDocument);
}

TEST(Segment, CoversInput) {
  const std::string text = "First one here. Second? Third! And Mr. Fourth.";
  std::string joined;
  for (const auto& s : segment_sentences(text)) joined += (joined.empty() ? "" : " ") + s;
  EXPECT_EQ(joined, text);
}

TEST(Segment, Paragraphs) {
  EXPECT_EQ(segment_paragraphs("One. Two.\nstill one\n\n\nThree."), (Strings{"One. Two. still one", "Three."}));
  EXPECT_EQ(segment("A. B.", SegmentUnit::paragraph), (Strings{"A. B."}));
}

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("Father spends joyful afternoon"), (Strings{"father", "spends", "joyful", "afternoon"}));
  EXPECT_EQ(tokenize("it's done."), (Strings{"it", "'s", "done", "."}));
  EXPECT_EQ(tokenize(""), Strings{});
}

TEST(Tokenize, CliticsNumbersAndPunctuation) {
  EXPECT_EQ(tokenize("They don't know, we're sure!"),
            (Strings{"they", "do", "n't", "know", ",", "we", "'re", "sure", "!"}));
  EXPECT_EQ(tokenize("Pay $3.50 or 1,000 (now)"),
            (Strings{"pay", "$", "3.50", "or", "1,000", "(", "now", ")"}));
}

TEST(Tokenize, NoEmptyTokensAndIdempotent) {
  const std::string text = "  Weird -- spacing...  \"quoted\"  it's OK?! ";
  const auto tokens = tokenize(text);
  for (const auto& t : tokens) EXPECT_FALSE(t.empty());
  std::string rejoined;
  for (const auto& t : tokens) rejoined += t + " ";
  EXPECT_EQ(tokenize(rejoined), tokens);
}

namespace {
TokenizedDocument tok_doc(std::vector<Strings> sentences, std::optional<Label> label = Label::true_news) {
  return {"d", label, std::move(sentences)};
}
}  // namespace

TEST(Vocab, ThresholdRule) {
  std::vector<TokenizedDocument> docs{tok_doc({{"a", "b", "a"}, {"a"}})};
  const auto v = build_vocab(docs, 2);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.id("a"), 2);
  EXPECT_EQ(v.id("b"), Vocabulary::kUnk);
  EXPECT_EQ(v.token(Vocabulary::kEos), "<eos>");

  std::vector<TokenizedDocument> single{tok_doc({{"a"}})};
  EXPECT_EQ(build_vocab(single, 1).size(), 3u);
}

TEST(Vocab, Errors) {
  std::vector<TokenizedDocument> docs{tok_doc({{"a"}})};
  EXPECT_THROW(build_vocab(docs, 0), ConfigError);
  std::vector<TokenizedDocument> none;
  EXPECT_THROW(build_vocab(none, 1), EmptyCorpus);
}

TEST(Vocab, OrderingByFrequencyThenLexicographic) {
  std::vector<TokenizedDocument> docs{tok_doc({{"c", "b", "b", "a", "c", "d"}})};
  const auto v = build_vocab(docs, 1);
  EXPECT_EQ(v.decode(std::vector<TokenId>{2, 3, 4, 5}), (Strings{"b", "c", "a", "d"}));
}

TEST(Vocab, RoundTripAndOovClosure) {
  std::vector<TokenizedDocument> docs{tok_doc({{"the", "cat", "sat"}, {"the", "dog"}})};
  const auto v = build_vocab(docs, 1);
  const Strings known = {"dog", "the", "sat"};
  EXPECT_EQ(v.decode(v.encode(known)), known);
  for (auto id : v.encode(Strings{"zebra", "the", "quux"})) EXPECT_LT(id, static_cast<TokenId>(v.size()));
  EXPECT_EQ(v.encode(Strings{"zebra"})[0], Vocabulary::kUnk);
}

TEST(Vocab, SaveLoadKeepsFingerprint) {
  std::vector<TokenizedDocument> docs{tok_doc({{"x", "y", "y"}})};
  const auto v = build_vocab(docs, 1);
  testing_support::TempDir dir;
  const auto path = (dir.path() / "vocab.txt").string();
  v.save(path);
  const auto w = Vocabulary::load(path);
  EXPECT_EQ(w.fingerprint(), v.fingerprint());
  EXPECT_EQ(w.size(), v.size());
  std::ifstream in(path);
  std::string first, second;
  std::getline(in, first);
  std::getline(in, second);
  EXPECT_EQ(first, "<unk>");
  EXPECT_EQ(second, "<eos>");
  EXPECT_THROW(Vocabulary::load((dir.path() / "missing.txt").string()), ConfigError);

  std::vector<TokenizedDocument> other{tok_doc({{"x", "y"}})};
  EXPECT_NE(build_vocab(other, 1).fingerprint(), v.fingerprint());
}

TEST(Vocab, EncodeDocumentCarriesFingerprint) {
  std::vector<TokenizedDocument> docs{tok_doc({{"a", "b"}})};
  const auto v = build_vocab(docs, 1);
  const auto d = v.encode(docs[0]);
  EXPECT_EQ(d.vocab_fingerprint, v.fingerprint());
  EXPECT_EQ(d.sentences.size(), 1u);
}

namespace {
std::vector<RawDocument> labeled(std::size_t n_true, std::size_t n_satire) {
  std::vector<RawDocument> docs;
  for (std::size_t i = 0; i < n_true + n_satire; ++i)
    docs.push_back({std::to_string(i), i < n_true ? Label::true_news : Label::satire, {"x"}});
  return docs;
}

std::size_t count_label(const std::vector<RawDocument>& docs, Label label) {
  return static_cast<std::size_t>(
      std::count_if(docs.begin(), docs.end(), [&](const auto& d) { return d.label == label; }));
}
}  // namespace

TEST(Split, LargeCorpusCounts) {
  const auto docs = labeled(101268, 9538);
  const auto [lm, clf] = split_lm_clf<RawDocument>(docs, SplitPlan{});
  EXPECT_EQ(count_label(lm, Label::true_news), 67512u);
  EXPECT_EQ(count_label(clf, Label::true_news), 33756u);
  EXPECT_EQ(count_label(lm, Label::satire), 6358u);
  EXPECT_EQ(count_label(clf, Label::satire), 3180u);
}

TEST(Split, SmallCasesAndFractions) {
  const auto three = labeled(3, 0);
  const auto [a, b] = split_lm_clf<RawDocument>(three, SplitPlan{});
  EXPECT_EQ(a.size(), 2u);
  EXPECT_EQ(b.size(), 1u);

  const auto [num, den] = parse_fraction("1/2");
  const auto four = labeled(4, 0);
  const auto [c, d] = split_lm_clf<RawDocument>(four, SplitPlan{num, den, 7});
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(parse_fraction("0.25"), (std::pair<std::int64_t, std::int64_t>{1, 4}));
  EXPECT_THROW(parse_fraction("half"), ConfigError);
  EXPECT_THROW((SplitPlan{3, 3, 1}.validate()), ConfigError);
}

TEST(Split, DeterministicDisjointCoveringStratified) {
  const auto docs = labeled(50, 31);
  const SplitPlan plan{2, 3, 42};
  const auto first = split_lm_clf<RawDocument>(docs, plan);
  const auto again = split_lm_clf<RawDocument>(docs, plan);
  auto ids = [](const std::vector<RawDocument>& v) {
    Strings out;
    for (const auto& d : v) out.push_back(d.id);
    return out;
  };
  EXPECT_EQ(ids(first.first), ids(again.first));
  std::set<std::string> all;
  for (const auto& d : first.first) all.insert(d.id);
  for (const auto& d : first.second) EXPECT_TRUE(all.insert(d.id).second);
  EXPECT_EQ(all.size(), docs.size());
  EXPECT_NEAR(static_cast<double>(count_label(first.first, Label::true_news)), std::round(50 * 2.0 / 3), 1.0);
  EXPECT_NEAR(static_cast<double>(count_label(first.first, Label::satire)), std::round(31 * 2.0 / 3), 1.0);

  const auto other = split_lm_clf<RawDocument>(docs, SplitPlan{2, 3, 43});
  EXPECT_NE(ids(first.first), ids(other.first));
}

TEST(Jsonl, ParsesTextAndSentences) {
  testing_support::TempDir dir;
  const auto path = (dir.path() / "docs.jsonl").string();
  {
    std::ofstream out(path);
    out << R"({"id": "a1", "label": "satire", "text": "One here. Two there."})" << '\n';
    out << '\n';
    out << R"({"id": 7, "label": "true", "sentences": ["Already split", "  "]})" << '\n';
    out << R"({"id": "u", "text": "No label."})" << '\n';
  }
  const auto docs = read_documents(path);
  ASSERT_EQ(docs.size(), 3u);
  EXPECT_EQ(docs[0].sentences, (Strings{"One here.", "Two there."}));
  EXPECT_EQ(docs[0].label, Label::satire);
  EXPECT_EQ(docs[1].id, "7");
  EXPECT_EQ(docs[1].sentences, (Strings{"Already split"}));
  EXPECT_FALSE(docs[2].label.has_value());

  const auto para = read_documents(path, SegmentUnit::paragraph);
  EXPECT_EQ(para[0].sentences.size(), 1u);

  write_documents((dir.path() / "copy.jsonl").string(), docs);
  const auto copy = read_documents((dir.path() / "copy.jsonl").string());
  EXPECT_EQ(copy[0].sentences, docs[0].sentences);
  EXPECT_EQ(copy[2].label, docs[2].label);
}

TEST(Jsonl, ErrorsNameTheLine) {
  testing_support::TempDir dir;
  const auto path = (dir.path() / "bad.jsonl").string();
  {
    std::ofstream out(path);
    out << R"({"id": "a", "label": "true", "text": "Fine."})" << '\n';
    out << R"({"id": "b", "label": "maybe", "text": "Bad label."})" << '\n';
  }
  try {
    read_documents(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  {
    std::ofstream out(path);
    out << "{not json\n";
  }
  EXPECT_THROW(read_documents(path), DataError);
  EXPECT_THROW(read_documents((dir.path() / "nope.jsonl").string()), DataError);
}

TEST(Tokenize, DocumentWithoutTokensThrows) {
  RawDocument doc{"x", Label::true_news, {"...", "!!"}};
  EXPECT_NO_THROW(tokenize_document(doc));
  RawDocument empty{"y", Label::true_news, {"   "}};
  EXPECT_THROW(tokenize_document(empty), EmptyDocument);
}
