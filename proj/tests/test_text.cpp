#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "mhs/error.hpp"
#include "mhs/text.hpp"

using namespace mhs;
using namespace mhs::text;

namespace {

const std::string kFixtures = MHS_FIXTURES;

Vocabulary vocab_of(std::initializer_list<const char*> raw) {
  std::vector<TokenizedText> corpus;
  for (const char* r : raw) corpus.push_back(tokenize(r));
  return Vocabulary::build(corpus, nullptr);
}

}  // namespace

TEST_CASE("tokenize: worked examples") {
  CHECK(tokenize("Great food. Bad service!") ==
        TokenizedText{{"great", "food", "p"}, {"bad", "service", "p"}});
  CHECK(tokenize("hello") == TokenizedText{{"hello", "p"}});
  CHECK_THROWS_AS(tokenize("..."), EmptyDocumentError);
}

TEST_CASE("tokenize: terminals, stripping and empty sentences") {
  CHECK(tokenize("Why? Because; \"quoted\" (words)...") ==
        TokenizedText{{"why", "p"}, {"because", "p"}, {"quoted", "words", "p"}});
  CHECK(tokenize("a, b") == TokenizedText{{"a", "b", "p"}});
  CHECK(tokenize("a, b", {true}) == TokenizedText{{"a", "p"}, {"b", "p"}});
  CHECK(tokenize("don't stop") == TokenizedText{{"don't", "stop", "p"}});
  CHECK(tokenize("  Mixed   CASE\tWords\n") ==
        TokenizedText{{"mixed", "case", "words", "p"}});
  CHECK_THROWS_AS(tokenize(""), EmptyDocumentError);
  CHECK_THROWS_AS(tokenize("123 456."), EmptyDocumentError);
  CHECK_THROWS_AS(tokenize("! ? ; ,"), EmptyDocumentError);
}

TEST_CASE("tokenize is idempotent through normalized text") {
  for (const char* raw :
       {"Great food. Bad service!", "one two; three? four", "x", "A, b. c!"}) {
    const auto once = tokenize(raw);
    CHECK(tokenize(normalized_text(once)) == once);
  }
}

TEST_CASE("vocabulary: reserved ids and lookup") {
  Vocabulary v;
  CHECK(v.size() == 3);
  CHECK(v.lookup("<pad>") == kPadId);
  CHECK(v.lookup("UNK") == kUnkId);
  CHECK(v.lookup("p") == 2);
  CHECK(v.lookup("anything") == kUnkId);
}

TEST_CASE("vocabulary: pretrained restriction and first-occurrence order") {
  std::vector<TokenizedText> corpus = {tokenize("xyzzy the cat."),
                                       tokenize("The dog, the cat!")};
  const std::unordered_set<std::string> pretrained = {"the", "cat", "dog",
                                                      "unused"};
  const auto v = Vocabulary::build(corpus, &pretrained);
  CHECK(v.tokens() ==
        std::vector<std::string>{"<pad>", "UNK", "p", "the", "cat", "dog"});
  CHECK(v.lookup("xyzzy") == kUnkId);
  CHECK(v.lookup("unused") == kUnkId);
  const auto again = Vocabulary::build(corpus, &pretrained);
  CHECK(again.tokens() == v.tokens());

  const auto all = Vocabulary::build(corpus, nullptr);
  CHECK(all.lookup("xyzzy") == 3);
}

TEST_CASE("vocabulary: restoring from tokens checks reserved entries") {
  CHECK(Vocabulary::from_tokens({"<pad>", "UNK", "p", "a"}).lookup("a") == 3);
  CHECK_THROWS_AS(Vocabulary::from_tokens({"UNK", "<pad>", "p"}),
                  IntegrityError);
}

TEST_CASE("encode: boundary ids close sentences, interior p is UNK") {
  const auto v = vocab_of({"the cat sat."});
  const auto doc = v.encode(tokenize("The p cat. Sat!"), 1);
  CHECK(doc.label == 1);
  CHECK(doc.sentences ==
        std::vector<std::vector<std::size_t>>{{3, kUnkId, 4, 2}, {5, 2}});
  CHECK_NOTHROW(validate(doc, 2));
  CHECK_THROWS_AS(validate(doc, 1), UsageError);
  CHECK(doc.token_count() == 6);
}

TEST_CASE("validate rejects malformed documents") {
  CHECK_THROWS_AS(validate(Document{0, {}}, 2), UsageError);
  CHECK_THROWS_AS(validate(Document{0, {{3, 4}}}, 2), UsageError);
  CHECK_THROWS_AS(validate(Document{0, {{3, 2, 4, 2}}}, 2), UsageError);
  CHECK_NOTHROW(validate(Document{0, {{2}}}, 2));
}

TEST_CASE("embeddings: direct read, PAD row and missing words") {
  Vocabulary v = vocab_of({"the fox."});
  std::istringstream file("the 0.1 0.2\nunrelated 5 5\n");
  const auto table = load_embeddings(file, v, 2, 7);
  const auto m = table.matrix.values();
  REQUIRE(table.matrix.shape() == ad::Shape{v.size(), 2});
  const auto the = v.lookup("the");
  CHECK(m[the * 2] == 0.1);
  CHECK(m[the * 2 + 1] == 0.2);
  CHECK(m[kPadId * 2] == 0.0);
  CHECK(m[kPadId * 2 + 1] == 0.0);
  const auto fox = v.lookup("fox");
  for (int k = 0; k < 2; ++k) {
    CHECK(m[fox * 2 + k] > -0.1);
    CHECK(m[fox * 2 + k] < 0.1);
  }
  CHECK(table.found == 1);
}

TEST_CASE("embeddings: random rows depend only on the seed") {
  Vocabulary v = vocab_of({"a b c."});
  std::istringstream f1("a 1 1\n"), f2("a 1 1\n"), f3("a 1 1\n");
  const auto t1 = load_embeddings(f1, v, 2, 3);
  const auto t2 = load_embeddings(f2, v, 2, 3);
  const auto t3 = load_embeddings(f3, v, 2, 4);
  CHECK(std::equal(t1.matrix.values().begin(), t1.matrix.values().end(),
                   t2.matrix.values().begin()));
  CHECK(!std::equal(t1.matrix.values().begin(), t1.matrix.values().end(),
                    t3.matrix.values().begin()));
}

TEST_CASE("embeddings: errors") {
  Vocabulary v = vocab_of({"a b."});
  std::istringstream wrong_width("a 0.1 0.2 0.3\n");
  CHECK_THROWS_AS(load_embeddings(wrong_width, v, 2, 1), ConfigError);
  std::istringstream ragged("a 0.1 0.2\nb 0.3\n");
  try {
    load_embeddings(ragged, v, 2, 1);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream not_number("a 0.1 zz\n");
  CHECK_THROWS_AS(load_embeddings(not_number, v, 2, 1), ParseError);
  CHECK_THROWS_AS(load_embeddings(kFixtures + "/missing.txt", v, 2, 1),
                  IoError);
}

TEST_CASE("dataset: worked examples") {
  std::istringstream one("\"5\",\"Great food.\"\n");
  const auto c = load_dataset(one);
  REQUIRE(c.records.size() == 1);
  CHECK(c.records[0].label == 4);
  CHECK(c.records[0].text.size() == 1);

  std::istringstream skipped("\"1\",\"...\"\n\"2\",\"fine.\"\n");
  const auto s = load_dataset(skipped);
  CHECK(s.records.size() == 1);
  CHECK(s.skipped == 1);

  std::istringstream three("\"1\",\"a.\"\n\"2\",\"b.\"\n\"1\",\"c.\"\n");
  CHECK(load_dataset(three).records.size() == 3);
}

TEST_CASE("dataset: quoting, multiple fields and errors") {
  std::istringstream in(
      "\"2\",\"Title\",\"He said \"\"hi\"\"\\nthen left.\"\n"
      "\"1\",\"multi\nline record\"\n");
  const auto c = load_dataset(in);
  REQUIRE(c.records.size() == 2);
  CHECK(c.records[0].text ==
        TokenizedText{{"title", "he", "said", "hi", "then", "left", "p"}});
  CHECK(c.records[1].text == TokenizedText{{"multi", "line", "record", "p"}});

  std::istringstream bad("\"1\",\"ok\"\n\"x\",\"bad label\"\n");
  try {
    load_dataset(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  std::istringstream zero("\"0\",\"zero label\"\n");
  CHECK_THROWS_AS(load_dataset(zero), ParseError);
  CHECK_THROWS_AS(load_dataset(kFixtures + "/does_not_exist.csv"), IoError);
}

TEST_CASE("csv helpers round-trip fields") {
  const std::string field = "a \"quoted\", text";
  const auto parsed = parse_csv_record("\"3\"," + csv_quote(field));
  CHECK(parsed == std::vector<std::string>{"3", field});
}

TEST_CASE("split_validation: sizes, determinism and exact partition") {
  std::vector<int> items(100);
  for (int i = 0; i < 100; ++i) items[i] = i;
  const auto [train, val] = split_validation(items, 0.1, 5);
  CHECK(train.size() == 90);
  CHECK(val.size() == 10);
  const auto again = split_validation(items, 0.1, 5);
  CHECK(again.first == train);
  CHECK(again.second == val);
  std::vector<int> all = train;
  all.insert(all.end(), val.begin(), val.end());
  std::sort(all.begin(), all.end());
  CHECK(all == items);

  CHECK_THROWS_AS(split_validation(std::vector<int>{1}, 0.1, 1), UsageError);
  CHECK_THROWS_AS(split_validation(items, 0.0, 1), UsageError);
  CHECK_THROWS_AS(split_validation(items, 1.0, 1), UsageError);
  // At least one document lands on each side.
  const auto tiny = split_validation(std::vector<int>{1, 2}, 0.1, 1);
  CHECK(tiny.first.size() == 1);
  CHECK(tiny.second.size() == 1);
}

TEST_CASE("batch_by_length: sizes, sort order and coverage") {
  std::vector<Document> docs;
  Rng rng(3);
  for (int i = 0; i < 130; ++i) {
    std::vector<std::size_t> s(1 + rng.below(20), 3);
    s.back() = kBoundaryId;
    docs.push_back({0, {s}});
  }
  const auto sorted = batch_by_length(docs, 64, std::nullopt);
  REQUIRE(sorted.size() == 3);
  CHECK(sorted[0].size() == 64);
  CHECK(sorted[1].size() == 64);
  CHECK(sorted[2].size() == 2);
  for (std::size_t b = 0; b + 1 < sorted.size(); ++b) {
    std::size_t max_len = 0, min_next = SIZE_MAX;
    for (auto i : sorted[b]) max_len = std::max(max_len, docs[i].token_count());
    for (auto i : sorted[b + 1])
      min_next = std::min(min_next, docs[i].token_count());
    CHECK(max_len <= min_next);
  }
  const auto shuffled = batch_by_length(docs, 64, 9);
  std::multiset<std::size_t> seen;
  for (const auto& b : shuffled) seen.insert(b.begin(), b.end());
  CHECK(seen.size() == 130);
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 130);
  // Shuffling reorders whole batches only.
  for (const auto& b : shuffled)
    CHECK(std::find(sorted.begin(), sorted.end(), b) != sorted.end());

  const std::vector<Document> one = {{0, {{2}}}};
  CHECK(batch_by_length(one, 64, 1) ==
        std::vector<std::vector<std::size_t>>{{0}});
}

TEST_CASE("document cache round-trips bit-exactly") {
  const std::vector<Document> docs = {{1, {{3, 4, 2}, {5, 2}}},
                                      {0, {{1, 1, 1, 2}}}};
  std::stringstream buf;
  write_document_cache(buf, docs);
  CHECK(buf.str() == "1\t3 4 2|5 2\n0\t1 1 1 2\n");
  CHECK(read_document_cache(buf) == docs);
}

TEST_CASE("UNK report on the hand-counted fixture") {
  const auto corpus = load_dataset(kFixtures + "/unk_corpus.csv");
  REQUIRE(corpus.records.size() == 20);
  std::vector<TokenizedText> texts;
  for (const auto& r : corpus.records) texts.push_back(r.text);
  const auto words = read_embedding_words(kFixtures + "/unk_embeddings.txt");
  const auto vocab = Vocabulary::build(texts, &words);
  CHECK(vocab.size() == 13);
  const auto report = unk_report(texts, vocab);
  CHECK(report.total == 67);
  CHECK(report.found == 54);
  CHECK(report.unk == 13);
  CHECK(report.unk_rate() == 1.0 - 54.0 / 67.0);
  const auto table =
      load_embeddings(kFixtures + "/unk_embeddings.txt", vocab, 2, 1);
  CHECK(table.found == 10);
}
