#pragma once

// Text ingestion: tokenization with sentence-boundary markers, vocabulary,
// pretrained embeddings, CSV datasets, validation splits and length batching.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "mhs/autodiff.hpp"
#include "mhs/error.hpp"
#include "mhs/random.hpp"

namespace mhs::text {

inline constexpr std::size_t kPadId = 0;
inline constexpr std::size_t kUnkId = 1;
inline constexpr std::size_t kBoundaryId = 2;
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "UNK";
inline constexpr std::string_view kBoundaryToken = "p";

struct TokenizeOptions {
  // Treat ',' as a sentence-terminal mark in addition to . ! ? ;
  bool comma_is_boundary = false;
};

using Sentence = std::vector<std::string>;
// Sentences of lowercased tokens, each closed by kBoundaryToken.
using TokenizedText = std::vector<Sentence>;

// Throws EmptyDocumentError when no token contains a letter.
TokenizedText tokenize(std::string_view raw, const TokenizeOptions& options = {});

// Renders tokens back to text that tokenizes to the same sequence.
std::string normalized_text(const TokenizedText& text);

struct LabeledText {
  std::size_t label = 0;
  TokenizedText text;
};

struct Document {
  std::size_t label = 0;
  std::vector<std::vector<std::size_t>> sentences;

  std::size_t token_count() const;
  bool operator==(const Document&) const = default;
};

// Checks the sentence/boundary invariants and label < num_classes.
void validate(const Document& doc, std::size_t num_classes);

class Vocabulary {
 public:
  // Only the reserved tokens.
  Vocabulary();

  // Corpus tokens in first-occurrence order, restricted to `pretrained` when
  // given.
  static Vocabulary build(std::span<const TokenizedText> corpus,
                          const std::unordered_set<std::string>* pretrained);
  // Restores a vocabulary from its id-ordered token list.
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::size_t lookup(std::string_view token) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  // Final token of each sentence becomes kBoundaryId; every other token is
  // looked up (a literal "p" inside a sentence maps to UNK).
  Document encode(const TokenizedText& text, std::size_t label) const;

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

struct UnkReport {
  std::size_t total = 0;  // word tokens, boundary markers excluded
  std::size_t found = 0;
  std::size_t unk = 0;
  double unk_rate() const {
    return total == 0 ? 0.0 : 1.0 - static_cast<double>(found) /
                                        static_cast<double>(total);
  }
};

UnkReport unk_report(std::span<const TokenizedText> corpus,
                     const Vocabulary& vocab);

struct EmbeddingTable {
  ad::Tensor matrix;  // V x E
  std::size_t found = 0;
  std::size_t width() const { return matrix.shape().at(1); }
};

// First field of every line of a text embedding file.
std::unordered_set<std::string> read_embedding_words(
    const std::filesystem::path& path);

// Rows for words missing from the file are drawn from U(-0.1, 0.1); the PAD
// row is zero.
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const Vocabulary& vocab, std::size_t width,
                               std::uint64_t seed);
EmbeddingTable load_embeddings(std::istream& in, const Vocabulary& vocab,
                               std::size_t width, std::uint64_t seed);
EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t width,
                                 std::uint64_t seed);

struct Corpus {
  std::vector<LabeledText> records;
  std::size_t skipped = 0;
};

// CSV with a 1-based integer label followed by one or more quoted text
// fields (joined with spaces). Labels are shifted to 0-based.
Corpus load_dataset(const std::filesystem::path& path,
                    const TokenizeOptions& options = {});
Corpus load_dataset(std::istream& in, const TokenizeOptions& options = {});

std::vector<std::string> parse_csv_record(std::string_view line);
std::string csv_quote(std::string_view field);

// Seeded shuffle then split; returns (train, validation).
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_validation(
    const std::vector<T>& items, double fraction, std::uint64_t seed);

// Indices of `docs` grouped into batches of consecutive lengths. The order of
// batches is shuffled when a seed is given.
std::vector<std::vector<std::size_t>> batch_by_length(
    std::span<const Document> docs, std::size_t batch_size,
    std::optional<std::uint64_t> shuffle_seed);

// Tokenized-document cache: `label<TAB>ids|ids|...`.
void write_document_cache(std::ostream& out, std::span<const Document> docs);
std::vector<Document> read_document_cache(std::istream& in);

// ------------------------------------------------------------ templates

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_validation(
    const std::vector<T>& items, double fraction, std::uint64_t seed) {
  if (items.size() < 2)
    throw UsageError("validation split needs at least 2 documents");
  if (!(fraction > 0.0 && fraction < 1.0))
    throw UsageError("validation fraction must lie in (0, 1)");
  std::vector<std::size_t> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  auto n_val = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(items.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, items.size() - 1);
  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_val ? out.second : out.first).push_back(items[order[i]]);
  return out;
}

}  // namespace mhs::text
