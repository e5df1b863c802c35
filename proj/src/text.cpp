#include "mhs/text.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mhs::text {

namespace {

bool is_space(unsigned char c) { return std::isspace(c) != 0; }

bool is_terminal(unsigned char c, const TokenizeOptions& options) {
  return c == '.' || c == '!' || c == '?' || c == ';' ||
         (options.comma_is_boundary && c == ',');
}

// ASCII punctuation only; UTF-8 continuation bytes are kept as token text.
bool is_edge_punct(unsigned char c) { return c < 0x80 && std::ispunct(c); }

bool has_letter(const std::string& token) {
  return std::any_of(token.begin(), token.end(), [](unsigned char c) {
    return c >= 0x80 || std::isalpha(c);
  });
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string field;
  while (is >> field) out.push_back(field);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  // strtod accepts the forms found in GloVe/word2vec text files.
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && !s.empty();
}

}  // namespace

// ------------------------------------------------------------- tokenize

TokenizedText tokenize(std::string_view raw, const TokenizeOptions& options) {
  TokenizedText out;
  Sentence sentence;
  std::string token;
  bool any_letter = false;

  auto flush_token = [&] {
    std::string_view t = token;
    while (!t.empty() && is_edge_punct(static_cast<unsigned char>(t.front())))
      t.remove_prefix(1);
    while (!t.empty() && is_edge_punct(static_cast<unsigned char>(t.back())))
      t.remove_suffix(1);
    if (!t.empty()) {
      sentence.emplace_back(t);
      any_letter = any_letter || has_letter(sentence.back());
    }
    token.clear();
  };
  auto close_sentence = [&] {
    if (sentence.empty()) return;
    sentence.emplace_back(kBoundaryToken);
    out.push_back(std::move(sentence));
    sentence.clear();
  };

  for (const char ch : raw) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush_token();
    } else if (is_terminal(c, options)) {
      flush_token();
      close_sentence();
    } else {
      token.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush_token();
  close_sentence();

  if (!any_letter) throw EmptyDocumentError("document has no word tokens");
  return out;
}

std::string normalized_text(const TokenizedText& text) {
  std::string out;
  for (const auto& sentence : text) {
    for (std::size_t i = 0; i + 1 < sentence.size(); ++i) {
      if (!out.empty()) out += ' ';
      out += sentence[i];
    }
    out += " .";
  }
  return out;
}

// ------------------------------------------------------------- Document

std::size_t Document::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

void validate(const Document& doc, std::size_t num_classes) {
  if (doc.label >= num_classes)
    throw UsageError("label " + std::to_string(doc.label) +
                     " out of range for " + std::to_string(num_classes) +
                     " classes");
  if (doc.sentences.empty()) throw UsageError("document has no sentences");
  for (const auto& s : doc.sentences) {
    if (s.empty()) throw UsageError("document has an empty sentence");
    if (s.back() != kBoundaryId)
      throw UsageError("sentence does not end with the boundary token");
    if (std::find(s.begin(), s.end() - 1, kBoundaryId) != s.end() - 1)
      throw UsageError("boundary token inside a sentence");
  }
}

// ----------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kUnkToken));
  add(std::string(kBoundaryToken));
}

void Vocabulary::add(const std::string& token) {
  if (ids_.count(token)) return;
  ids_.emplace(token, tokens_.size());
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(
    std::span<const TokenizedText> corpus,
    const std::unordered_set<std::string>* pretrained) {
  Vocabulary v;
  for (const auto& text : corpus)
    for (const auto& sentence : text)
      for (std::size_t i = 0; i + 1 < sentence.size(); ++i) {
        const auto& tok = sentence[i];
        if (tok == kBoundaryToken) continue;
        if (pretrained && !pretrained->count(tok)) continue;
        v.add(tok);
      }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 3 || tokens[kPadId] != kPadToken ||
      tokens[kUnkId] != kUnkToken || tokens[kBoundaryId] != kBoundaryToken)
    throw IntegrityError("vocabulary does not start with the reserved tokens");
  Vocabulary v;
  for (std::size_t i = 3; i < tokens.size(); ++i) {
    if (v.ids_.count(tokens[i]))
      throw IntegrityError("duplicate vocabulary token '" + tokens[i] + "'");
    v.add(tokens[i]);
  }
  return v;
}

std::size_t Vocabulary::lookup(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

Document Vocabulary::encode(const TokenizedText& text,
                            std::size_t label) const {
  Document doc;
  doc.label = label;
  for (const auto& sentence : text) {
    if (sentence.empty()) continue;
    std::vector<std::size_t> ids;
    ids.reserve(sentence.size());
    for (std::size_t i = 0; i + 1 < sentence.size(); ++i) {
      const std::size_t id = lookup(sentence[i]);
      ids.push_back(id == kBoundaryId ? kUnkId : id);
    }
    ids.push_back(kBoundaryId);
    doc.sentences.push_back(std::move(ids));
  }
  return doc;
}

UnkReport unk_report(std::span<const TokenizedText> corpus,
                     const Vocabulary& vocab) {
  UnkReport r;
  for (const auto& text : corpus)
    for (const auto& sentence : text)
      for (std::size_t i = 0; i + 1 < sentence.size(); ++i) {
        ++r.total;
        const auto id = vocab.lookup(sentence[i]);
        if (id == kUnkId || id == kBoundaryId)
          ++r.unk;
        else
          ++r.found;
      }
  return r;
}

// ----------------------------------------------------------- embeddings

std::unordered_set<std::string> read_embedding_words(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read embeddings file " + path.string());
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream is(line);
    std::string word;
    if (is >> word) words.insert(word);
  }
  return words;
}

EmbeddingTable random_embeddings(const Vocabulary& vocab, std::size_t width,
                                 std::uint64_t seed) {
  if (width == 0) throw ConfigError("embedding width must be positive");
  Rng rng(derive_seed(seed, 0xE3B));
  std::vector<double> values(vocab.size() * width);
  for (auto& v : values) v = rng.uniform(-0.1, 0.1);
  std::fill_n(values.begin() + kPadId * width, width, 0.0);
  return {ad::Tensor::matrix(vocab.size(), width, std::move(values)), 0};
}

EmbeddingTable load_embeddings(std::istream& in, const Vocabulary& vocab,
                               std::size_t width, std::uint64_t seed) {
  EmbeddingTable table = random_embeddings(vocab, width, seed);
  auto values = table.matrix.values();
  std::vector<bool> filled(vocab.size(), false);
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (first) {
      first = false;
      if (fields.size() - 1 != width)
        throw ConfigError("embedding file has width " +
                          std::to_string(fields.size() - 1) +
                          " but the configured width is " +
                          std::to_string(width));
    }
    if (fields.size() != width + 1)
      throw ParseError("expected " + std::to_string(width + 1) +
                           " fields, found " + std::to_string(fields.size()),
                       line_no);
    const std::size_t id = vocab.lookup(fields[0]);
    const bool known = id != kUnkId || fields[0] == kUnkToken;
    std::vector<double> row(width);
    for (std::size_t j = 0; j < width; ++j)
      if (!parse_double(fields[j + 1], row[j]))
        throw ParseError("malformed number '" + fields[j + 1] + "'", line_no);
    if (!known || id == kPadId || filled[id]) continue;
    filled[id] = true;
    ++table.found;
    std::copy(row.begin(), row.end(), values.begin() + id * width);
  }
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               const Vocabulary& vocab, std::size_t width,
                               std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read embeddings file " + path.string());
  return load_embeddings(in, vocab, width, seed);
}

// -------------------------------------------------------------- dataset

std::vector<std::string> parse_csv_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? field : std::string(trim(field)));
      field.clear();
      was_quoted = false;
    } else if (c != '\r') {
      field += c;
    }
  }
  fields.push_back(was_quoted ? field : std::string(trim(field)));
  return fields;
}

std::string csv_quote(std::string_view field) {
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

namespace {

// True while `s` has an unterminated quoted field.
bool open_quote(std::string_view s) {
  bool quoted = false;
  for (char c : s)
    if (c == '"') quoted = !quoted;
  return quoted;
}

std::string unescape_newlines(std::string s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size() && s[i + 1] == 'n') {
      out += ' ';
      ++i;
    } else {
      out += s[i];
    }
  }
  return out;
}

}  // namespace

Corpus load_dataset(std::istream& in, const TokenizeOptions& options) {
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t record_line = line_no;
    std::string record = line;
    while (open_quote(record) && std::getline(in, line)) {
      ++line_no;
      record += '\n';
      record += line;
    }
    if (trim(record).empty()) continue;
    const auto fields = parse_csv_record(record);
    const std::string_view label_text = trim(fields[0]);
    long label = 0;
    const auto [ptr, ec] = std::from_chars(
        label_text.data(), label_text.data() + label_text.size(), label);
    if (ec != std::errc() || ptr != label_text.data() + label_text.size())
      throw ParseError("label '" + std::string(label_text) +
                           "' is not an integer",
                       record_line);
    if (label < 1) throw ParseError("labels are 1-based", record_line);
    std::string text;
    for (std::size_t i = 1; i < fields.size(); ++i) {
      if (i > 1) text += ' ';
      text += unescape_newlines(fields[i]);
    }
    try {
      corpus.records.push_back(
          {static_cast<std::size_t>(label - 1), tokenize(text, options)});
    } catch (const EmptyDocumentError&) {
      ++corpus.skipped;
    }
  }
  return corpus;
}

Corpus load_dataset(const std::filesystem::path& path,
                    const TokenizeOptions& options) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read dataset " + path.string());
  return load_dataset(in, options);
}

// -------------------------------------------------------------- batches

std::vector<std::vector<std::size_t>> batch_by_length(
    std::span<const Document> docs, std::size_t batch_size,
    std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size == 0) throw UsageError("batch size must be positive");
  std::vector<std::size_t> order(docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return docs[a].token_count() < docs[b].token_count();
                   });
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const auto end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (shuffle_seed) {
    Rng rng(*shuffle_seed);
    rng.shuffle(batches);
  }
  return batches;
}

// ---------------------------------------------------------------- cache

void write_document_cache(std::ostream& out, std::span<const Document> docs) {
  for (const auto& doc : docs) {
    out << doc.label << '\t';
    for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
      if (s) out << '|';
      for (std::size_t i = 0; i < doc.sentences[s].size(); ++i) {
        if (i) out << ' ';
        out << doc.sentences[s][i];
      }
    }
    out << '\n';
  }
}

std::vector<Document> read_document_cache(std::istream& in) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  auto parse_id = [&](std::string_view s) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
      throw ParseError("malformed id '" + std::string(s) + "'", line_no);
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("missing tab", line_no);
    Document doc;
    doc.label = parse_id(std::string_view(line).substr(0, tab));
    std::string_view rest = std::string_view(line).substr(tab + 1);
    while (true) {
      const auto bar = rest.find('|');
      const auto part = rest.substr(0, bar);
      std::vector<std::size_t> ids;
      std::size_t pos = 0;
      while (pos < part.size()) {
        auto space = part.find(' ', pos);
        if (space == std::string_view::npos) space = part.size();
        ids.push_back(parse_id(part.substr(pos, space - pos)));
        pos = space + 1;
      }
      doc.sentences.push_back(std::move(ids));
      if (bar == std::string_view::npos) break;
      rest = rest.substr(bar + 1);
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace mhs::text
