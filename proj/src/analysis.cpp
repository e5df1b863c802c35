#include "mhs/analysis.hpp"

#include <iomanip>
#include <ostream>
#include <sstream>

#include "mhs/error.hpp"

namespace mhs::analysis {

namespace {
constexpr std::string_view kMarker = "\xE2\x80\x96";  // U+2016
}

std::vector<std::size_t> phrase_lengths(const net::BoundaryTrace& trace) {
  std::vector<std::size_t> lengths;
  std::size_t start = 0;
  for (std::size_t t = 0; t < trace.size(); ++t)
    if (trace[t].z == 1 || trace[t].p == 1) {
      lengths.push_back(t + 1 - start);
      start = t + 1;
    }
  if (start < trace.size()) lengths.push_back(trace.size() - start);
  return lengths;
}

PhraseLengthStats phrase_stats(std::span<const net::BoundaryTrace> traces) {
  if (traces.empty()) throw UsageError("phrase statistics need a trace");
  PhraseLengthStats s;
  for (const auto& trace : traces)
    for (std::size_t len : phrase_lengths(trace)) {
      if (s.phrases == 0 || len < s.min) s.min = len;
      if (len > s.max) s.max = len;
      ++s.phrases;
      s.tokens += len;
      ++s.histogram[len];
    }
  if (s.phrases > 0)
    s.mean = static_cast<double>(s.tokens) / static_cast<double>(s.phrases);
  return s;
}

const std::vector<std::string>& default_conjunctions() {
  static const std::vector<std::string> words = {
      "for",   "and",  "nor",   "but",  "or",   "yet",   "so",
      "while", "after", "once", "since", "till", "until", "when",
      "while", "that", "what",  "which", "if",  "unless", "because"};
  return words;
}

std::vector<ConjunctionRow> conjunction_table(
    std::span<const net::BoundaryTrace> traces, const text::Vocabulary& vocab,
    std::span<const std::string> words) {
  if (words.empty()) throw UsageError("conjunction word list is empty");
  std::vector<ConjunctionRow> rows;
  for (const auto& word : words) {
    ConjunctionRow row{word, 0, 0, std::nullopt};
    const std::size_t id = vocab.lookup(word);
    if (id != text::kUnkId) {
      for (const auto& trace : traces)
        for (const auto& r : trace)
          if (r.token_id == id) {
            ++row.occurrences;
            row.detected += r.z == 1;
          }
    }
    if (row.occurrences > 0)
      row.percentage = 100.0 * static_cast<double>(row.detected) /
                       static_cast<double>(row.occurrences);
    rows.push_back(row);
  }
  return rows;
}

std::string render_markup(std::span<const std::string> tokens,
                          const net::BoundaryTrace& trace) {
  if (tokens.size() != trace.size())
    throw UsageError("markup needs one trace record per token (" +
                     std::to_string(tokens.size()) + " tokens, " +
                     std::to_string(trace.size()) + " records)");
  std::string out;
  bool line_start = true;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (!line_start) out += ' ';
    out += tokens[t];
    line_start = false;
    if (trace[t].z == 1) {
      out += ' ';
      out += kMarker;
    }
    if (trace[t].p == 1) {
      out += '\n';
      line_start = true;
    }
  }
  return out;
}

std::vector<std::string> strip_markup(std::string_view markup) {
  std::vector<std::string> tokens;
  std::istringstream in{std::string(markup)};
  std::string word;
  while (in >> word)
    if (word != kMarker) tokens.push_back(word);
  return tokens;
}

std::vector<std::string> document_tokens(const text::Document& doc,
                                         const text::Vocabulary& vocab) {
  std::vector<std::string> out;
  for (const auto& sentence : doc.sentences)
    for (std::size_t id : sentence) out.push_back(vocab.token(id));
  return out;
}

void write_stats_text(std::ostream& out, const PhraseLengthStats& s) {
  out << "phrases: " << s.phrases << '\n'
      << "tokens: " << s.tokens << '\n'
      << "mean length: " << std::fixed << std::setprecision(2) << s.mean
      << '\n'
      << "min length: " << s.min << '\n'
      << "max length: " << s.max << '\n'
      << "note: the span before the first boundary counts as a phrase\n"
      << "histogram:\n";
  for (const auto& [len, count] : s.histogram)
    out << "  " << len << ": " << count << '\n';
  out.unsetf(std::ios::floatfield);
}

void write_stats_tsv(std::ostream& out, const PhraseLengthStats& s) {
  out << "key\tvalue\n"
      << "phrases\t" << s.phrases << '\n'
      << "tokens\t" << s.tokens << '\n'
      << "mean\t" << std::setprecision(17) << s.mean << '\n'
      << "min\t" << s.min << '\n'
      << "max\t" << s.max << '\n';
  for (const auto& [len, count] : s.histogram)
    out << "length_" << len << '\t' << count << '\n';
}

void write_conjunctions_text(std::ostream& out,
                             std::span<const ConjunctionRow> rows) {
  out << std::left << std::setw(10) << "word" << std::right << std::setw(12)
      << "occurrences" << std::setw(10) << "detected" << std::setw(10)
      << "percent" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(10) << r.word << std::right << std::setw(12)
        << r.occurrences << std::setw(10) << r.detected << std::setw(10);
    if (r.percentage) {
      std::ostringstream pct;
      pct << std::fixed << std::setprecision(1) << *r.percentage;
      out << pct.str();
    } else {
      out << "n/a";
    }
    out << '\n';
  }
}

void write_conjunctions_tsv(std::ostream& out,
                            std::span<const ConjunctionRow> rows) {
  out << "word\toccurrences\tdetected\tpercentage\n";
  for (const auto& r : rows) {
    out << r.word << '\t' << r.occurrences << '\t' << r.detected << '\t';
    if (r.percentage) {
      std::ostringstream pct;
      pct << std::setprecision(17) << *r.percentage;
      out << pct.str();
    } else {
      out << "undefined";
    }
    out << '\n';
  }
}

}  // namespace mhs::analysis
