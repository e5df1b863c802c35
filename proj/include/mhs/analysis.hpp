#pragma once

// Boundary diagnostics over forward-pass traces: phrase lengths, how often
// given words open a boundary, and plain-text boundary markup.

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mhs/network.hpp"
#include "mhs/text.hpp"

namespace mhs::analysis {

// Boundaries are steps with z=1 or p=1. Each phrase ends at (and includes) a
// boundary; the span before the first boundary counts as a phrase, as does
// any tail after the last one. Lengths therefore sum to the trace length.
std::vector<std::size_t> phrase_lengths(const net::BoundaryTrace& trace);

struct PhraseLengthStats {
  double mean = 0.0;
  std::size_t min = 0;
  std::size_t max = 0;
  std::size_t phrases = 0;
  std::size_t tokens = 0;
  std::map<std::size_t, std::size_t> histogram;  // length -> count
};

// UsageError when `traces` is empty.
PhraseLengthStats phrase_stats(std::span<const net::BoundaryTrace> traces);

struct ConjunctionRow {
  std::string word;
  std::size_t occurrences = 0;
  std::size_t detected = 0;
  // detected / occurrences * 100; empty when the word never occurs.
  std::optional<double> percentage;
};

// Default conjunction list; "while" appears twice.
const std::vector<std::string>& default_conjunctions();

std::vector<ConjunctionRow> conjunction_table(
    std::span<const net::BoundaryTrace> traces, const text::Vocabulary& vocab,
    std::span<const std::string> words);

// Tokens joined by spaces, " ‖" after every z=1 token, a line break after
// every p=1 token.
std::string render_markup(std::span<const std::string> tokens,
                          const net::BoundaryTrace& trace);

// Inverse of render_markup: drops the markers and line structure.
std::vector<std::string> strip_markup(std::string_view markup);

// Token strings of an encoded document in trace order.
std::vector<std::string> document_tokens(const text::Document& doc,
                                         const text::Vocabulary& vocab);

void write_stats_text(std::ostream& out, const PhraseLengthStats& stats);
void write_stats_tsv(std::ostream& out, const PhraseLengthStats& stats);
void write_conjunctions_text(std::ostream& out,
                             std::span<const ConjunctionRow> rows);
void write_conjunctions_tsv(std::ostream& out,
                            std::span<const ConjunctionRow> rows);

}  // namespace mhs::analysis
