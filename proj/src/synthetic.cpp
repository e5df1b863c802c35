#include "mhs/synthetic.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mhs/error.hpp"
#include "mhs/random.hpp"
#include "mhs/text.hpp"

namespace mhs::synthetic {

namespace {

constexpr std::size_t kTriggerLength = 3;

using Sentences = std::vector<std::vector<std::string>>;

Sentences filler(Rng& rng) {
  Sentences s(2 + rng.below(3));
  for (auto& sentence : s) {
    const std::size_t len = 4 + rng.below(5);
    for (std::size_t i = 0; i < len; ++i)
      sentence.push_back(
          word(kTriggerLength + rng.below(kVocabularyWords - kTriggerLength)));
  }
  return s;
}

void insert_at_random(Rng& rng, Sentences& doc,
                      const std::vector<std::string>& words) {
  auto& sentence = doc[rng.below(doc.size())];
  const auto pos = static_cast<std::ptrdiff_t>(rng.below(sentence.size() + 1));
  sentence.insert(sentence.begin() + pos, words.begin(), words.end());
}

std::string render(const Sentences& doc) {
  std::string out;
  for (const auto& sentence : doc) {
    for (const auto& w : sentence) out += w + ' ';
    out.back() = '.';
    out += ' ';
  }
  out.pop_back();
  return out;
}

Example make(Rng& rng, bool positive) {
  Sentences doc = filler(rng);
  if (positive) {
    insert_at_random(rng, doc, trigger());
  } else if (rng.bernoulli(0.5)) {
    // One or two trigger words, each inserted on its own.
    const std::size_t count = 1 + rng.below(2);
    for (std::size_t k = 0; k < count; ++k)
      insert_at_random(rng, doc, {trigger()[rng.below(kTriggerLength)]});
  }
  Example e{positive ? 1u : 0u, render(doc)};
  // A decoy can land in trigger order by chance; keep labels truthful.
  e.label = contains_trigger(e.text) ? 1 : 0;
  return e;
}

}  // namespace

std::string word(std::size_t index) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "w%02zu", index);
  return buf;
}

const std::vector<std::string>& trigger() {
  static const std::vector<std::string> t = {word(0), word(1), word(2)};
  return t;
}

bool contains_trigger(const std::string& text) {
  for (const auto& sentence : text::tokenize(text)) {
    for (std::size_t i = 0; i + kTriggerLength <= sentence.size(); ++i)
      if (sentence[i] == trigger()[0] && sentence[i + 1] == trigger()[1] &&
          sentence[i + 2] == trigger()[2])
        return true;
  }
  return false;
}

std::vector<Example> generate(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Example> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool positive = i % 2 == 0;
    Example e = make(rng, positive);
    while (e.label != (positive ? 1u : 0u)) e = make(rng, positive);
    out.push_back(std::move(e));
  }
  rng.shuffle(out);
  return out;
}

TaskSplits generate_task(std::size_t train_size, std::size_t test_size,
                         std::uint64_t seed) {
  return {generate(train_size, derive_seed(seed, 1)),
          generate(test_size, derive_seed(seed, 2))};
}

void write_csv(std::ostream& out, const std::vector<Example>& examples) {
  for (const auto& e : examples)
    out << '"' << e.label + 1 << "\"," << text::csv_quote(e.text) << '\n';
}

void write_csv(const std::filesystem::path& path,
               const std::vector<Example>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_csv(out, examples);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace mhs::synthetic
