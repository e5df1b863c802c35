#pragma once

// Offline trigger-phrase classification task. Documents of 2-4 sentences
// over words w00..w49 are positive iff they contain the phrase
// "w00 w01 w02"; half of the negatives carry one or two trigger words as
// decoys so that single-word presence is not enough.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mhs::synthetic {

inline constexpr std::size_t kVocabularyWords = 50;

struct Example {
  std::size_t label = 0;  // 0 negative, 1 positive
  std::string text;
};

struct TaskSplits {
  std::vector<Example> train;
  std::vector<Example> test;
};

std::string word(std::size_t index);  // "w07"
const std::vector<std::string>& trigger();

// Exactly balanced when n is even; the order of examples is shuffled.
std::vector<Example> generate(std::size_t n, std::uint64_t seed);
TaskSplits generate_task(std::size_t train_size, std::size_t test_size,
                         std::uint64_t seed);

bool contains_trigger(const std::string& text);

// Dataset CSV: 1-based label, quoted text.
void write_csv(std::ostream& out, const std::vector<Example>& examples);
void write_csv(const std::filesystem::path& path,
               const std::vector<Example>& examples);

}  // namespace mhs::synthetic
