// Serial vs OpenMP batch-gradient throughput on the synthetic task.

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <numeric>

#include <omp.h>

#include "mhs/synthetic.hpp"
#include "mhs/train.hpp"

using namespace mhs;

int main(int argc, char** argv) {
  const std::size_t batch_size = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 64;
  const int repeats = argc > 2 ? std::atoi(argv[2]) : 5;

  const auto examples = synthetic::generate(batch_size, 11);
  std::vector<text::TokenizedText> texts;
  for (const auto& e : examples) texts.push_back(text::tokenize(e.text));
  const auto vocab = text::Vocabulary::build(texts, nullptr);
  std::vector<text::Document> docs;
  for (std::size_t i = 0; i < texts.size(); ++i)
    docs.push_back(vocab.encode(texts[i], examples[i].label));

  net::ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.embed_dim = 100;
  cfg.hidden_dim = 50;
  const auto model = net::Model::create(cfg, 3);
  std::vector<std::size_t> batch(docs.size());
  std::iota(batch.begin(), batch.end(), 0);

  auto time = [&](auto&& fn) {
    const auto start = std::chrono::steady_clock::now();
    for (int r = 0; r < repeats; ++r) fn();
    const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
    return d.count() / repeats;
  };
  train::BatchResult serial, parallel;
  const double ts = time([&] { serial = train::batch_gradients_serial(model, docs, batch); });
  const double tp = time([&] { parallel = train::batch_gradients_parallel(model, docs, batch); });

  bool identical = serial.loss_sum == parallel.loss_sum;
  for (std::size_t i = 0; i < serial.gradients.size(); ++i)
    identical = identical &&
                serial.gradients.to_dense(i) == parallel.gradients.to_dense(i);

  std::cout << "documents " << docs.size() << ", threads "
            << omp_get_max_threads() << '\n'
            << "serial   " << ts * 1e3 << " ms/batch\n"
            << "parallel " << tp * 1e3 << " ms/batch\n"
            << "speedup  " << ts / tp << "x\n"
            << "bit-identical " << (identical ? "yes" : "no") << '\n';
  return identical ? 0 : 1;
}
