#pragma once

// Optimization loop, evaluation, grid search and checkpointing.
//
// Each document gets its own tape and gradient buffer; a batch gradient is
// the sum of per-document gradients taken in batch order. The OpenMP kernels
// fan documents out over threads and reduce in that same order, so their
// results are bit-identical to the serial reference kernels.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mhs/checkpoint.hpp"
#include "mhs/network.hpp"
#include "mhs/params.hpp"
#include "mhs/text.hpp"

namespace mhs::train {

struct TrainConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 30;
  std::uint64_t seed = 1;
  // Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 5;
  // Global gradient-norm clip; 0 disables.
  double clip_norm = 5.0;
  bool parallel = true;
  int threads = 0;  // 0: OpenMP default
};

void validate(const TrainConfig& config);

struct OptimizerState {
  std::vector<std::string> names;
  std::vector<std::vector<double>> velocity;

  static OptimizerState for_params(const ParamSet& params);
};

// v <- momentum * v + g; theta <- theta - lr * v, for every trainable
// parameter; the gradients are zeroed afterwards.
void sgd_momentum_update(ParamSet& params, Gradients& grads,
                         OptimizerState& state, double learning_rate,
                         double momentum);

struct DocumentOutcome {
  double loss = 0.0;
  std::size_t predicted = 0;
  std::vector<double> probabilities;
};

// Forward and backward pass for one document; gradients go to `sink`.
DocumentOutcome document_gradient(const net::Model& model,
                                  const text::Document& doc, Gradients& sink);

struct BatchResult {
  Gradients gradients;  // summed, not averaged
  double loss_sum = 0.0;
  std::size_t correct = 0;
};

BatchResult batch_gradients_serial(const net::Model& model,
                                   std::span<const text::Document> docs,
                                   std::span<const std::size_t> batch);
BatchResult batch_gradients_parallel(const net::Model& model,
                                     std::span<const text::Document> docs,
                                     std::span<const std::size_t> batch,
                                     int threads = 0);

struct EpochMetrics {
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

// One pass over `docs` in length-sorted batches; one optimizer update per
// batch with the gradient scaled by 1/|batch|. `epoch` seeds batch order.
EpochMetrics train_epoch(net::Model& model, OptimizerState& state,
                         std::span<const text::Document> docs,
                         const TrainConfig& config, std::size_t epoch);

struct Evaluation {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<std::size_t> predictions;
};

Evaluation evaluate(const net::Model& model,
                    std::span<const text::Document> docs, int threads = 0);
Evaluation evaluate_serial(const net::Model& model,
                           std::span<const text::Document> docs);

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probabilities;
  net::BoundaryTrace trace;
};

Prediction predict(const net::Model& model, const text::Document& doc);

// ------------------------------------------------------------- fitting

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double seconds = 0.0;
};

// `epoch  train_loss  train_acc  val_loss  val_acc  seconds`, tab-separated.
std::string format_metrics_line(const EpochRecord& record);
std::string metrics_header();

struct TrainingProgress {
  std::size_t epochs_done = 0;
  double best_val_acc = -1.0;
  std::size_t best_epoch = 0;
  std::size_t stale_epochs = 0;
};

struct FitOptions {
  std::ostream* log = nullptr;
  // Write wall-clock seconds into the log; when false the column is 0 so
  // logs of identical runs compare byte for byte.
  bool log_timing = false;
  std::function<void(const EpochRecord&)> on_epoch;
  // Called when validation accuracy improves.
  std::function<void(const net::Model&, const TrainingProgress&)> on_best;
  // Stop as soon as validation accuracy reaches this value.
  std::optional<double> stop_at_accuracy;
};

// Trains from progress.epochs_done + 1 up to config.max_epochs, with early
// stopping on validation accuracy. Resuming from a checkpointed (model,
// state, progress) triple reproduces an uninterrupted run exactly.
std::vector<EpochRecord> fit(net::Model& model, OptimizerState& state,
                             TrainingProgress& progress,
                             std::span<const text::Document> train_docs,
                             std::span<const text::Document> val_docs,
                             const TrainConfig& config,
                             const FitOptions& options = {});

struct GridPoint {
  double learning_rate = 0.0;
  double slope = 0.0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
};

struct GridResult {
  GridPoint best;
  std::vector<GridPoint> table;
};

// Trains one fresh model per (learning rate, slope) pair for `epoch_budget`
// epochs and keeps the best validation accuracy; ties go to the smaller
// learning rate, then the smaller slope.
GridResult grid_search(const net::ModelConfig& model_config,
                       const ad::Tensor* embeddings,
                       std::span<const text::Document> train_docs,
                       std::span<const text::Document> val_docs,
                       const TrainConfig& config,
                       std::span<const double> learning_rates,
                       std::span<const double> slopes,
                       std::size_t epoch_budget);

// --------------------------------------------------------- checkpoints

struct Snapshot {
  net::Model model;
  std::optional<OptimizerState> optimizer;
  std::optional<text::Vocabulary> vocabulary;
  TrainingProgress progress;
};

ckpt::Checkpoint make_checkpoint(const net::Model& model,
                                 const OptimizerState* optimizer,
                                 const text::Vocabulary* vocabulary,
                                 const TrainingProgress& progress);
Snapshot restore(const ckpt::Checkpoint& checkpoint);

void save_checkpoint(const std::filesystem::path& path,
                     const net::Model& model, const OptimizerState* optimizer,
                     const text::Vocabulary* vocabulary,
                     const TrainingProgress& progress);
Snapshot load_checkpoint(const std::filesystem::path& path);

}  // namespace mhs::train
