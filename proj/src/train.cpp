#include "mhs/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <ostream>
#include <sstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mhs/error.hpp"
#include "mhs/random.hpp"

namespace mhs::train {

void validate(const TrainConfig& c) {
  if (!(c.learning_rate >= 0)) throw ConfigError("learning_rate must be >= 0");
  if (!(c.momentum >= 0 && c.momentum < 1))
    throw ConfigError("momentum must lie in [0, 1)");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(c.clip_norm >= 0)) throw ConfigError("clip_norm must be >= 0");
}

// ------------------------------------------------------------ optimizer

OptimizerState OptimizerState::for_params(const ParamSet& params) {
  OptimizerState s;
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.names.push_back(params.name(i));
    s.velocity.emplace_back(params.tensor(i).size(), 0.0);
  }
  return s;
}

void sgd_momentum_update(ParamSet& params, Gradients& grads,
                         OptimizerState& state, double learning_rate,
                         double momentum) {
  if (state.names.size() != params.size())
    throw UsageError("optimizer state does not match the parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& tensor = params.tensor(i);
    if (!tensor.requires_grad()) continue;
    const std::string& name = params.name(i);
    if (state.names[i] != name || state.velocity[i].size() != tensor.size())
      throw UsageError("optimizer state does not match parameter '" + name +
                       "'");
    const auto* entry = grads.find(name);
    if (!entry) throw UsageError("missing gradient for '" + name + "'");
    auto& v = state.velocity[i];
    auto theta = tensor.values();
    if (entry->sparse) {
      const std::size_t w = entry->row_width;
      for (std::size_t k = 0; k < v.size(); ++k) v[k] *= momentum;
      for (const auto& [r, g] : entry->rows)
        for (std::size_t j = 0; j < w; ++j) v[r * w + j] += g[j];
    } else {
      for (std::size_t k = 0; k < v.size(); ++k)
        v[k] = momentum * v[k] + entry->dense[k];
    }
    for (std::size_t k = 0; k < v.size(); ++k) theta[k] -= learning_rate * v[k];
  }
  grads.zero();
}

// ------------------------------------------------------ per-document work

namespace {

std::size_t argmax(std::span<const double> p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) -
                                  p.begin());
}

std::string parameter_norms(const ParamSet& params) {
  std::ostringstream os;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double s = 0;
    for (double v : params.tensor(i).values()) s += v * v;
    os << (i ? ", " : "") << params.name(i) << '=' << std::sqrt(s);
  }
  return os.str();
}

void check_finite(double loss, const net::Model& model, std::size_t doc) {
  if (std::isfinite(loss)) return;
  throw NumericError("non-finite loss on document " + std::to_string(doc) +
                     "; parameter norms: " + parameter_norms(model.params()));
}

int effective_threads(int requested) {
#ifdef _OPENMP
  return requested > 0 ? requested : omp_get_max_threads();
#else
  (void)requested;
  return 1;
#endif
}

}  // namespace

DocumentOutcome document_gradient(const net::Model& model,
                                  const text::Document& doc, Gradients& sink) {
  ad::Tape tape;
  net::Graph graph(tape, model, &sink);
  auto fwd = net::forward(graph, doc);
  ad::Var loss = net::nll_loss(fwd.probabilities, doc.label);
  tape.backward(loss);
  DocumentOutcome out;
  out.loss = loss.item();
  out.probabilities.assign(fwd.probabilities.values().begin(),
                           fwd.probabilities.values().end());
  out.predicted = argmax(out.probabilities);
  return out;
}

namespace {

// Sums per-document results in batch order.
BatchResult reduce(const net::Model& model, std::vector<Gradients>& per_doc,
                   const std::vector<DocumentOutcome>& outcomes,
                   std::span<const text::Document> docs,
                   std::span<const std::size_t> batch) {
  BatchResult r;
  r.gradients = model.make_gradients();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    check_finite(outcomes[i].loss, model, batch[i]);
    r.gradients.accumulate(per_doc[i]);
    r.loss_sum += outcomes[i].loss;
    if (outcomes[i].predicted == docs[batch[i]].label) ++r.correct;
  }
  return r;
}

}  // namespace

BatchResult batch_gradients_serial(const net::Model& model,
                                   std::span<const text::Document> docs,
                                   std::span<const std::size_t> batch) {
  std::vector<Gradients> per_doc;
  std::vector<DocumentOutcome> outcomes;
  per_doc.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    per_doc.push_back(model.make_gradients());
    outcomes.push_back(document_gradient(model, docs[batch[i]], per_doc[i]));
  }
  return reduce(model, per_doc, outcomes, docs, batch);
}

BatchResult batch_gradients_parallel(const net::Model& model,
                                     std::span<const text::Document> docs,
                                     std::span<const std::size_t> batch,
                                     int threads) {
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
  std::vector<Gradients> per_doc(batch.size());
  std::vector<DocumentOutcome> outcomes(batch.size());
  std::vector<std::exception_ptr> errors(batch.size());
  [[maybe_unused]] const int nthreads = effective_threads(threads);
#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      per_doc[i] = model.make_gradients();
      outcomes[i] = document_gradient(model, docs[batch[i]], per_doc[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return reduce(model, per_doc, outcomes, docs, batch);
}

EpochMetrics train_epoch(net::Model& model, OptimizerState& state,
                         std::span<const text::Document> docs,
                         const TrainConfig& config, std::size_t epoch) {
  validate(config);
  if (docs.empty()) throw UsageError("no training documents");
  const auto batches = text::batch_by_length(
      docs, config.batch_size, derive_seed(config.seed, 1000 + epoch));
  double loss_sum = 0;
  std::size_t correct = 0;
  for (const auto& batch : batches) {
    BatchResult r =
        config.parallel
            ? batch_gradients_parallel(model, docs, batch, config.threads)
            : batch_gradients_serial(model, docs, batch);
    loss_sum += r.loss_sum;
    correct += r.correct;
    r.gradients.scale(1.0 / static_cast<double>(batch.size()));
    if (config.clip_norm > 0) {
      const double norm = std::sqrt(r.gradients.squared_norm());
      if (norm > config.clip_norm) r.gradients.scale(config.clip_norm / norm);
    }
    sgd_momentum_update(model.params(), r.gradients, state,
                        config.learning_rate, config.momentum);
  }
  const auto n = static_cast<double>(docs.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

// ----------------------------------------------------------- evaluation

namespace {

DocumentOutcome infer(const net::Model& model, const text::Document& doc) {
  ad::Tape tape;
  net::Graph graph(tape, model, nullptr);
  auto fwd = net::forward(graph, doc);
  DocumentOutcome out;
  out.probabilities.assign(fwd.probabilities.values().begin(),
                           fwd.probabilities.values().end());
  out.predicted = argmax(out.probabilities);
  out.loss = net::nll_loss(fwd.probabilities, doc.label).item();
  return out;
}

Evaluation summarize(const net::Model& model,
                     std::span<const text::Document> docs,
                     const std::vector<DocumentOutcome>& outcomes) {
  const std::size_t C = model.config().num_classes;
  Evaluation e;
  e.confusion.assign(C, std::vector<std::size_t>(C, 0));
  double loss = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    loss += outcomes[i].loss;
    correct += outcomes[i].predicted == docs[i].label;
    e.confusion.at(docs[i].label).at(outcomes[i].predicted) += 1;
    e.predictions.push_back(outcomes[i].predicted);
  }
  const auto n = static_cast<double>(docs.size());
  e.accuracy = docs.empty() ? 0.0 : static_cast<double>(correct) / n;
  e.mean_loss = docs.empty() ? 0.0 : loss / n;
  return e;
}

}  // namespace

Evaluation evaluate_serial(const net::Model& model,
                           std::span<const text::Document> docs) {
  std::vector<DocumentOutcome> outcomes;
  outcomes.reserve(docs.size());
  for (const auto& d : docs) outcomes.push_back(infer(model, d));
  return summarize(model, docs, outcomes);
}

Evaluation evaluate(const net::Model& model,
                    std::span<const text::Document> docs, int threads) {
  const auto n = static_cast<std::ptrdiff_t>(docs.size());
  std::vector<DocumentOutcome> outcomes(docs.size());
  std::vector<std::exception_ptr> errors(docs.size());
  [[maybe_unused]] const int nthreads = effective_threads(threads);
#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      outcomes[i] = infer(model, docs[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return summarize(model, docs, outcomes);
}

Prediction predict(const net::Model& model, const text::Document& doc) {
  ad::Tape tape;
  net::Graph graph(tape, model, nullptr);
  auto fwd = net::forward(graph, doc);
  Prediction p;
  p.probabilities.assign(fwd.probabilities.values().begin(),
                         fwd.probabilities.values().end());
  p.label = argmax(p.probabilities);
  p.trace = std::move(fwd.trace);
  return p;
}

// -------------------------------------------------------------- fitting

std::string metrics_header() {
  return "epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc\tseconds";
}

std::string format_metrics_line(const EpochRecord& r) {
  std::ostringstream os;
  os << std::setprecision(17) << r.epoch << '\t' << r.train_loss << '\t'
     << r.train_acc << '\t' << r.val_loss << '\t' << r.val_acc << '\t'
     << std::fixed << std::setprecision(3) << r.seconds;
  return os.str();
}

std::vector<EpochRecord> fit(net::Model& model, OptimizerState& state,
                             TrainingProgress& progress,
                             std::span<const text::Document> train_docs,
                             std::span<const text::Document> val_docs,
                             const TrainConfig& config,
                             const FitOptions& options) {
  validate(config);
  std::vector<EpochRecord> records;
  for (std::size_t epoch = progress.epochs_done + 1;
       epoch <= config.max_epochs; ++epoch) {
    if (config.patience > 0 && progress.stale_epochs >= config.patience) break;
    const auto start = std::chrono::steady_clock::now();
    const auto m = train_epoch(model, state, train_docs, config, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = m.mean_loss;
    rec.train_acc = m.accuracy;
    if (!val_docs.empty()) {
      const auto e = config.parallel ? evaluate(model, val_docs, config.threads)
                                     : evaluate_serial(model, val_docs);
      rec.val_loss = e.mean_loss;
      rec.val_acc = e.accuracy;
    }
    const std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - start;
    rec.seconds = options.log_timing ? elapsed.count() : 0.0;
    progress.epochs_done = epoch;
    if (rec.val_acc > progress.best_val_acc) {
      progress.best_val_acc = rec.val_acc;
      progress.best_epoch = epoch;
      progress.stale_epochs = 0;
      if (options.on_best) options.on_best(model, progress);
    } else {
      ++progress.stale_epochs;
    }
    if (options.log) *options.log << format_metrics_line(rec) << '\n';
    if (options.on_epoch) options.on_epoch(rec);
    records.push_back(rec);
    if (options.stop_at_accuracy && rec.val_acc >= *options.stop_at_accuracy)
      break;
  }
  return records;
}

GridResult grid_search(const net::ModelConfig& model_config,
                       const ad::Tensor* embeddings,
                       std::span<const text::Document> train_docs,
                       std::span<const text::Document> val_docs,
                       const TrainConfig& config,
                       std::span<const double> learning_rates,
                       std::span<const double> slopes,
                       std::size_t epoch_budget) {
  if (learning_rates.empty() || slopes.empty())
    throw UsageError("grid search needs nonempty grids");
  std::vector<double> lrs(learning_rates.begin(), learning_rates.end());
  std::vector<double> as(slopes.begin(), slopes.end());
  std::sort(lrs.begin(), lrs.end());
  std::sort(as.begin(), as.end());
  GridResult result;
  bool have_best = false;
  for (double lr : lrs)
    for (double a : as) {
      net::ModelConfig mc = model_config;
      mc.slope = a;
      auto model = net::Model::create(mc, config.seed, embeddings);
      auto state = OptimizerState::for_params(model.params());
      TrainingProgress progress;
      TrainConfig tc = config;
      tc.learning_rate = lr;
      tc.max_epochs = epoch_budget;
      fit(model, state, progress, train_docs, val_docs, tc);
      const auto e = tc.parallel ? evaluate(model, val_docs, tc.threads)
                                 : evaluate_serial(model, val_docs);
      GridPoint point{lr, a, e.accuracy, e.mean_loss};
      result.table.push_back(point);
      if (!have_best || point.val_accuracy > result.best.val_accuracy) {
        result.best = point;
        have_best = true;
      }
    }
  return result;
}

// ---------------------------------------------------------- checkpoints

namespace {

const std::string kVelocityPrefix = "velocity/";

std::string to_text(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::size_t to_size(const std::string& s) {
  try {
    return static_cast<std::size_t>(std::stoull(s));
  } catch (const std::exception&) {
    throw IntegrityError("malformed checkpoint metadata value '" + s + "'");
  }
}

double to_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw IntegrityError("malformed checkpoint metadata value '" + s + "'");
  }
}

}  // namespace

ckpt::Checkpoint make_checkpoint(const net::Model& model,
                                 const OptimizerState* optimizer,
                                 const text::Vocabulary* vocabulary,
                                 const TrainingProgress& progress) {
  const auto& c = model.config();
  ckpt::Checkpoint ck;
  ck.metadata = {
      {"variant", net::variant_name(c.variant)},
      {"vocab_size", std::to_string(c.vocab_size)},
      {"embed_dim", std::to_string(c.embed_dim)},
      {"hidden_dim", std::to_string(c.hidden_dim)},
      {"num_classes", std::to_string(c.num_classes)},
      {"slope", to_text(c.slope)},
      {"init_scale", to_text(c.init_scale)},
      {"train_embeddings", c.train_embeddings ? "1" : "0"},
      {"literal_phrase_output_gate", c.literal_phrase_output_gate ? "1" : "0"},
      {"epochs_done", std::to_string(progress.epochs_done)},
      {"best_val_acc", to_text(progress.best_val_acc)},
      {"best_epoch", std::to_string(progress.best_epoch)},
      {"stale_epochs", std::to_string(progress.stale_epochs)},
      {"has_optimizer", optimizer ? "1" : "0"},
  };
  if (vocabulary) ck.vocabulary = vocabulary->tokens();
  const auto& p = model.params();
  for (std::size_t i = 0; i < p.size(); ++i)
    ck.tensors.emplace_back(
        p.name(i),
        ad::Tensor(p.tensor(i).shape(),
                   std::vector<double>(p.tensor(i).values().begin(),
                                       p.tensor(i).values().end())));
  if (optimizer)
    for (std::size_t i = 0; i < optimizer->names.size(); ++i)
      ck.tensors.emplace_back(
          kVelocityPrefix + optimizer->names[i],
          ad::Tensor(p.tensor(i).shape(), optimizer->velocity[i]));
  return ck;
}

Snapshot restore(const ckpt::Checkpoint& ck) {
  net::ModelConfig c;
  c.variant = net::parse_variant(ck.meta("variant"));
  c.vocab_size = to_size(ck.meta("vocab_size"));
  c.embed_dim = to_size(ck.meta("embed_dim"));
  c.hidden_dim = to_size(ck.meta("hidden_dim"));
  c.num_classes = to_size(ck.meta("num_classes"));
  c.slope = to_double(ck.meta("slope"));
  c.init_scale = to_double(ck.meta("init_scale"));
  c.train_embeddings = ck.meta("train_embeddings") == "1";
  c.literal_phrase_output_gate = ck.meta("literal_phrase_output_gate") == "1";

  Snapshot s{net::Model::allocate(c), std::nullopt, std::nullopt, {}};
  auto& p = s.model.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const ad::Tensor* t = ck.find(p.name(i));
    if (!t) throw IntegrityError("checkpoint lacks tensor '" + p.name(i) + "'");
    if (t->shape() != p.tensor(i).shape())
      throw IntegrityError("tensor '" + p.name(i) + "' has shape " +
                           ad::shape_string(t->shape()) + ", expected " +
                           ad::shape_string(p.tensor(i).shape()));
    std::copy(t->values().begin(), t->values().end(),
              p.tensor(i).values().begin());
  }
  if (ck.meta("has_optimizer") == "1") {
    OptimizerState o = OptimizerState::for_params(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const ad::Tensor* t = ck.find(kVelocityPrefix + p.name(i));
      if (!t || t->size() != o.velocity[i].size())
        throw IntegrityError("checkpoint lacks velocity for '" + p.name(i) +
                             "'");
      o.velocity[i].assign(t->values().begin(), t->values().end());
    }
    s.optimizer = std::move(o);
  }
  if (!ck.vocabulary.empty()) {
    s.vocabulary = text::Vocabulary::from_tokens(ck.vocabulary);
    if (s.vocabulary->size() != c.vocab_size)
      throw IntegrityError("checkpoint vocabulary has " +
                           std::to_string(s.vocabulary->size()) +
                           " tokens, model expects " +
                           std::to_string(c.vocab_size));
  }
  s.progress.epochs_done = to_size(ck.meta("epochs_done"));
  s.progress.best_val_acc = to_double(ck.meta("best_val_acc"));
  s.progress.best_epoch = to_size(ck.meta("best_epoch"));
  s.progress.stale_epochs = to_size(ck.meta("stale_epochs"));
  return s;
}

void save_checkpoint(const std::filesystem::path& path,
                     const net::Model& model, const OptimizerState* optimizer,
                     const text::Vocabulary* vocabulary,
                     const TrainingProgress& progress) {
  ckpt::save(path, make_checkpoint(model, optimizer, vocabulary, progress));
}

Snapshot load_checkpoint(const std::filesystem::path& path) {
  return restore(ckpt::load(path));
}

}  // namespace mhs::train
