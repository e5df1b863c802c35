#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "mhs/error.hpp"
#include "mhs/random.hpp"
#include "mhs/train.hpp"

using namespace mhs;
using namespace mhs::train;

namespace {

net::ModelConfig tiny(net::Variant v = net::Variant::attention) {
  net::ModelConfig c;
  c.variant = v;
  c.vocab_size = 12;
  c.embed_dim = 3;
  c.hidden_dim = 3;
  c.num_classes = 2;
  return c;
}

std::vector<text::Document> random_docs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<text::Document> docs;
  for (std::size_t i = 0; i < n; ++i) {
    text::Document d;
    d.label = i % 2;
    const auto sentences = 1 + rng.below(3);
    for (std::size_t s = 0; s < sentences; ++s) {
      std::vector<std::size_t> ids(1 + rng.below(4));
      for (auto& id : ids) id = 3 + rng.below(9);
      ids.push_back(text::kBoundaryId);
      d.sentences.push_back(ids);
    }
    docs.push_back(d);
  }
  return docs;
}

// A single scalar parameter with a hand-set gradient.
struct Scalar {
  ParamSet params;
  Gradients grads;
  OptimizerState state;

  explicit Scalar(double theta) {
    params.add("x", {1}).values()[0] = theta;
    grads = Gradients::for_params(params);
    state = OptimizerState::for_params(params);
  }
  double step(double g, double lr, double mu) {
    grads.dense(0)[0] = g;
    sgd_momentum_update(params, grads, state, lr, mu);
    return params.tensor(0).values()[0];
  }
};

std::vector<double> flat(const Gradients& g) {
  std::vector<double> out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto d = g.to_dense(i);
    out.insert(out.end(), d.begin(), d.end());
  }
  return out;
}

}  // namespace

TEST_CASE("sgd with momentum: scalar oracle") {
  Scalar a(1.0);
  CHECK(a.step(2.0, 0.5, 0.0) == 0.0);  // plain SGD: 1 - 0.5 * 2

  Scalar b(0.0);
  CHECK(b.step(1.0, 1.0, 0.9) == doctest::Approx(-1.0));
  CHECK(b.step(1.0, 1.0, 0.9) == doctest::Approx(-2.9));  // v = 0.9 + 1

  Scalar c(0.0);
  c.step(1.0, 1.0, 0.5);
  const double v_before = c.state.velocity[0][0];
  c.step(0.0, 1.0, 0.5);  // zero gradient: velocity decays
  CHECK(c.state.velocity[0][0] == doctest::Approx(0.5 * v_before));
  CHECK(c.grads.dense(0)[0] == 0.0);
}

TEST_CASE("sgd: frozen parameters are skipped, missing gradients rejected") {
  ParamSet p;
  p.add("frozen", {2}, false).values()[0] = 3.0;
  p.add("live", {2});
  auto grads = Gradients::for_params(p);
  auto state = OptimizerState::for_params(p);
  CHECK(grads.find("frozen") == nullptr);
  grads.dense(1)[0] = 1.0;
  sgd_momentum_update(p, grads, state, 0.1, 0.9);
  CHECK(p.at("frozen").values()[0] == 3.0);
  CHECK(p.at("live").values()[0] == doctest::Approx(-0.1));

  grads.remove(1);
  try {
    sgd_momentum_update(p, grads, state, 0.1, 0.9);
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("live") != std::string::npos);
  }
}

TEST_CASE("training config validation") {
  TrainConfig c;
  CHECK_NOTHROW(validate(c));
  c.momentum = 1.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = {};
  c.learning_rate = -1;
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto model = net::Model::create(tiny(), 1);
  const auto before = model.params().checksum();
  auto state = OptimizerState::for_params(model.params());
  TrainConfig c;
  c.learning_rate = 0;
  c.batch_size = 4;
  const auto docs = random_docs(10, 2);
  train_epoch(model, state, docs, c, 1);
  CHECK(model.params().checksum() == before);
}

TEST_CASE("untrained model: loss near ln C, accuracy near chance") {
  auto model = net::Model::create(tiny(), 3);
  const auto docs = random_docs(200, 4);
  const auto before = model.params().checksum();
  const auto e = evaluate(model, docs);
  CHECK(model.params().checksum() == before);
  CHECK(e.mean_loss == doctest::Approx(std::log(2.0)).epsilon(0.01));
  CHECK(e.accuracy > 0.3);
  CHECK(e.accuracy < 0.7);
  std::size_t total = 0;
  for (std::size_t t = 0; t < 2; ++t) {
    const std::size_t row = e.confusion[t][0] + e.confusion[t][1];
    CHECK(row == 100);
    total += row;
  }
  CHECK(total == docs.size());

  auto state = OptimizerState::for_params(model.params());
  TrainConfig c;
  c.batch_size = 16;
  const auto m = train_epoch(model, state, docs, c, 1);
  CHECK(m.mean_loss == doctest::Approx(std::log(2.0)).epsilon(0.02));
}

TEST_CASE("evaluate matches its serial reference") {
  auto model = net::Model::create(tiny(), 5);
  const auto docs = random_docs(30, 6);
  const auto a = evaluate(model, docs, 4);
  const auto b = evaluate_serial(model, docs);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.mean_loss == b.mean_loss);
  CHECK(a.predictions == b.predictions);
  CHECK(a.confusion == b.confusion);
}

TEST_CASE("batch gradient is the sum of document gradients") {
  auto model = net::Model::create(tiny(), 7);
  const auto docs = random_docs(3, 8);
  const std::size_t batch[] = {0, 1, 2};
  const auto total = batch_gradients_serial(model, docs, batch);

  std::vector<double> expected;
  double loss = 0;
  for (const auto& d : docs) {
    auto g = model.make_gradients();
    loss += document_gradient(model, d, g).loss;
    const auto f = flat(g);
    if (expected.empty()) expected.assign(f.size(), 0.0);
    for (std::size_t k = 0; k < f.size(); ++k) expected[k] += f[k];
  }
  const auto got = flat(total.gradients);
  REQUIRE(got.size() == expected.size());
  for (std::size_t k = 0; k < got.size(); ++k)
    CHECK(got[k] == doctest::Approx(expected[k]).epsilon(1e-12));
  CHECK(total.loss_sum == doctest::Approx(loss));
}

TEST_CASE("parallel batch gradients are bit-identical to serial") {
  for (auto v : {net::Variant::attention, net::Variant::base}) {
    auto model = net::Model::create(tiny(v), 9);
    const auto docs = random_docs(40, 10);
    std::vector<std::size_t> batch(docs.size());
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i] = i;
    const auto s = batch_gradients_serial(model, docs, batch);
    for (int threads : {1, 2, 4}) {
      const auto p = batch_gradients_parallel(model, docs, batch, threads);
      CHECK(flat(p.gradients) == flat(s.gradients));
      CHECK(p.loss_sum == s.loss_sum);
      CHECK(p.correct == s.correct);
    }
  }
}

TEST_CASE("non-finite loss raises NumericError with parameter norms") {
  auto model = net::Model::create(tiny(), 11);
  model.params().at("classifier.W_c").values()[0] =
      std::numeric_limits<double>::quiet_NaN();
  const auto docs = random_docs(4, 12);
  const std::size_t batch[] = {0, 1, 2, 3};
  for (bool parallel : {false, true}) {
    try {
      parallel ? batch_gradients_parallel(model, docs, batch)
               : batch_gradients_serial(model, docs, batch);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      const std::string what = e.what();
      CHECK(what.find("document 0") != std::string::npos);
      CHECK(what.find("classifier.W_c=") != std::string::npos);
    }
  }
}

TEST_CASE("metrics line format") {
  CHECK(metrics_header() == "epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc\tseconds");
  CHECK(format_metrics_line({3, 0.5, 0.75, 0.25, 1.0, 0.0}) ==
        "3\t0.5\t0.75\t0.25\t1\t0.000");
}

TEST_CASE("fit: deterministic, resumable, early stopping") {
  const auto docs = random_docs(40, 13);
  const auto [train_docs, val_docs] = text::split_validation(docs, 0.25, 14);
  TrainConfig c;
  c.batch_size = 8;
  c.max_epochs = 6;
  c.patience = 0;

  auto run = [&](std::size_t stop_after, std::size_t epochs) {
    auto model = net::Model::create(tiny(), 15);
    auto state = OptimizerState::for_params(model.params());
    TrainingProgress progress;
    std::ostringstream log;
    FitOptions o;
    o.log = &log;
    auto first = c;
    first.max_epochs = stop_after;
    fit(model, state, progress, train_docs, val_docs, first, o);
    if (stop_after < epochs) {
      const auto snap = restore(make_checkpoint(model, &state, nullptr, progress));
      auto m2 = snap.model;
      auto s2 = *snap.optimizer;
      auto p2 = snap.progress;
      auto rest = c;
      rest.max_epochs = epochs;
      fit(m2, s2, p2, train_docs, val_docs, rest, o);
      return std::make_pair(log.str(), m2.params().checksum());
    }
    return std::make_pair(log.str(), model.params().checksum());
  };
  const auto straight = run(6, 6);
  CHECK(std::count(straight.first.begin(), straight.first.end(), '\n') == 6);
  CHECK(run(6, 6) == straight);
  CHECK(run(3, 6) == straight);

  auto model = net::Model::create(tiny(), 15);
  auto state = OptimizerState::for_params(model.params());
  TrainingProgress progress;
  auto lazy = c;
  lazy.learning_rate = 0;  // validation accuracy never improves after epoch 1
  lazy.patience = 2;
  lazy.max_epochs = 20;
  std::size_t bests = 0;
  FitOptions o;
  o.on_best = [&](const net::Model&, const TrainingProgress&) { ++bests; };
  const auto records = fit(model, state, progress, train_docs, val_docs, lazy, o);
  CHECK(records.size() == 3);
  CHECK(bests == 1);
  CHECK(progress.best_epoch == 1);
  CHECK(progress.stale_epochs == 2);
}

TEST_CASE("grid search: sorted sweep, ties go to smaller values") {
  const auto docs = random_docs(20, 16);
  TrainConfig c;
  c.batch_size = 10;
  // Learning rates this small cannot change any prediction within one epoch,
  // so every point ties.
  const double lrs[] = {2e-12, 1e-12};
  const double slopes[] = {3.0, 1.0};
  const auto r = grid_search(tiny(), nullptr, docs, docs, c, lrs, slopes, 1);
  REQUIRE(r.table.size() == 4);
  CHECK(r.table[0].learning_rate == 1e-12);
  CHECK(r.table[0].slope == 1.0);
  CHECK(r.table[1].slope == 3.0);
  CHECK(r.best.learning_rate == 1e-12);
  CHECK(r.best.slope == 1.0);
  CHECK_THROWS_AS(grid_search(tiny(), nullptr, docs, docs, c, {}, slopes, 1),
                  UsageError);
}

TEST_CASE("predict returns a full trace") {
  auto model = net::Model::create(tiny(), 17);
  const auto doc = random_docs(1, 18)[0];
  const auto p = predict(model, doc);
  CHECK(p.trace.size() == doc.token_count());
  CHECK(p.probabilities.size() == 2);
  CHECK(p.label == (p.probabilities[1] > p.probabilities[0] ? 1u : 0u));
}
