#include <doctest.h>

#include <cmath>

#include "mhs/error.hpp"
#include "mhs/network.hpp"
#include "mhs/random.hpp"

using namespace mhs;
using namespace mhs::net;
using ad::Tape;
using ad::Var;
using detectors::Scenario;

namespace {

using Vec = std::vector<double>;

ModelConfig small_config(Variant v, std::size_t D = 3, std::size_t E = 4) {
  ModelConfig c;
  c.variant = v;
  c.vocab_size = 10;
  c.embed_dim = E;
  c.hidden_dim = D;
  c.num_classes = 2;
  return c;
}

// Detector weights zeroed so z~ = hardsigm(bias, 1) regardless of the input.
void force_detector(Model& m, double z_tilde) {
  auto& p = m.params();
  for (double& v : p.at("detector.W_d").values()) v = 0;
  for (double& v : p.at("detector.U_d").values()) v = 0;
  auto b = p.at("detector.b_d").values();
  std::fill(b.begin(), b.end(), 0.0);
  b[0] = 2 * z_tilde - 1;
}

Vec values(Var v) { return {v.values().begin(), v.values().end()}; }

Var random_vec(Tape& t, Rng& rng, std::size_t n) {
  Vec v(n);
  for (auto& x : v) x = rng.uniform(-0.9, 0.9);
  return t.constant({n}, v);
}

LayerStates random_states(Graph& g, Rng& rng, bool z_prev, bool p_prev) {
  const auto D = g.model().config().hidden_dim;
  auto& t = g.tape();
  LayerStates s;
  s.word = {random_vec(t, rng, D), random_vec(t, rng, D)};
  s.phrase = {random_vec(t, rng, D), random_vec(t, rng, D)};
  s.sentence = {random_vec(t, rng, D), random_vec(t, rng, D)};
  s.z_prev = z_prev;
  s.p_prev = p_prev;
  return s;
}

text::Document random_doc(Rng& rng, std::size_t sentences, std::size_t vocab) {
  text::Document d;
  d.label = rng.below(2);
  for (std::size_t s = 0; s < sentences; ++s) {
    std::vector<std::size_t> ids(1 + rng.below(5));
    for (auto& id : ids) id = 3 + rng.below(vocab - 3);
    ids.push_back(text::kBoundaryId);
    d.sentences.push_back(ids);
  }
  return d;
}

double sum_of(Var v) {
  double s = 0;
  for (double x : v.values()) s += x;
  return s;
}

}  // namespace

TEST_CASE("model parameters: names, shapes and initialization") {
  auto m = Model::create(small_config(Variant::attention), 1);
  const auto& p = m.params();
  CHECK(p.at("embedding").shape() == ad::Shape{10, 4});
  CHECK(p.at("detector.W_d").shape() == ad::Shape{3, 3});
  CHECK(p.at("detector.U_d").shape() == ad::Shape{3, 4});
  CHECK(p.at("word.U_i").shape() == ad::Shape{3, 4});
  CHECK(p.at("phrase.U_o").shape() == ad::Shape{3, 3});
  CHECK(p.at("sent_fwd.U_c").shape() == ad::Shape{3, 6});
  CHECK(p.at("attn.u_s").shape() == ad::Shape{6});
  CHECK(p.at("attn.u_d").shape() == ad::Shape{6});
  CHECK(p.at("classifier.W_c").shape() == ad::Shape{2, 6});
  CHECK_FALSE(p.find("sentence.W_i"));
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& name = p.name(i);
    const bool bias = name.find(".b_") != std::string::npos;
    for (double v : p.tensor(i).values()) {
      if (bias) CHECK(v == 0.0);
      else CHECK(std::abs(v) < 0.1);
    }
  }
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(p.at("embedding").values()[k] == 0.0);

  auto base = Model::create(small_config(Variant::base), 1);
  CHECK(base.params().at("sentence.W_i").shape() == ad::Shape{3, 3});
  CHECK(base.params().at("classifier.W_c").shape() == ad::Shape{2, 3});
  CHECK_FALSE(base.params().find("attn.u_s"));
}

TEST_CASE("model creation is seeded and accepts an embedding table") {
  const auto cfg = small_config(Variant::attention);
  auto a = Model::create(cfg, 5), b = Model::create(cfg, 5),
       c = Model::create(cfg, 6);
  CHECK(a.params().checksum() == b.params().checksum());
  CHECK(a.params().checksum() != c.params().checksum());

  ad::Tensor table({10, 4}, Vec(40, 0.25));
  auto m = Model::create(cfg, 1, &table);
  CHECK(m.params().at("embedding").values()[0] == 0.0);  // PAD row
  CHECK(m.params().at("embedding").values()[4] == 0.25);
  ad::Tensor wrong({10, 3}, Vec(30, 0.0));
  CHECK_THROWS_AS(Model::create(cfg, 1, &wrong), ConfigError);

  auto bad = cfg;
  bad.slope = 0;
  CHECK_THROWS_AS(Model::create(bad, 1), ConfigError);
}

TEST_CASE("embedding gradients are stored sparsely") {
  auto m = Model::create(small_config(Variant::attention), 1);
  const auto g = m.make_gradients();
  CHECK(g.find("embedding")->sparse);
  CHECK_FALSE(g.find("word.W_i")->sparse);
  auto frozen_cfg = small_config(Variant::attention);
  frozen_cfg.train_embeddings = false;
  const auto f = Model::create(frozen_cfg, 1).make_gradients();
  CHECK(f.find("embedding") == nullptr);
}

TEST_CASE("mhs_step: the six scenarios route states as specified") {
  struct Case {
    bool z_prev, p_prev;
    double z_tilde;
    std::size_t token;
    Scenario scenario;
  };
  const Case cases[] = {
      {false, false, 0.3, 5, Scenario::s3},
      {true, false, 0.3, 5, Scenario::s2},
      {false, true, 0.3, 5, Scenario::s2},
      {false, false, 0.7, 5, Scenario::s4},
      {true, false, 0.7, 5, Scenario::s5},
      {false, false, 0.3, text::kBoundaryId, Scenario::s1},
      {false, false, 0.7, text::kBoundaryId, Scenario::s1},
      {true, true, 0.3, text::kBoundaryId, Scenario::s6},
  };
  for (const auto& c : cases) {
    CAPTURE(static_cast<int>(c.scenario));
    auto m = Model::create(small_config(Variant::base), 2);
    force_detector(m, c.z_tilde);
    Tape t;
    Graph g(t, m, nullptr);
    Rng rng(3);
    const auto s = random_states(g, rng, c.z_prev, c.p_prev);
    const auto r = mhs_step(g, s, g.embed(c.token), c.token, {});
    CHECK(r.record.scenario == c.scenario);
    CHECK(r.record.z_tilde == doctest::Approx(c.z_tilde));

    const bool prev = c.z_prev || c.p_prev;
    const bool p_cur = c.token == text::kBoundaryId;
    const bool phrase_moves = p_cur || c.z_tilde > 0.5;
    const auto& L = g.layers();
    const auto word = prev ? lstm::reinit_step(L.word, s.phrase.h, g.embed(c.token))
                           : lstm::step(L.word, s.word.h, g.embed(c.token), s.word.c);
    CHECK(values(r.states.word.h) == values(word.h));
    CHECK(values(r.states.word.c) == values(word.c));
    if (phrase_moves) {
      const auto upd = lstm::step(L.phrase, s.phrase.h, word.h, s.phrase.c);
      for (std::size_t k = 0; k < 3; ++k)
        CHECK(r.states.phrase.h[k] == doctest::Approx(upd.h[k]).epsilon(1e-15));
    } else {
      CHECK(values(r.states.phrase.h) == values(s.phrase.h));
      CHECK(values(r.states.phrase.c) == values(s.phrase.c));
    }
    if (p_cur) {
      CHECK(values(r.states.sentence.h) != values(s.sentence.h));
    } else {
      CHECK(values(r.states.sentence.h) == values(s.sentence.h));
      CHECK(values(r.states.sentence.c) == values(s.sentence.c));
    }
    CHECK(r.states.z_prev == (c.z_tilde > 0.5));
    CHECK(r.states.p_prev == p_cur);
    CHECK(values(r.h_concat).size() == 6);
  }
}

TEST_CASE("mhs_step: exhaustive flags, copy exactness and gate equivalence") {
  for (int bits = 0; bits < 16; ++bits) {
    const bool z_prev = bits & 1, p_prev = bits & 2, z_cur = bits & 4,
               p_cur = bits & 8;
    CAPTURE(bits);
    auto m = Model::create(small_config(Variant::base), 4);
    force_detector(m, z_cur ? 0.8 : 0.2);
    const std::size_t token = p_cur ? text::kBoundaryId : 6;

    Tape t;
    Graph g(t, m, nullptr);
    Rng rng(bits + 10);
    const auto s = random_states(g, rng, z_prev, p_prev);
    StepOptions mixture, literal;
    literal.literal_branching = true;
    const auto a = mhs_step(g, s, g.embed(token), token, mixture);
    const auto b = mhs_step(g, s, g.embed(token), token, literal);

    CHECK(a.record.scenario ==
          detectors::classify_scenario({z_prev, p_prev, z_cur, p_cur}));
    // Phrase gate is max(z, p); sentence gate is p.
    CHECK((values(a.states.phrase.h) != values(s.phrase.h)) == (z_cur || p_cur));
    CHECK((values(a.states.sentence.h) != values(s.sentence.h)) == p_cur);
    const auto sc = static_cast<int>(a.record.scenario);
    if (sc == 2 || sc == 3) {
      CHECK(values(a.states.phrase.h) == values(s.phrase.h));
      CHECK(values(a.states.phrase.c) == values(s.phrase.c));
      CHECK(values(a.states.sentence.h) == values(s.sentence.h));
      CHECK(values(a.states.sentence.c) == values(s.sentence.c));
    }
    CHECK(values(a.states.phrase.h) == values(b.states.phrase.h));
    CHECK(values(a.states.phrase.c) == values(b.states.phrase.c));
    CHECK(values(a.states.sentence.h) == values(b.states.sentence.h));
    CHECK(values(a.h_concat) == values(b.h_concat));
  }
}

TEST_CASE("mhs_step: detector source follows the previous flags") {
  auto m = Model::create(small_config(Variant::base), 7);
  Tape t;
  Graph g(t, m, nullptr);
  Rng rng(8);
  for (bool prev : {false, true}) {
    const auto s = random_states(g, rng, prev, false);
    const auto r = mhs_step(g, s, g.embed(4), 4, {});
    const auto expect = detectors::dynamic_preactivation(
        g.layers().detector, prev ? s.phrase.h : s.word.h, g.embed(4), 1.0);
    CHECK(r.record.preactivation == expect.preactivation);
  }
}

TEST_CASE("mhs_step: wrong embedding width") {
  auto m = Model::create(small_config(Variant::base), 7);
  Tape t;
  Graph g(t, m, nullptr);
  CHECK_THROWS_AS(mhs_step(g, initial_states(g), t.zeros(3), 4, {}),
                  DimensionError);
  CHECK_THROWS_AS(g.embed(10), UsageError);
}

TEST_CASE("attention pooling examples") {
  auto m = Model::create(small_config(Variant::attention), 9);
  Tape t;
  Graph g(t, m, nullptr);
  Rng rng(10);
  const auto& L = g.layers();

  const Var one[] = {random_vec(t, rng, 6)};
  auto r = word_phrase_attention(L, one);
  CHECK(values(r.weights) == Vec{1.0});
  CHECK(values(r.pooled) == values(one[0]));

  const Var h = random_vec(t, rng, 6);
  const Var same[] = {h, h, h};
  r = word_phrase_attention(L, same);
  for (double w : r.weights.values()) CHECK(w == doctest::Approx(1.0 / 3));
  for (std::size_t k = 0; k < 6; ++k)
    CHECK(r.pooled[k] == doctest::Approx(h[k]).epsilon(1e-14));

  std::vector<Var> seven;
  for (int i = 0; i < 7; ++i) seven.push_back(random_vec(t, rng, 6));
  CHECK(std::abs(sum_of(word_phrase_attention(L, seven).weights) - 1) < 1e-9);

  auto s = sentence_attention(L, one);
  CHECK(values(s.pooled) == values(one[0]));
  const Var two[] = {h, h};
  s = sentence_attention(L, two);
  CHECK(values(s.weights) == Vec{0.5, 0.5});

  CHECK_THROWS_AS(word_phrase_attention(L, std::span<const Var>{}), UsageError);
}

TEST_CASE("forward passes: normalization, trace and readouts") {
  Rng rng(12);
  for (auto variant : {Variant::attention, Variant::base}) {
    auto m = Model::create(small_config(variant), 13);
    for (int trial = 0; trial < 20; ++trial) {
      const auto doc = random_doc(rng, 1 + rng.below(4), 10);
      Tape t;
      Graph g(t, m, nullptr);
      const auto r = forward(g, doc);
      CHECK(std::abs(sum_of(r.probabilities) - 1) < 1e-9);
      REQUIRE(r.trace.size() == doc.token_count());
      std::size_t k = 0;
      bool z_prev = false, p_prev = false;
      for (const auto& s : doc.sentences)
        for (std::size_t id : s) {
          const auto& rec = r.trace[k++];
          CHECK(rec.token_id == id);
          CHECK(rec.p == (id == text::kBoundaryId));
          CHECK(rec.z == (rec.z_tilde > 0.5));
          CHECK(rec.scenario == detectors::classify_scenario(
                                    {z_prev, p_prev, rec.z == 1, rec.p == 1}));
          z_prev = rec.z, p_prev = rec.p;
        }
      if (variant == Variant::attention) {
        REQUIRE(r.word_attention.size() == doc.sentences.size());
        for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
          CHECK(r.word_attention[i].size() == doc.sentences[i].size());
          CHECK(std::abs(sum_of(r.word_attention[i]) - 1) < 1e-9);
        }
        CHECK(std::abs(sum_of(r.sentence_attention) - 1) < 1e-9);
      }
    }
  }
}

TEST_CASE("forward: zero classifier gives uniform probabilities") {
  auto m = Model::create(small_config(Variant::attention), 14);
  for (double& v : m.params().at("classifier.W_c").values()) v = 0;
  Rng rng(15);
  Tape t;
  Graph g(t, m, nullptr);
  const auto r = forward(g, random_doc(rng, 3, 10));
  CHECK(values(r.probabilities) == Vec{0.5, 0.5});
}

TEST_CASE("forward_base: zero parameters give a zero document vector") {
  auto m = Model::create(small_config(Variant::base), 16);
  for (std::size_t i = 0; i < m.params().size(); ++i)
    for (double& v : m.params().tensor(i).values()) v = 0;
  Tape t;
  Graph g(t, m, nullptr);
  const text::Document doc{0, {{4, 2}}};
  const auto r = forward_base(g, doc);
  CHECK(values(r.document_vector) == Vec{0, 0, 0});
  REQUIRE(r.trace.size() == 2);
  const auto s2 = r.trace[1].scenario;
  CHECK((s2 == Scenario::s1 || s2 == Scenario::s6));
  CHECK((s2 == Scenario::s6) == (r.trace[0].z == 1));
}

TEST_CASE("forward: wrong variant and empty documents are rejected") {
  auto m = Model::create(small_config(Variant::attention), 17);
  Tape t;
  Graph g(t, m, nullptr);
  CHECK_THROWS_AS(forward_base(g, {0, {{4, 2}}}), UsageError);
  CHECK_THROWS_AS(forward(g, {0, {}}), UsageError);
}

TEST_CASE("forward: deterministic, order-sensitive, frozen-equivalent") {
  auto m = Model::create(small_config(Variant::attention), 18);
  auto& W = m.params().at("sent_fwd.U_i");
  for (double& v : W.values()) v *= 8;  // make sentence order matter visibly
  Rng rng(19);
  const auto doc = random_doc(rng, 3, 10);

  Tape t;
  Graph g(t, m, nullptr);
  const auto a = forward(g, doc);
  const auto b = forward(g, doc);
  CHECK(values(a.probabilities) == values(b.probabilities));
  CHECK(values(a.document_vector) == values(b.document_vector));

  auto permuted = doc;
  std::swap(permuted.sentences[0], permuted.sentences[2]);
  if (permuted.sentences != doc.sentences) {
    const auto p = forward(g, permuted);
    double diff = 0;
    for (std::size_t k = 0; k < 6; ++k)
      diff = std::max(diff, std::abs(p.document_vector[k] - a.document_vector[k]));
    CHECK(diff > 1e-6);
  }

  const auto pattern = GatePattern::from_trace(a.trace);
  ForwardOptions frozen;
  frozen.frozen = &pattern;
  const auto f = forward(g, doc, frozen);
  CHECK(values(f.probabilities) == values(a.probabilities));
  frozen.literal_branching = true;
  const auto l = forward(g, doc, frozen);
  CHECK(values(l.probabilities) == values(a.probabilities));

  GatePattern short_pattern = pattern;
  short_pattern.z.pop_back();
  short_pattern.anchor.pop_back();
  frozen.frozen = &short_pattern;
  CHECK_THROWS_AS(forward(g, doc, frozen), UsageError);
}

TEST_CASE("gate equivalence over random documents and detector regimes") {
  Rng rng(20);
  for (int trial = 0; trial < 30; ++trial) {
    auto m = Model::create(small_config(trial % 2 ? Variant::base : Variant::attention),
                           100 + trial);
    for (double& v : m.params().at("detector.b_d").values())
      v = rng.uniform(-0.6, 0.6);
    const auto doc = random_doc(rng, 1 + rng.below(3), 10);
    Tape t;
    Graph g(t, m, nullptr);
    ForwardOptions literal;
    literal.literal_branching = true;
    CHECK(values(forward(g, doc).probabilities) ==
          values(forward(g, doc, literal).probabilities));
  }
}

TEST_CASE("nll loss") {
  Tape t;
  CHECK(nll_loss(t.constant({4}, {0.25, 0.25, 0.25, 0.25}), 2).item() ==
        doctest::Approx(std::log(4.0)));
  CHECK(nll_loss(t.constant({2}, {0.0, 1.0}), 1).item() == 0.0);
  CHECK_THROWS_AS(nll_loss(t.constant({2}, {0.5, 0.5}), 2), UsageError);

  ad::Tensor logits = ad::Tensor::vector({0.3, -1.2, 2.0}, true);
  Tape u;
  Var p = ad::softmax(u.leaf(logits));
  u.backward(nll_loss(p, 0));
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(logits.grad()[k] ==
          doctest::Approx(p[k] - (k == 0 ? 1.0 : 0.0)).epsilon(1e-12));
}

TEST_CASE("gradients flow into parameters touched by the document only") {
  auto m = Model::create(small_config(Variant::attention), 21);
  auto grads = m.make_gradients();
  Tape t;
  Graph g(t, m, &grads);
  const text::Document doc{1, {{4, 5, 2}, {6, 2}}};
  t.backward(nll_loss(forward(g, doc).probabilities, doc.label));
  const auto* emb = grads.find("embedding");
  REQUIRE(emb);
  std::vector<std::size_t> rows;
  for (const auto& [r, _] : emb->rows) rows.push_back(r);
  CHECK(rows == std::vector<std::size_t>{2, 4, 5, 6});
  double norm = 0;
  for (double v : grads.to_dense(m.params().index("attn.u_d"))) norm += v * v;
  CHECK(norm > 0);
}
