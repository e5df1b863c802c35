#include "mhs/network.hpp"

#include <algorithm>

#include "mhs/error.hpp"
#include "mhs/random.hpp"

namespace mhs::net {

namespace {

using detectors::Scenario;

const std::string kEmbedding = "embedding";

bool is_bias(const std::string& name) {
  const auto dot = name.rfind('.');
  return name.compare(dot == std::string::npos ? 0 : dot + 1, 2, "b_") == 0;
}

void check_config(const ModelConfig& c) {
  if (c.vocab_size < 3)
    throw ConfigError("vocabulary must contain the 3 reserved tokens");
  if (c.embed_dim == 0 || c.hidden_dim == 0)
    throw ConfigError("layer widths must be positive");
  if (c.num_classes < 2) throw ConfigError("need at least 2 classes");
  if (!(c.slope > 0)) throw ConfigError("slope must be positive");
  if (!(c.init_scale >= 0)) throw ConfigError("init_scale must be >= 0");
}

}  // namespace

const char* variant_name(Variant v) {
  return v == Variant::base ? "base" : "attention";
}

Variant parse_variant(std::string_view name) {
  if (name == "base") return Variant::base;
  if (name == "attention") return Variant::attention;
  throw ConfigError("unknown model variant '" + std::string(name) + "'");
}

// ----------------------------------------------------------------- Model

Model Model::allocate(const ModelConfig& config) {
  check_config(config);
  Model m;
  m.config_ = config;
  const std::size_t V = config.vocab_size, E = config.embed_dim,
                    D = config.hidden_dim, C = config.num_classes;
  auto& p = m.params_;
  p.add(kEmbedding, {V, E}, config.train_embeddings);
  p.add("detector.W_d", {D, D});
  p.add("detector.U_d", {D, E});
  p.add("detector.b_d", {D});
  lstm::add_params(p, "word", D, D, E);
  lstm::add_params(p, "phrase", D, D, D);
  if (config.variant == Variant::base) {
    lstm::add_params(p, "sentence", D, D, D);
    p.add("classifier.W_c", {C, D});
  } else {
    lstm::add_params(p, "sent_fwd", D, D, 2 * D);
    lstm::add_params(p, "sent_bwd", D, D, 2 * D);
    p.add("attn.W_s", {2 * D, 2 * D});
    p.add("attn.b_s", {2 * D});
    p.add("attn.u_s", {2 * D});
    p.add("attn.W_d", {2 * D, 2 * D});
    p.add("attn.b_d", {2 * D});
    p.add("attn.u_d", {2 * D});
    p.add("classifier.W_c", {C, 2 * D});
  }
  p.add("classifier.b_c", {C});
  return m;
}

Model Model::create(const ModelConfig& config, std::uint64_t seed,
                    const ad::Tensor* embeddings) {
  Model m = allocate(config);
  auto& p = m.params_;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (is_bias(p.name(i))) continue;
    Rng rng(derive_seed(seed, i));
    for (auto& v : p.tensor(i).values()) v = rng.uniform(-config.init_scale, config.init_scale);
  }
  auto table = p.at(kEmbedding).values();
  if (embeddings) {
    if (embeddings->shape() != p.at(kEmbedding).shape())
      throw ConfigError("embedding table " +
                        ad::shape_string(embeddings->shape()) +
                        " does not match the model " +
                        ad::shape_string(p.at(kEmbedding).shape()));
    std::copy(embeddings->values().begin(), embeddings->values().end(),
              table.begin());
  }
  std::fill_n(table.begin() + text::kPadId * config.embed_dim,
              config.embed_dim, 0.0);
  return m;
}

Gradients Model::make_gradients() const {
  const std::string sparse[] = {kEmbedding};
  return Gradients::for_params(params_, sparse);
}

// ----------------------------------------------------------------- Graph

Graph::Graph(ad::Tape& tape, const Model& model, Gradients* sink)
    : tape_(tape),
      model_(model),
      sink_(sink),
      embedding_index_(model.params().index(kEmbedding)) {
  auto& L = layers_;
  L.detector = {bind("detector.W_d"), bind("detector.U_d"),
                bind("detector.b_d")};
  L.word = bind_lstm("word");
  L.phrase = bind_lstm("phrase");
  if (model.config().variant == Variant::base) {
    L.sentence = bind_lstm("sentence");
  } else {
    L.sent_fwd = bind_lstm("sent_fwd");
    L.sent_bwd = bind_lstm("sent_bwd");
    L.attn_W_s = bind("attn.W_s");
    L.attn_b_s = bind("attn.b_s");
    L.attn_u_s = bind("attn.u_s");
    L.attn_W_d = bind("attn.W_d");
    L.attn_b_d = bind("attn.b_d");
    L.attn_u_d = bind("attn.u_d");
  }
  L.cls_W = bind("classifier.W_c");
  L.cls_b = bind("classifier.b_c");
}

ad::Var Graph::bind(std::string_view name) {
  const std::size_t i = model_.params().index(name);
  const ad::Tensor& t = model_.params().tensor(i);
  if (sink_ && sink_->entry(i).present)
    return tape_.leaf(t, sink_->dense(i));
  return tape_.view(t.values(), t.shape(), nullptr);
}

lstm::LstmVars Graph::bind_lstm(const std::string& prefix) {
  lstm::LstmVars v;
  for (int g = 0; g < 4; ++g) {
    const std::string gate = lstm::kGates[g];
    v.W[g] = bind(prefix + ".W_" + gate);
    v.U[g] = bind(prefix + ".U_" + gate);
    v.b[g] = bind(prefix + ".b_" + gate);
  }
  return v;
}

ad::Var Graph::embed(std::size_t token_id) {
  const ad::Tensor& table = model_.params().tensor(embedding_index_);
  const std::size_t E = table.shape()[1];
  if (token_id >= table.shape()[0])
    throw UsageError("token id " + std::to_string(token_id) +
                     " outside the vocabulary");
  auto row = table.values().subspan(token_id * E, E);
  double* grad = nullptr;
  if (sink_ && sink_->entry(embedding_index_).present)
    grad = sink_->row(embedding_index_, token_id).data();
  return tape_.view(row, {E}, grad);
}

// ---------------------------------------------------------- step machine

LayerStates initial_states(Graph& g) {
  const std::size_t D = g.model().config().hidden_dim;
  auto& t = g.tape();
  LayerStates s;
  s.word = {t.zeros(D), t.zeros(D)};
  s.phrase = {t.zeros(D), t.zeros(D)};
  s.sentence = {t.zeros(D), t.zeros(D)};
  return s;
}

GatePattern GatePattern::from_trace(const BoundaryTrace& trace) {
  GatePattern g;
  for (const auto& r : trace) {
    g.z.push_back(r.z);
    g.anchor.push_back(r.z_tilde);
  }
  return g;
}

StepResult mhs_step(Graph& g, const LayerStates& s, ad::Var x,
                    std::size_t token_id, const StepOptions& opt) {
  const auto& L = g.layers();
  const auto& cfg = g.model().config();
  if (x.size() != cfg.embed_dim)
    throw DimensionError("token input of width " + std::to_string(x.size()) +
                         " for embedding width " +
                         std::to_string(cfg.embed_dim));

  const int p_cur = detectors::static_detect(token_id);
  const bool after_boundary = s.z_prev || s.p_prev;
  const ad::Var source_h =
      detectors::select_source(s.z_prev, s.p_prev) ==
              detectors::Source::phrase_layer
          ? s.phrase.h
          : s.word.h;
  const auto act =
      detectors::dynamic_preactivation(L.detector, source_h, x, cfg.slope);
  const double z_tilde = act.z_tilde.item();

  int z_cur;
  ad::Var gate;
  if (opt.frozen) {
    z_cur = opt.frozen->first;
    gate = ad::step_frozen(act.z_tilde, opt.frozen->first, opt.frozen->second);
  } else {
    z_cur = detectors::binarize(z_tilde);
    gate = ad::step(act.z_tilde);
  }

  StepResult out;
  LayerStates& n = out.states;
  n.word = after_boundary ? lstm::reinit_step(L.word, s.phrase.h, x)
                          : lstm::step(L.word, s.word.h, x, s.word.c);

  const ad::Var o_input =
      cfg.literal_phrase_output_gate ? s.word.h : ad::Var{};
  auto phrase_update = [&] {
    return lstm::step(L.phrase, s.phrase.h, n.word.h, s.phrase.c, o_input);
  };
  if (p_cur) {
    n.phrase = phrase_update();
  } else if (opt.literal_branching) {
    n.phrase = z_cur ? phrase_update() : s.phrase;
  } else {
    const auto upd = phrase_update();
    n.phrase = {ad::mix(gate, upd.h, s.phrase.h),
                ad::mix(gate, upd.c, s.phrase.c)};
  }

  n.sentence = s.sentence;
  if (opt.update_sentence_layer && p_cur)
    n.sentence =
        lstm::step(L.sentence, s.sentence.h, n.phrase.h, s.sentence.c);

  n.z_prev = z_cur != 0;
  n.p_prev = p_cur != 0;

  out.record = {token_id,
                act.preactivation,
                z_tilde,
                z_cur,
                p_cur,
                detectors::classify_scenario(
                    {s.z_prev, s.p_prev, z_cur != 0, p_cur != 0})};
  out.h_concat = ad::concat(n.word.h, n.phrase.h);
  return out;
}

namespace {

void require_nonempty(const text::Document& doc) {
  if (doc.sentences.empty() || doc.token_count() == 0)
    throw UsageError("forward pass over an empty document");
}

StepOptions step_options(const ForwardOptions& fo, std::size_t t,
                         bool sentence_layer) {
  StepOptions so;
  so.update_sentence_layer = sentence_layer;
  so.literal_branching = fo.literal_branching;
  if (fo.frozen) {
    if (t >= fo.frozen->z.size())
      throw UsageError("frozen gate pattern shorter than the document");
    so.frozen = std::make_pair(fo.frozen->z[t], fo.frozen->anchor[t]);
  }
  return so;
}

}  // namespace

ForwardResult forward_base(Graph& g, const text::Document& doc,
                           const ForwardOptions& options) {
  require_nonempty(doc);
  if (g.model().config().variant != Variant::base)
    throw UsageError("forward_base needs a base-variant model");
  ForwardResult r;
  LayerStates s = initial_states(g);
  std::size_t t = 0;
  for (const auto& sentence : doc.sentences)
    for (std::size_t token : sentence) {
      auto step = mhs_step(g, s, g.embed(token), token,
                           step_options(options, t++, true));
      s = step.states;
      r.trace.push_back(step.record);
    }
  const auto& L = g.layers();
  r.document_vector = s.sentence.h;
  r.probabilities =
      ad::softmax(ad::linear(L.cls_W, r.document_vector, L.cls_b));
  return r;
}

ForwardResult forward_attention(Graph& g, const text::Document& doc,
                                const ForwardOptions& options) {
  require_nonempty(doc);
  if (g.model().config().variant != Variant::attention)
    throw UsageError("forward_attention needs an attention-variant model");
  const auto& L = g.layers();
  ForwardResult r;
  LayerStates s = initial_states(g);
  std::vector<ad::Var> sentence_vectors;
  std::size_t t = 0;
  for (const auto& sentence : doc.sentences) {
    std::vector<ad::Var> h_concat;
    for (std::size_t token : sentence) {
      auto step = mhs_step(g, s, g.embed(token), token,
                           step_options(options, t++, false));
      s = step.states;
      r.trace.push_back(step.record);
      h_concat.push_back(step.h_concat);
    }
    auto pooled = word_phrase_attention(L, h_concat);
    sentence_vectors.push_back(pooled.pooled);
    r.word_attention.push_back(pooled.weights);
  }
  const auto annotations =
      lstm::bilstm_encode(g.tape(), L.sent_fwd, L.sent_bwd, sentence_vectors);
  auto doc_attn = sentence_attention(L, annotations);
  r.document_vector = doc_attn.pooled;
  r.sentence_attention = doc_attn.weights;
  r.probabilities =
      ad::softmax(ad::linear(L.cls_W, r.document_vector, L.cls_b));
  return r;
}

ForwardResult forward(Graph& g, const text::Document& doc,
                      const ForwardOptions& options) {
  return g.model().config().variant == Variant::base
             ? forward_base(g, doc, options)
             : forward_attention(g, doc, options);
}

namespace {

AttentionResult attend(ad::Var W, ad::Var b, ad::Var context,
                       std::span<const ad::Var> items) {
  if (items.empty()) throw UsageError("attention over an empty sequence");
  std::vector<ad::Var> scores;
  scores.reserve(items.size());
  for (const auto& h : items)
    scores.push_back(ad::dot(ad::tanh(ad::linear(W, h, b)), context));
  ad::Var weights = ad::softmax(ad::concat(scores));
  return {ad::weighted_sum(weights, items), weights};
}

}  // namespace

AttentionResult word_phrase_attention(const BoundLayers& p,
                                      std::span<const ad::Var> h_concat) {
  return attend(p.attn_W_s, p.attn_b_s, p.attn_u_s, h_concat);
}

AttentionResult sentence_attention(const BoundLayers& p,
                                   std::span<const ad::Var> annotations) {
  return attend(p.attn_W_d, p.attn_b_d, p.attn_u_d, annotations);
}

ad::Var nll_loss(ad::Var probabilities, std::size_t label) {
  if (label >= probabilities.size())
    throw UsageError("label " + std::to_string(label) + " out of range for " +
                     std::to_string(probabilities.size()) + " classes");
  return ad::neg_log_pick(probabilities, label, 1e-12);
}

}  // namespace mhs::net
