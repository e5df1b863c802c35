#pragma once

// The three-layer multiscale network: per-timestep scenario machine over the
// word and phrase layers, and two readouts (base: final sentence-layer state;
// attention: word-phrase attention, bidirectional sentence encoder and
// sentence attention).

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mhs/autodiff.hpp"
#include "mhs/detectors.hpp"
#include "mhs/lstm.hpp"
#include "mhs/params.hpp"
#include "mhs/text.hpp"

namespace mhs::net {

enum class Variant { base, attention };

const char* variant_name(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  Variant variant = Variant::attention;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 100;
  std::size_t hidden_dim = 50;
  std::size_t num_classes = 2;
  double slope = 1.0;
  // Random weights (and the embedding table when none is supplied) are drawn
  // from U(-init_scale, init_scale).
  double init_scale = 0.1;
  bool train_embeddings = true;
  // Output gate of the phrase layer reads h1_{t-1} instead of h1_t.
  bool literal_phrase_output_gate = false;

  bool operator==(const ModelConfig&) const = default;
};

class Model {
 public:
  // Weights U(-init_scale, init_scale), biases zero. `embeddings` (V x E) replaces the
  // random embedding table when given.
  static Model create(const ModelConfig& config, std::uint64_t seed,
                      const ad::Tensor* embeddings = nullptr);
  // Empty parameter tensors with the right shapes; values filled by loaders.
  static Model allocate(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Gradient buffers for this model (embedding rows stored sparsely).
  Gradients make_gradients() const;

 private:
  ModelConfig config_;
  ParamSet params_;
};

struct BoundLayers {
  lstm::LstmVars word, phrase, sentence, sent_fwd, sent_bwd;
  detectors::DetectorVars detector;
  ad::Var attn_W_s, attn_b_s, attn_u_s;
  ad::Var attn_W_d, attn_b_d, attn_u_d;
  ad::Var cls_W, cls_b;
};

// Binds a model's parameters as leaves of one tape. Gradients go to `sink`
// (may be null for inference-only passes).
class Graph {
 public:
  Graph(ad::Tape& tape, const Model& model, Gradients* sink);

  ad::Tape& tape() { return tape_; }
  const Model& model() const { return model_; }
  const BoundLayers& layers() const { return layers_; }
  ad::Var embed(std::size_t token_id);

 private:
  ad::Var bind(std::string_view name);
  lstm::LstmVars bind_lstm(const std::string& prefix);

  ad::Tape& tape_;
  const Model& model_;
  Gradients* sink_;
  std::size_t embedding_index_;
  BoundLayers layers_;
};

struct LayerStates {
  lstm::LstmState word, phrase, sentence;
  bool z_prev = false;
  bool p_prev = false;
};

LayerStates initial_states(Graph& g);

struct TraceRecord {
  std::size_t token_id = 0;
  double preactivation = 0.0;
  double z_tilde = 0.0;
  int z = 0;
  int p = 0;
  detectors::Scenario scenario = detectors::Scenario::s3;
};

using BoundaryTrace = std::vector<TraceRecord>;

// A recorded binarization pattern. When supplied, z at step t is forced to
// z[t] and the gate becomes z[t] + (z~ - anchor[t]) so finite differences see
// the straight-through path with the pattern held fixed.
struct GatePattern {
  std::vector<int> z;
  std::vector<double> anchor;

  static GatePattern from_trace(const BoundaryTrace& trace);
};

struct StepOptions {
  bool update_sentence_layer = true;
  // Explicit branch/copy per scenario instead of the gated mixture. Forward
  // values are identical; there is no gradient path into the detector.
  bool literal_branching = false;
  std::optional<std::pair<int, double>> frozen;  // (z, anchor)
};

struct StepResult {
  LayerStates states;
  TraceRecord record;
  ad::Var h_concat;  // [h1_t, h2_t]
};

StepResult mhs_step(Graph& g, const LayerStates& states, ad::Var x,
                    std::size_t token_id, const StepOptions& options);

struct ForwardOptions {
  const GatePattern* frozen = nullptr;
  bool literal_branching = false;
};

struct ForwardResult {
  ad::Var document_vector;
  ad::Var probabilities;
  BoundaryTrace trace;
  std::vector<ad::Var> word_attention;  // alpha per sentence
  ad::Var sentence_attention;           // beta (attention variant only)
};

ForwardResult forward_base(Graph& g, const text::Document& doc,
                           const ForwardOptions& options = {});
ForwardResult forward_attention(Graph& g, const text::Document& doc,
                                const ForwardOptions& options = {});
// Dispatches on the model variant.
ForwardResult forward(Graph& g, const text::Document& doc,
                      const ForwardOptions& options = {});

struct AttentionResult {
  ad::Var pooled;
  ad::Var weights;
};

// u_t = tanh(W_s h_t + b_s); alpha = softmax(u_t . u_s); s = sum alpha_t h_t.
AttentionResult word_phrase_attention(const BoundLayers& p,
                                      std::span<const ad::Var> h_concat);
// Same form with the sentence-level projection and context vector.
AttentionResult sentence_attention(const BoundLayers& p,
                                   std::span<const ad::Var> annotations);

// -log(max(p[label], 1e-12)).
ad::Var nll_loss(ad::Var probabilities, std::size_t label);

}  // namespace mhs::net
