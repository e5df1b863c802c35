#include "mhs/lstm.hpp"

#include "mhs/error.hpp"

namespace mhs::lstm {

void add_params(ParamSet& params, const std::string& prefix,
                std::size_t hidden, std::size_t recurrent, std::size_t input) {
  for (const char* g : kGates) params.add(prefix + ".W_" + g, {hidden, recurrent});
  for (const char* g : kGates) params.add(prefix + ".U_" + g, {hidden, input});
  for (const char* g : kGates) params.add(prefix + ".b_" + g, {hidden});
}

namespace {

ad::Var gate_pre(const LstmVars& p, int g, ad::Var h, ad::Var x) {
  return ad::affine(p.W[g], h, p.U[g], x, p.b[g]);
}

}  // namespace

LstmState step(const LstmVars& p, ad::Var recurrent_h, ad::Var input,
               ad::Var c_prev, ad::Var output_gate_input) {
  if (c_prev.size() != p.b[0].size())
    throw DimensionError("lstm step: cell state of size " +
                         std::to_string(c_prev.size()) + " for hidden width " +
                         std::to_string(p.b[0].size()));
  ad::Var i = ad::sigmoid(gate_pre(p, 0, recurrent_h, input));
  ad::Var f = ad::sigmoid(gate_pre(p, 1, recurrent_h, input));
  ad::Var cand = ad::tanh(gate_pre(p, 2, recurrent_h, input));
  ad::Var o = ad::sigmoid(gate_pre(
      p, 3, recurrent_h, output_gate_input.valid() ? output_gate_input : input));
  ad::Var c = ad::add(ad::mul(i, cand), ad::mul(f, c_prev));
  return {ad::mul(o, ad::tanh(c)), c};
}

LstmState reinit_step(const LstmVars& p, ad::Var phrase_h, ad::Var input) {
  ad::Var i = ad::sigmoid(gate_pre(p, 0, phrase_h, input));
  // The forget gate has no role once the carry term is dropped.
  ad::Var cand = ad::tanh(gate_pre(p, 2, phrase_h, input));
  ad::Var o = ad::sigmoid(gate_pre(p, 3, phrase_h, input));
  ad::Var c = ad::mul(i, cand);
  return {ad::mul(o, ad::tanh(c)), c};
}

std::vector<ad::Var> bilstm_encode(ad::Tape& tape, const LstmVars& fwd,
                                   const LstmVars& bwd,
                                   std::span<const ad::Var> inputs) {
  if (inputs.empty()) throw UsageError("bilstm_encode: empty input sequence");
  const std::size_t n = inputs.size();
  std::vector<ad::Var> forward(n), backward(n);
  LstmState s{tape.zeros(fwd.b[0].size()), tape.zeros(fwd.b[0].size())};
  for (std::size_t t = 0; t < n; ++t) {
    s = step(fwd, s.h, inputs[t], s.c);
    forward[t] = s.h;
  }
  s = {tape.zeros(bwd.b[0].size()), tape.zeros(bwd.b[0].size())};
  for (std::size_t t = n; t-- > 0;) {
    s = step(bwd, s.h, inputs[t], s.c);
    backward[t] = s.h;
  }
  std::vector<ad::Var> out(n);
  for (std::size_t t = 0; t < n; ++t) out[t] = ad::concat(backward[t], forward[t]);
  return out;
}

}  // namespace mhs::lstm
