#pragma once

// LSTM step functions shared by the word, phrase and sentence layers.

#include <span>
#include <string>
#include <vector>

#include "mhs/autodiff.hpp"
#include "mhs/params.hpp"

namespace mhs::lstm {

// Gate order in every parameter list below: input, forget, candidate, output.
inline constexpr const char* kGates[4] = {"i", "f", "c", "o"};

// Registers `<prefix>.W_*` (hidden x recurrent), `<prefix>.U_*`
// (hidden x input) and `<prefix>.b_*` (hidden) in `params`.
void add_params(ParamSet& params, const std::string& prefix,
                std::size_t hidden, std::size_t recurrent, std::size_t input);

struct LstmVars {
  ad::Var W[4];
  ad::Var U[4];
  ad::Var b[4];
};

struct LstmState {
  ad::Var h;
  ad::Var c;
};

// i, f, o = sigma(W h + U x + b); c~ = tanh(...); c = i*c~ + f*c_prev;
// h = o * tanh(c). When `output_gate_input` is given the output gate reads it
// instead of `input`.
LstmState step(const LstmVars& p, ad::Var recurrent_h, ad::Var input,
               ad::Var c_prev, ad::Var output_gate_input = {});

// Re-initialization after a boundary: gates read the phrase-layer state and
// the cell drops the forget-carry term, c = i * c~.
LstmState reinit_step(const LstmVars& p, ad::Var phrase_h, ad::Var input);

// Left-to-right and right-to-left passes from zero states; output i is
// [backward_i, forward_i]. fwd and bwd must share the hidden width.
std::vector<ad::Var> bilstm_encode(ad::Tape& tape, const LstmVars& fwd,
                                   const LstmVars& bwd,
                                   std::span<const ad::Var> inputs);

}  // namespace mhs::lstm
