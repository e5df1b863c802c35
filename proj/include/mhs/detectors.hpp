#pragma once

// Static and dynamic boundary detectors and the six-way update scenario.

#include <cstddef>

#include "mhs/autodiff.hpp"

namespace mhs::detectors {

struct DetectorVars {
  ad::Var W_d;  // D x D, applied to the source hidden state
  ad::Var U_d;  // D x E, applied to the token embedding
  ad::Var b_d;  // D
};

// Which hidden state feeds the dynamic detector at the current step.
enum class Source { word_layer, phrase_layer };

struct DetectorFlags {
  bool z_prev = false;
  bool p_prev = false;
  bool z_cur = false;
  bool p_cur = false;
};

enum class Scenario : int { s1 = 1, s2, s3, s4, s5, s6 };

// 1 iff the token is the reserved sentence-boundary token. Needs no training.
int static_detect(std::size_t token_id);

// The phrase-layer state is the source right after a boundary (z or p fired
// at t-1); otherwise the word-layer state.
Source select_source(bool z_prev, bool p_prev);

struct Activation {
  ad::Var z_tilde;       // hardsigm of the summed pre-activation, in [0, 1]
  double preactivation;  // sum(W_d h + U_d x + b_d)
};

// z~ = hardsigm(sum(W_d h_prev + U_d x + b_d), slope).
Activation dynamic_preactivation(const DetectorVars& params, ad::Var h_prev,
                                 ad::Var x, double slope);

// Strict threshold: z~ > 0.5.
inline int binarize(double z_tilde) { return z_tilde > 0.5 ? 1 : 0; }

Scenario classify_scenario(const DetectorFlags& flags);

}  // namespace mhs::detectors
