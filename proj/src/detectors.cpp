#include "mhs/detectors.hpp"

#include "mhs/error.hpp"
#include "mhs/text.hpp"

namespace mhs::detectors {

int static_detect(std::size_t token_id) {
  return token_id == text::kBoundaryId ? 1 : 0;
}

Source select_source(bool z_prev, bool p_prev) {
  return (z_prev || p_prev) ? Source::phrase_layer : Source::word_layer;
}

Activation dynamic_preactivation(const DetectorVars& params, ad::Var h_prev,
                                 ad::Var x, double slope) {
  if (!(slope > 0)) throw ConfigError("detector slope must be positive");
  ad::Var pre = ad::sum(ad::affine(params.W_d, h_prev, params.U_d, x,
                                   params.b_d));
  return {ad::hardsigm(pre, slope), pre.item()};
}

Scenario classify_scenario(const DetectorFlags& f) {
  const bool prev = f.z_prev || f.p_prev;
  if (f.p_cur) return prev ? Scenario::s6 : Scenario::s1;
  if (!f.z_cur) return prev ? Scenario::s2 : Scenario::s3;
  return prev ? Scenario::s5 : Scenario::s4;
}

}  // namespace mhs::detectors
