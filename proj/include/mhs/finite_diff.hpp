#pragma once

// Central-difference gradient verification.

#include <functional>
#include <span>
#include <vector>

#include "mhs/autodiff.hpp"

namespace mhs::ad {

struct FiniteDiffResult {
  // max over checked coordinates of |analytic - numeric| / max(1, |analytic|)
  double max_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  // Coordinates skipped because a +/-10h probe crosses a non-smooth point.
  std::size_t excluded = 0;
};

// Identifies the piecewise-smooth region a function is evaluated in, e.g.
// which hardsigm units are clamped and which gates fired. Coordinates whose
// perturbation changes the regime are excluded from the comparison.
using RegimeFn = std::function<std::vector<int>()>;

// Perturbs `x` in place (restoring it afterwards) and compares central
// differences of `eval` with `analytic`. h must lie in [1e-7, 1e-3].
FiniteDiffResult finite_diff_check(std::span<double> x,
                                   std::span<const double> analytic,
                                   const std::function<double()>& eval,
                                   double h, const RegimeFn& regime = {});

// Convenience form for a single-input graph: builds f on a fresh tape for
// the analytic gradient and re-evaluates it for the numeric one.
using GraphFn = std::function<Var(Tape&, Var)>;
using PointRegimeFn = std::function<std::vector<int>(std::span<const double>)>;
FiniteDiffResult finite_diff_check(const GraphFn& f, const Tensor& x, double h,
                                   const PointRegimeFn& regime_of = {});

// Regime of elementwise hardsigm inputs: -1 below, 0 inside, 1 above.
std::vector<int> hardsigm_regime(std::span<const double> x, double slope);

}  // namespace mhs::ad
