#include "mhs/finite_diff.hpp"

#include <algorithm>
#include <cmath>

#include "mhs/error.hpp"

namespace mhs::ad {

FiniteDiffResult finite_diff_check(std::span<double> x,
                                   std::span<const double> analytic,
                                   const std::function<double()>& eval,
                                   double h, const RegimeFn& regime) {
  if (!(h >= 1e-7 && h <= 1e-3))
    throw UsageError("finite difference step must lie in [1e-7, 1e-3]");
  if (analytic.size() != x.size())
    throw DimensionError("analytic gradient has " +
                         std::to_string(analytic.size()) + " entries for " +
                         std::to_string(x.size()) + " coordinates");
  FiniteDiffResult result;
  const std::vector<int> base = regime ? regime() : std::vector<int>{};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    if (regime) {
      x[i] = saved + 10 * h;
      const bool up = regime() != base;
      x[i] = saved - 10 * h;
      const bool down = regime() != base;
      x[i] = saved;
      if (up || down) {
        ++result.excluded;
        continue;
      }
    }
    x[i] = saved + h;
    const double plus = eval();
    x[i] = saved - h;
    const double minus = eval();
    x[i] = saved;
    const double numeric = (plus - minus) / (2 * h);
    const double err =
        std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i]));
    ++result.checked;
    if (result.checked == 1 || err > result.max_error) {
      result.max_error = err;
      result.worst_index = i;
    }
  }
  return result;
}

FiniteDiffResult finite_diff_check(const GraphFn& f, const Tensor& x,
                                   double h, const PointRegimeFn& regime_of) {
  Tensor work(x.shape(), std::vector<double>(x.values().begin(),
                                             x.values().end()),
              true);
  std::vector<double> analytic;
  {
    Tape tape;
    Var loss = f(tape, tape.leaf(work));
    tape.backward(loss);
    analytic.assign(work.grad().begin(), work.grad().end());
  }
  auto eval = [&] {
    Tensor probe(work.shape(),
                 std::vector<double>(work.values().begin(),
                                     work.values().end()),
                 false);
    Tape tape;
    return f(tape, tape.leaf(probe)).item();
  };
  RegimeFn regime;
  if (regime_of) regime = [&] { return regime_of(work.values()); };
  return finite_diff_check(work.values(), analytic, eval, h, regime);
}

std::vector<int> hardsigm_regime(std::span<const double> x, double slope) {
  std::vector<int> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double pre = (slope * x[i] + 1.0) / 2.0;
    out[i] = pre <= 0.0 ? -1 : (pre >= 1.0 ? 1 : 0);
  }
  return out;
}

}  // namespace mhs::ad
