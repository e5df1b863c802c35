#include "mhs/gradcheck.hpp"

#include <chrono>
#include <functional>
#include <iomanip>
#include <ostream>

#include "mhs/autodiff.hpp"
#include "mhs/detectors.hpp"
#include "mhs/error.hpp"
#include "mhs/finite_diff.hpp"
#include "mhs/lstm.hpp"
#include "mhs/network.hpp"
#include "mhs/random.hpp"

namespace mhs::gradcheck {

namespace {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

constexpr double kStep = 1e-6;

struct Input {
  std::string name;
  Tensor value;
};

using Fn = std::function<Var(Tape&, const std::vector<Var>&)>;
using Regime = std::function<std::vector<int>(const std::vector<Input>&)>;

Tensor random_tensor(Rng& rng, const Shape& shape, double lo = -1.0,
                     double hi = 1.0) {
  std::vector<double> v(ad::shape_size(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(shape, std::move(v));
}

Var constant_of(Tape& tape, const Tensor& t) {
  return tape.view(t.values(), t.shape(), nullptr);
}

// Projects `out` onto fixed random weights so every output coordinate
// contributes to the scalar that is differentiated.
Var project(Tape& tape, Var out, const std::vector<double>& weights) {
  return ad::sum(ad::mul(out, tape.constant(out.shape(), weights)));
}

// Checks d(project(fn(inputs)))/d(input) for every input against central
// differences.
Row check(const std::string& component, double threshold, Rng& rng,
          std::vector<Input> inputs, const Fn& fn, const Regime& regime = {}) {
  std::vector<double> weights;
  {
    Tape probe;
    std::vector<Var> vars;
    for (const auto& in : inputs) vars.push_back(constant_of(probe, in.value));
    const Var out = fn(probe, vars);
    for (std::size_t i = 0; i < out.size(); ++i)
      weights.push_back(rng.uniform(-1.0, 1.0));
  }
  auto loss = [&](Tape& tape, const std::vector<Var>& vars) {
    return project(tape, fn(tape, vars), weights);
  };

  std::vector<std::vector<double>> analytic;
  {
    std::vector<Tensor> leaves;
    for (const auto& in : inputs)
      leaves.emplace_back(in.value.shape(),
                          std::vector<double>(in.value.values().begin(),
                                              in.value.values().end()),
                          true);
    Tape tape;
    std::vector<Var> vars;
    for (auto& t : leaves) vars.push_back(tape.leaf(t));
    tape.backward(loss(tape, vars));
    for (auto& t : leaves)
      analytic.emplace_back(t.grad().begin(), t.grad().end());
  }

  auto eval = [&] {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& in : inputs) vars.push_back(constant_of(tape, in.value));
    return loss(tape, vars).item();
  };
  ad::RegimeFn regime_fn;
  if (regime) regime_fn = [&] { return regime(inputs); };

  Row row{component, 0.0, threshold, 0, 0, ""};
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto r = ad::finite_diff_check(inputs[k].value.values(), analytic[k],
                                         eval, kStep, regime_fn);
    row.checked += r.checked;
    row.excluded += r.excluded;
    if (r.checked > 0 && (row.worst.empty() || r.max_error > row.max_error)) {
      row.max_error = r.max_error;
      row.worst = inputs[k].name + "[" + std::to_string(r.worst_index) + "]";
    }
  }
  return row;
}

std::vector<Input> lstm_inputs(Rng& rng, const std::string& prefix,
                               std::size_t hidden, std::size_t recurrent,
                               std::size_t input) {
  std::vector<Input> out;
  for (const char* g : lstm::kGates) {
    out.push_back({prefix + ".W_" + g, random_tensor(rng, {hidden, recurrent})});
    out.push_back({prefix + ".U_" + g, random_tensor(rng, {hidden, input})});
    out.push_back({prefix + ".b_" + g, random_tensor(rng, {hidden})});
  }
  return out;
}

lstm::LstmVars lstm_vars(const std::vector<Var>& v, std::size_t offset) {
  lstm::LstmVars p;
  for (std::size_t g = 0; g < 4; ++g) {
    p.W[g] = v[offset + 3 * g];
    p.U[g] = v[offset + 3 * g + 1];
    p.b[g] = v[offset + 3 * g + 2];
  }
  return p;
}

void primitive_rows(Rng& rng, std::vector<Row>& rows) {
  const double T = kPrimitiveThreshold;
  auto rt = [&](const Shape& s) { return random_tensor(rng, s); };

  rows.push_back(check("matmul", T, rng, {{"a", rt({3, 4})}, {"b", rt({4, 2})}},
                       [](Tape&, auto& v) { return ad::matmul(v[0], v[1]); }));
  rows.push_back(check("matmul (vector)", T, rng,
                       {{"a", rt({3, 4})}, {"x", rt({4})}},
                       [](Tape&, auto& v) { return ad::matmul(v[0], v[1]); }));
  rows.push_back(check(
      "affine", T, rng,
      {{"W", rt({3, 4})}, {"x", rt({4})}, {"U", rt({3, 2})}, {"y", rt({2})},
       {"b", rt({3})}},
      [](Tape&, auto& v) { return ad::affine(v[0], v[1], v[2], v[3], v[4]); }));
  rows.push_back(check("add", T, rng, {{"a", rt({4})}, {"b", rt({4})}},
                       [](Tape&, auto& v) { return ad::add(v[0], v[1]); }));
  rows.push_back(check("sub", T, rng, {{"a", rt({4})}, {"b", rt({4})}},
                       [](Tape&, auto& v) { return ad::sub(v[0], v[1]); }));
  rows.push_back(check("mul", T, rng, {{"a", rt({4})}, {"b", rt({4})}},
                       [](Tape&, auto& v) { return ad::mul(v[0], v[1]); }));
  rows.push_back(check("scale", T, rng, {{"s", rt({1})}, {"v", rt({4})}},
                       [](Tape&, auto& v) { return ad::scale(v[0], v[1]); }));
  rows.push_back(check(
      "mix", T, rng, {{"g", rt({1})}, {"a", rt({4})}, {"b", rt({4})}},
      [](Tape&, auto& v) { return ad::mix(v[0], v[1], v[2]); }));
  rows.push_back(check("sigmoid", T, rng, {{"x", random_tensor(rng, {5}, -3, 3)}},
                       [](Tape&, auto& v) { return ad::sigmoid(v[0]); }));
  rows.push_back(check("tanh", T, rng, {{"x", random_tensor(rng, {5}, -2, 2)}},
                       [](Tape&, auto& v) { return ad::tanh(v[0]); }));
  for (double slope : {1.0, 3.0}) {
    rows.push_back(check(
        "hardsigm (a=" + std::to_string(static_cast<int>(slope)) + ")", T, rng,
        {{"x", random_tensor(rng, {8}, -0.8, 0.8)}},
        [slope](Tape&, auto& v) { return ad::hardsigm(v[0], slope); },
        [slope](const std::vector<Input>& in) {
          return ad::hardsigm_regime(in[0].value.values(), slope);
        }));
  }
  rows.push_back(check(
      "step_frozen", T, rng, {{"x", random_tensor(rng, {1}, 0.0, 1.0)}},
      [](Tape&, auto& v) { return ad::step_frozen(v[0], 1.0, 0.7); }));

  // The straight-through step is compared against its frozen surrogate.
  {
    Row row{"step (straight-through)", 0.0, T, 0, 0, ""};
    for (int k = 0; k < 4; ++k) {
      Tensor x = random_tensor(rng, {1}, 0.05, 0.95);
      const double anchor = x.values()[0];
      const double z = detectors::binarize(anchor);
      const double w = rng.uniform(-1.0, 1.0);
      Tensor leaf(x.shape(), {anchor}, true);
      {
        Tape tape;
        tape.backward(ad::scale(ad::step(tape.leaf(leaf)), tape.scalar(w)));
      }
      const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
      auto eval = [&] {
        Tape tape;
        return ad::scale(ad::step_frozen(constant_of(tape, x), z, anchor),
                         tape.scalar(w))
            .item();
      };
      const auto r = ad::finite_diff_check(x.values(), analytic, eval, kStep);
      row.checked += r.checked;
      if (row.worst.empty() || r.max_error > row.max_error) {
        row.max_error = r.max_error;
        row.worst = "x" + std::to_string(k) + "[0]";
      }
    }
    rows.push_back(row);
  }

  rows.push_back(check("sum", T, rng, {{"x", rt({5})}},
                       [](Tape&, auto& v) { return ad::sum(v[0]); }));
  rows.push_back(check("dot", T, rng, {{"a", rt({5})}, {"b", rt({5})}},
                       [](Tape&, auto& v) { return ad::dot(v[0], v[1]); }));
  rows.push_back(check(
      "concat", T, rng, {{"a", rt({2})}, {"b", rt({3})}, {"c", rt({1})}},
      [](Tape&, auto& v) { return ad::concat(std::span<const Var>(v)); }));
  rows.push_back(check("softmax", T, rng, {{"x", random_tensor(rng, {5}, -2, 2)}},
                       [](Tape&, auto& v) { return ad::softmax(v[0]); }));
  rows.push_back(check(
      "weighted_sum", T, rng,
      {{"w", rt({3})}, {"h0", rt({4})}, {"h1", rt({4})}, {"h2", rt({4})}},
      [](Tape&, auto& v) {
        return ad::weighted_sum(v[0], std::span<const Var>(v).subspan(1));
      }));
  rows.push_back(check(
      "neg_log_pick", T, rng, {{"p", random_tensor(rng, {4}, 0.2, 1.0)}},
      [](Tape&, auto& v) { return ad::neg_log_pick(v[0], 2); }));
}

void component_rows(Rng& rng, std::vector<Row>& rows) {
  const double T = kComponentThreshold;
  const std::size_t D = 3, E = 4;

  {
    auto in = lstm_inputs(rng, "lstm", D, D, E);
    in.push_back({"h_prev", random_tensor(rng, {D})});
    in.push_back({"x", random_tensor(rng, {E})});
    in.push_back({"c_prev", random_tensor(rng, {D})});
    rows.push_back(check("lstm step", T, rng, in, [](Tape&, auto& v) {
      const auto s = lstm::step(lstm_vars(v, 0), v[12], v[13], v[14]);
      return ad::concat(s.h, s.c);
    }));
  }
  {
    auto in = lstm_inputs(rng, "lstm", D, D, E);
    in.push_back({"h_prev", random_tensor(rng, {D})});
    in.push_back({"x", random_tensor(rng, {E})});
    in.push_back({"c_prev", random_tensor(rng, {D})});
    in.push_back({"o_input", random_tensor(rng, {E})});
    rows.push_back(check("lstm step (separate o input)", T, rng, in,
                         [](Tape&, auto& v) {
                           const auto s = lstm::step(lstm_vars(v, 0), v[12],
                                                     v[13], v[14], v[15]);
                           return ad::concat(s.h, s.c);
                         }));
  }
  {
    auto in = lstm_inputs(rng, "word", D, D, E);
    in.push_back({"phrase_h", random_tensor(rng, {D})});
    in.push_back({"x", random_tensor(rng, {E})});
    rows.push_back(check("reinit step", T, rng, in, [](Tape&, auto& v) {
      const auto s = lstm::reinit_step(lstm_vars(v, 0), v[12], v[13]);
      return ad::concat(s.h, s.c);
    }));
  }
  {
    auto in = lstm_inputs(rng, "fwd", D, D, 2 * D);
    auto bwd = lstm_inputs(rng, "bwd", D, D, 2 * D);
    in.insert(in.end(), bwd.begin(), bwd.end());
    for (int k = 0; k < 3; ++k)
      in.push_back({"s" + std::to_string(k), random_tensor(rng, {2 * D})});
    rows.push_back(check("bilstm encoder", T, rng, in, [](Tape& tape, auto& v) {
      const auto out = lstm::bilstm_encode(
          tape, lstm_vars(v, 0), lstm_vars(v, 12),
          std::span<const Var>(v).subspan(24));
      return ad::concat(std::span<const Var>(out));
    }));
  }
  for (double slope : {1.0, 2.0}) {
    std::vector<Input> in = {{"W_d", random_tensor(rng, {D, D}, -0.05, 0.05)},
                             {"U_d", random_tensor(rng, {D, E}, -0.05, 0.05)},
                             {"b_d", random_tensor(rng, {D}, -0.05, 0.05)},
                             {"h", random_tensor(rng, {D})},
                             {"x", random_tensor(rng, {E})}};
    auto fn = [slope](Tape&, const std::vector<Var>& v) {
      return detectors::dynamic_preactivation({v[0], v[1], v[2]}, v[3], v[4],
                                               slope)
          .z_tilde;
    };
    auto regime = [fn](const std::vector<Input>& inputs) {
      Tape tape;
      std::vector<Var> vars;
      for (const auto& i : inputs) vars.push_back(constant_of(tape, i.value));
      return std::vector<int>{
          fn(tape, vars).item() <= 0.0 ? -1 : fn(tape, vars).item() >= 1.0};
    };
    rows.push_back(check("dynamic detector (a=" +
                             std::to_string(static_cast<int>(slope)) + ")",
                         T, rng, in, fn, regime));
  }
  {
    std::vector<Input> in = {{"W", random_tensor(rng, {2 * D, 2 * D})},
                             {"b", random_tensor(rng, {2 * D})},
                             {"u", random_tensor(rng, {2 * D})}};
    for (int k = 0; k < 4; ++k)
      in.push_back({"h" + std::to_string(k), random_tensor(rng, {2 * D})});
    rows.push_back(check("attention pooling", T, rng, in, [](Tape&, auto& v) {
      net::BoundLayers L;
      L.attn_W_s = v[0];
      L.attn_b_s = v[1];
      L.attn_u_s = v[2];
      const auto r =
          net::word_phrase_attention(L, std::span<const Var>(v).subspan(3));
      return ad::concat(r.pooled, r.weights);
    }));
  }
  {
    std::vector<Input> in = {{"W_c", random_tensor(rng, {2, 2 * D})},
                             {"b_c", random_tensor(rng, {2})},
                             {"v", random_tensor(rng, {2 * D})}};
    rows.push_back(check("classifier + nll", T, rng, in, [](Tape&, auto& v) {
      return net::nll_loss(ad::softmax(ad::linear(v[0], v[2], v[1])), 1);
    }));
  }
}

// Every parameter of a small model against one two-sentence document, with
// the binarization pattern of the unperturbed pass held fixed.
Row end_to_end(net::Variant variant, std::uint64_t seed) {
  net::ModelConfig cfg;
  cfg.variant = variant;
  cfg.vocab_size = 8;
  cfg.embed_dim = 4;
  cfg.hidden_dim = 3;
  cfg.num_classes = 2;
  cfg.slope = 2.0;
  auto model = net::Model::create(cfg, seed);
  // Larger weights than the training initialization so detectors fire and
  // several scenarios occur.
  Rng rng(derive_seed(seed, 77));
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    if (model.params().name(i) == "embedding") continue;
    for (double& v : model.params().tensor(i).values()) v = rng.uniform(-0.8, 0.8);
  }
  const text::Document doc{
      1, {{3, 4, text::kBoundaryId}, {5, 6, text::kBoundaryId}}};

  net::GatePattern pattern;
  {
    ad::Tape tape;
    net::Graph g(tape, model, nullptr);
    pattern = net::GatePattern::from_trace(net::forward(g, doc).trace);
  }
  net::ForwardOptions opts;
  opts.frozen = &pattern;

  auto grads = model.make_gradients();
  {
    ad::Tape tape;
    net::Graph g(tape, model, &grads);
    tape.backward(net::nll_loss(net::forward(g, doc, opts).probabilities,
                                doc.label));
  }
  auto eval = [&] {
    ad::Tape tape;
    net::Graph g(tape, model, nullptr);
    return net::nll_loss(net::forward(g, doc, opts).probabilities, doc.label)
        .item();
  };
  auto regime = [&] {
    ad::Tape tape;
    net::Graph g(tape, model, nullptr);
    std::vector<int> out;
    for (const auto& r : net::forward(g, doc, opts).trace) {
      const double pre = (cfg.slope * r.preactivation + 1.0) / 2.0;
      out.push_back(pre <= 0.0 ? -1 : (pre >= 1.0 ? 1 : 0));
    }
    return out;
  };

  Row row{std::string("end-to-end ") + net::variant_name(variant) +
              " (D=3, E=4, C=2)",
          0.0, kComponentThreshold, 0, 0, ""};
  auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto analytic = grads.to_dense(i);
    const auto r = ad::finite_diff_check(params.tensor(i).values(), analytic,
                                         eval, kStep, regime);
    row.checked += r.checked;
    row.excluded += r.excluded;
    if (r.checked > 0 && (row.worst.empty() || r.max_error > row.max_error)) {
      row.max_error = r.max_error;
      row.worst = params.name(i) + "[" + std::to_string(r.worst_index) + "]";
    }
  }
  return row;
}

}  // namespace

bool Report::passed() const {
  for (const auto& r : rows)
    if (!r.passed()) return false;
  return !rows.empty();
}

const Row& Report::worst() const {
  if (rows.empty()) throw UsageError("empty gradient-check report");
  const Row* w = &rows.front();
  auto ratio = [](const Row& r) {
    return r.checked == 0 ? 1e300 : r.max_error / r.threshold;
  };
  for (const auto& r : rows)
    if (ratio(r) > ratio(*w)) w = &r;
  return *w;
}

Report run(std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  Report report;
  Rng rng(derive_seed(seed, 50));
  primitive_rows(rng, report.rows);
  component_rows(rng, report.rows);
  report.rows.push_back(end_to_end(net::Variant::attention, seed));
  report.rows.push_back(end_to_end(net::Variant::base, seed));
  const std::chrono::duration<double> elapsed =
      std::chrono::steady_clock::now() - start;
  report.seconds = elapsed.count();
  return report;
}

void write_table(std::ostream& out, const Report& report) {
  out << std::left << std::setw(40) << "component" << std::right
      << std::setw(14) << "max_rel_err" << std::setw(11) << "threshold"
      << std::setw(9) << "checked" << std::setw(10) << "excluded"
      << "  status  worst\n";
  for (const auto& r : report.rows) {
    out << std::left << std::setw(40) << r.component << std::right
        << std::scientific << std::setprecision(3) << std::setw(14)
        << r.max_error << std::setw(11) << std::setprecision(0) << r.threshold
        << std::defaultfloat << std::setw(9) << r.checked << std::setw(10)
        << r.excluded << "  " << (r.passed() ? "ok    " : "FAIL  ") << r.worst
        << '\n';
  }
}

}  // namespace mhs::gradcheck
