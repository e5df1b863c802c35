#include "mhs/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "mhs/error.hpp"

namespace mhs::ad {

namespace {

using detail::Node;

std::atomic<int> g_corrupted{-1};

// Scale applied to a primitive's backward rule; 1 unless fault-injected.
double fault_factor(Op op) {
  return g_corrupted.load(std::memory_order_relaxed) == static_cast<int>(op)
             ? 1.5
             : 1.0;
}

Shape node_shape(const Node& n) {
  if (n.rank == 0) return {};
  if (n.rank == 1) return {n.rows};
  return {n.rows, n.cols};
}

[[noreturn]] void mismatch(const char* op, const Node& a, const Node& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " +
                       shape_string(node_shape(a)) + " vs " +
                       shape_string(node_shape(b)));
}

Tape& tape_of(Var v) {
  if (!v.valid()) throw UsageError("operation on an unbound variable");
  return *v.node()->tape;
}

void same_tape(Var a, Var b) {
  if (a.node()->tape != b.node()->tape)
    throw UsageError("variables belong to different tapes");
}

bool is_vector(const Node& n) { return n.cols == 1; }

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

const char* op_name(Op op) {
  switch (op) {
    case Op::matmul: return "matmul";
    case Op::affine: return "affine";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::mix: return "mix";
    case Op::sigmoid: return "sigmoid";
    case Op::tanh: return "tanh";
    case Op::hardsigm: return "hardsigm";
    case Op::step: return "step";
    case Op::step_frozen: return "step_frozen";
    case Op::sum: return "sum";
    case Op::dot: return "dot";
    case Op::concat: return "concat";
    case Op::softmax: return "softmax";
    case Op::weighted_sum: return "weighted_sum";
    case Op::neg_log_pick: return "neg_log_pick";
  }
  return "?";
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : shape_(std::move(shape)),
      values_(std::move(values)),
      requires_grad_(requires_grad) {
  if (shape_.size() > 2)
    throw DimensionError("tensors of rank > 2 are not supported: " +
                         shape_string(shape_));
  if (shape_size(shape_) != values_.size())
    throw DimensionError("shape " + shape_string(shape_) + " does not hold " +
                         std::to_string(values_.size()) + " values");
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape s{values.size()};
  return Tensor(std::move(s), std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values, bool requires_grad) {
  return Tensor({rows, cols}, std::move(values), requires_grad);
}

double Tensor::item() const {
  if (values_.size() != 1)
    throw UsageError("item() on non-scalar tensor " + shape_string(shape_));
  return values_[0];
}

std::span<double> Tensor::grad() {
  if (!grad_) grad_.emplace(values_.size(), 0.0);
  return *grad_;
}

std::span<const double> Tensor::grad() const {
  if (!grad_) return {};
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

// ------------------------------------------------------------------- Var

std::span<const double> Var::values() const {
  return {node_->value, node_->size()};
}

double Var::item() const {
  if (node_->size() != 1)
    throw UsageError("item() on non-scalar value " + shape_string(shape()));
  return node_->value[0];
}

Shape Var::shape() const { return node_shape(*node_); }

std::span<const double> Var::grad() const {
  if (!node_->grad) return {};
  return {node_->grad, node_->size()};
}

// ------------------------------------------------------------------ Tape

Node& Tape::new_node(std::size_t rows, std::size_t cols, std::uint8_t rank,
                     bool needs_grad) {
  Node& n = nodes_.emplace_back();
  n.tape = this;
  n.rows = rows;
  n.cols = cols;
  n.rank = rank;
  n.storage.assign(rows * cols, 0.0);
  n.value = n.storage.data();
  if (needs_grad) {
    n.grad_storage.assign(rows * cols, 0.0);
    n.grad = n.grad_storage.data();
  }
  return n;
}

std::uint32_t Tape::push_list(Node* node) {
  lists_.push_back(node);
  return static_cast<std::uint32_t>(lists_.size() - 1);
}

void Tape::record(const Record& r) {
  op_log_.push_back(r.op);
  if (r.out->grad) records_.push_back(r);
}

Var Tape::view(std::span<const double> values, const Shape& shape,
               double* grad) {
  if (shape.size() > 2 || shape_size(shape) != values.size())
    throw DimensionError("view shape " + shape_string(shape) +
                         " does not match " + std::to_string(values.size()) +
                         " values");
  Node& n = nodes_.emplace_back();
  n.tape = this;
  n.rank = static_cast<std::uint8_t>(shape.size());
  n.rows = shape.empty() ? 1 : shape[0];
  n.cols = shape.size() == 2 ? shape[1] : 1;
  n.value = values.data();
  n.grad = grad;
  return Var(&n);
}

Var Tape::leaf(Tensor& tensor) {
  double* g = tensor.requires_grad() ? tensor.grad().data() : nullptr;
  return view(tensor.values(), tensor.shape(), g);
}

Var Tape::leaf(const Tensor& tensor, std::span<double> grad_sink) {
  if (grad_sink.size() != tensor.size())
    throw DimensionError("gradient sink of size " +
                         std::to_string(grad_sink.size()) + " for tensor " +
                         shape_string(tensor.shape()));
  return view(tensor.values(), tensor.shape(), grad_sink.data());
}

Var Tape::constant(const Shape& shape, std::vector<double> values) {
  if (shape.size() > 2 || shape_size(shape) != values.size())
    throw DimensionError("constant shape " + shape_string(shape) +
                         " does not match " + std::to_string(values.size()) +
                         " values");
  Node& n = new_node(shape.empty() ? 1 : shape[0],
                     shape.size() == 2 ? shape[1] : 1,
                     static_cast<std::uint8_t>(shape.size()), false);
  n.storage = std::move(values);
  n.value = n.storage.data();
  return Var(&n);
}

Var Tape::constant(std::span<const double> values) {
  return constant(Shape{values.size()},
                  std::vector<double>(values.begin(), values.end()));
}

Var Tape::scalar(double value) { return constant(Shape{}, {value}); }

Var Tape::zeros(std::size_t n) {
  return constant(Shape{n}, std::vector<double>(n, 0.0));
}

void Tape::clear() {
  records_.clear();
  op_log_.clear();
  lists_.clear();
  nodes_.clear();
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.node()->tape != this)
    throw UsageError("backward: loss is not on this tape");
  if (loss.size() != 1)
    throw UsageError("backward: loss must be a scalar, got " +
                     shape_string(loss.shape()));
  Node* out = loss.node();
  if (!out->grad) return;
  for (auto& n : nodes_)
    if (!n.grad_storage.empty())
      std::fill(n.grad_storage.begin(), n.grad_storage.end(), 0.0);
  out->grad[0] += 1.0;
  for (auto it = records_.rbegin(); it != records_.rend(); ++it)
    run_backward(*it);
}

void Tape::run_backward(const Record& r) {
  const Node& out = *r.out;
  const double* g = out.grad;
  const double k = fault_factor(r.op);
  const std::size_t n = out.size();
  Node* a = r.in[0];
  Node* b = r.in[1];

  switch (r.op) {
    case Op::matmul: {
      const std::size_t m = a->rows, inner = a->cols, cols = b->cols;
      if (a->grad)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < cols; ++j) {
            const double gij = k * g[i * cols + j];
            for (std::size_t p = 0; p < inner; ++p)
              a->grad[i * inner + p] += gij * b->value[p * cols + j];
          }
      if (b->grad)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < cols; ++j) {
            const double gij = k * g[i * cols + j];
            for (std::size_t p = 0; p < inner; ++p)
              b->grad[p * cols + j] += a->value[i * inner + p] * gij;
          }
      break;
    }
    case Op::affine: {
      // in = {W, x, U, y, bias}
      for (int pair = 0; pair < 2; ++pair) {
        Node* W = r.in[2 * pair];
        Node* x = r.in[2 * pair + 1];
        if (!W) continue;
        const std::size_t cols = W->cols;
        for (std::size_t i = 0; i < n; ++i) {
          const double gi = k * g[i];
          if (W->grad)
            for (std::size_t j = 0; j < cols; ++j)
              W->grad[i * cols + j] += gi * x->value[j];
          if (x->grad)
            for (std::size_t j = 0; j < cols; ++j)
              x->grad[j] += W->value[i * cols + j] * gi;
        }
      }
      if (Node* bias = r.in[4]; bias && bias->grad)
        for (std::size_t i = 0; i < n; ++i) bias->grad[i] += k * g[i];
      break;
    }
    case Op::add:
      for (std::size_t i = 0; i < n; ++i) {
        if (a->grad) a->grad[i] += k * g[i];
        if (b->grad) b->grad[i] += k * g[i];
      }
      break;
    case Op::sub:
      for (std::size_t i = 0; i < n; ++i) {
        if (a->grad) a->grad[i] += k * g[i];
        if (b->grad) b->grad[i] -= k * g[i];
      }
      break;
    case Op::mul:
      for (std::size_t i = 0; i < n; ++i) {
        if (a->grad) a->grad[i] += k * g[i] * b->value[i];
        if (b->grad) b->grad[i] += k * g[i] * a->value[i];
      }
      break;
    case Op::scale: {
      const double s = a->value[0];
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += g[i] * b->value[i];
        if (b->grad) b->grad[i] += k * s * g[i];
      }
      if (a->grad) a->grad[0] += k * acc;
      break;
    }
    case Op::mix: {
      Node* gate = a;
      Node* x = b;
      Node* y = r.in[2];
      const double s = gate->value[0];
      double acc = 0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += g[i] * (x->value[i] - y->value[i]);
        if (x->grad) x->grad[i] += k * s * g[i];
        if (y->grad) y->grad[i] += k * (1.0 - s) * g[i];
      }
      if (gate->grad) gate->grad[0] += k * acc;
      break;
    }
    case Op::sigmoid:
      for (std::size_t i = 0; i < n; ++i) {
        const double y = out.value[i];
        a->grad[i] += k * g[i] * y * (1.0 - y);
      }
      break;
    case Op::tanh:
      for (std::size_t i = 0; i < n; ++i) {
        const double y = out.value[i];
        a->grad[i] += k * g[i] * (1.0 - y * y);
      }
      break;
    case Op::hardsigm: {
      const double slope = r.param;
      for (std::size_t i = 0; i < n; ++i) {
        const double pre = (slope * a->value[i] + 1.0) / 2.0;
        if (pre > 0.0 && pre < 1.0) a->grad[i] += k * g[i] * slope / 2.0;
      }
      break;
    }
    case Op::step:
    case Op::step_frozen:
      for (std::size_t i = 0; i < n; ++i) a->grad[i] += k * g[i];
      break;
    case Op::sum:
      for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += k * g[0];
      break;
    case Op::dot: {
      const std::size_t m = a->size();
      for (std::size_t i = 0; i < m; ++i) {
        if (a->grad) a->grad[i] += k * g[0] * b->value[i];
        if (b->grad) b->grad[i] += k * g[0] * a->value[i];
      }
      break;
    }
    case Op::concat: {
      std::size_t offset = 0;
      for (std::uint32_t p = 0; p < r.list_count; ++p) {
        Node* part = lists_[r.list_begin + p];
        const std::size_t m = part->size();
        if (part->grad)
          for (std::size_t i = 0; i < m; ++i)
            part->grad[i] += k * g[offset + i];
        offset += m;
      }
      break;
    }
    case Op::softmax: {
      double gy = 0;
      for (std::size_t i = 0; i < n; ++i) gy += g[i] * out.value[i];
      for (std::size_t i = 0; i < n; ++i)
        a->grad[i] += k * out.value[i] * (g[i] - gy);
      break;
    }
    case Op::weighted_sum: {
      Node* weights = a;
      for (std::uint32_t p = 0; p < r.list_count; ++p) {
        Node* item = lists_[r.list_begin + p];
        const double w = weights->value[p];
        double acc = 0;
        for (std::size_t i = 0; i < n; ++i) {
          acc += g[i] * item->value[i];
          if (item->grad) item->grad[i] += k * w * g[i];
        }
        if (weights->grad) weights->grad[p] += k * acc;
      }
      break;
    }
    case Op::neg_log_pick: {
      const double p = a->value[r.index];
      if (p >= r.param) a->grad[r.index] += k * -g[0] / p;
      break;
    }
  }
}

// ------------------------------------------------------------ primitives

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a);
  same_tape(a, b);
  Node& A = *a.node();
  Node& B = *b.node();
  if (A.rank != 2 || A.cols != B.rows) mismatch("matmul", A, B);
  const std::size_t m = A.rows, inner = A.cols, cols = B.cols;
  Node& out = t.new_node(m, cols, B.rank == 2 ? 2 : 1, A.grad || B.grad);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0;
      for (std::size_t p = 0; p < inner; ++p)
        acc += A.value[i * inner + p] * B.value[p * cols + j];
      out.storage[i * cols + j] = acc;
    }
  t.record({Op::matmul, &out, {&A, &B, nullptr, nullptr, nullptr}, 0, 0, 0, 0});
  return Var(&out);
}

Var affine(Var W, Var x, Var U, Var y, Var bias) {
  Tape& t = tape_of(W);
  Node* nodes[5] = {W.node(), x.node(), U.valid() ? U.node() : nullptr,
                    y.valid() ? y.node() : nullptr,
                    bias.valid() ? bias.node() : nullptr};
  if (!nodes[1]) throw UsageError("affine: missing input vector");
  if ((nodes[2] == nullptr) != (nodes[3] == nullptr))
    throw UsageError("affine: second term needs both matrix and input");
  const std::size_t m = nodes[0]->rows;
  bool needs_grad = false;
  for (Node* n : nodes) {
    if (!n) continue;
    if (n->tape != &t) throw UsageError("variables belong to different tapes");
    needs_grad = needs_grad || n->grad;
  }
  for (int pair = 0; pair < 2; ++pair) {
    Node* M = nodes[2 * pair];
    Node* v = nodes[2 * pair + 1];
    if (!M) continue;
    if (M->rank != 2 || M->rows != m || !is_vector(*v) || M->cols != v->rows)
      mismatch("affine", *M, *v);
  }
  if (nodes[4] && (nodes[4]->size() != m || !is_vector(*nodes[4])))
    mismatch("affine", *nodes[0], *nodes[4]);

  Node& out = t.new_node(m, 1, 1, needs_grad);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = nodes[4] ? nodes[4]->value[i] : 0.0;
    for (int pair = 0; pair < 2; ++pair) {
      Node* M = nodes[2 * pair];
      if (!M) continue;
      const double* row = M->value + i * M->cols;
      const double* v = nodes[2 * pair + 1]->value;
      double s = 0;
      for (std::size_t j = 0; j < M->cols; ++j) s += row[j] * v[j];
      acc += s;
    }
    out.storage[i] = acc;
  }
  t.record({Op::affine, &out,
            {nodes[0], nodes[1], nodes[2], nodes[3], nodes[4]}, 0, 0, 0, 0});
  return Var(&out);
}

namespace {

template <typename F>
Var binary(Op op, Var a, Var b, F f) {
  Tape& t = tape_of(a);
  same_tape(a, b);
  Node& A = *a.node();
  Node& B = *b.node();
  if (A.rows != B.rows || A.cols != B.cols) mismatch(op_name(op), A, B);
  Node& out = t.new_node(A.rows, A.cols, A.rank, A.grad || B.grad);
  for (std::size_t i = 0; i < A.size(); ++i)
    out.storage[i] = f(A.value[i], B.value[i]);
  t.record({op, &out, {&A, &B, nullptr, nullptr, nullptr}, 0, 0, 0, 0});
  return Var(&out);
}

template <typename F>
Var unary(Op op, Var a, double param, F f) {
  Tape& t = tape_of(a);
  Node& A = *a.node();
  Node& out = t.new_node(A.rows, A.cols, A.rank, A.grad != nullptr);
  for (std::size_t i = 0; i < A.size(); ++i) out.storage[i] = f(A.value[i]);
  t.record({op, &out, {&A, nullptr, nullptr, nullptr, nullptr}, param, 0, 0,
            0});
  return Var(&out);
}

void require_scalar(const char* op, Var s) {
  if (s.size() != 1)
    throw DimensionError(std::string(op) + ": expected a scalar, got " +
                         shape_string(s.shape()));
}

}  // namespace

Var add(Var a, Var b) {
  return binary(Op::add, a, b, [](double x, double y) { return x + y; });
}

Var sub(Var a, Var b) {
  return binary(Op::sub, a, b, [](double x, double y) { return x - y; });
}

Var mul(Var a, Var b) {
  return binary(Op::mul, a, b, [](double x, double y) { return x * y; });
}

Var scale(Var s, Var v) {
  Tape& t = tape_of(s);
  same_tape(s, v);
  require_scalar("scale", s);
  Node& S = *s.node();
  Node& V = *v.node();
  Node& out = t.new_node(V.rows, V.cols, V.rank, S.grad || V.grad);
  for (std::size_t i = 0; i < V.size(); ++i)
    out.storage[i] = S.value[0] * V.value[i];
  t.record({Op::scale, &out, {&S, &V, nullptr, nullptr, nullptr}, 0, 0, 0, 0});
  return Var(&out);
}

Var mix(Var g, Var a, Var b) {
  Tape& t = tape_of(g);
  same_tape(g, a);
  same_tape(a, b);
  require_scalar("mix", g);
  Node& G = *g.node();
  Node& A = *a.node();
  Node& B = *b.node();
  if (A.rows != B.rows || A.cols != B.cols) mismatch("mix", A, B);
  Node& out = t.new_node(A.rows, A.cols, A.rank, G.grad || A.grad || B.grad);
  const double s = G.value[0];
  // Exact selection when s is 0 or 1: 0 * x contributes a signed zero only.
  for (std::size_t i = 0; i < A.size(); ++i)
    out.storage[i] = s * A.value[i] + (1.0 - s) * B.value[i];
  t.record({Op::mix, &out, {&G, &A, &B, nullptr, nullptr}, 0, 0, 0, 0});
  return Var(&out);
}

Var sigmoid(Var x) { return unary(Op::sigmoid, x, 0, sigmoid_value); }

Var tanh(Var x) {
  return unary(Op::tanh, x, 0, [](double v) { return std::tanh(v); });
}

Var hardsigm(Var x, double slope) {
  if (!(slope > 0)) throw ConfigError("hardsigm slope must be positive");
  return unary(Op::hardsigm, x, slope, [slope](double v) {
    return std::max(0.0, std::min(1.0, (slope * v + 1.0) / 2.0));
  });
}

Var step(Var x) {
  return unary(Op::step, x, 0, [](double v) { return v > 0.5 ? 1.0 : 0.0; });
}

Var step_frozen(Var x, double binary, double anchor) {
  require_scalar("step_frozen", x);
  return unary(Op::step_frozen, x, 0,
               [=](double v) { return binary + (v - anchor); });
}

Var sum(Var x) {
  Tape& t = tape_of(x);
  Node& A = *x.node();
  Node& out = t.new_node(1, 1, 0, A.grad != nullptr);
  double acc = 0;
  for (std::size_t i = 0; i < A.size(); ++i) acc += A.value[i];
  out.storage[0] = acc;
  t.record({Op::sum, &out, {&A, nullptr, nullptr, nullptr, nullptr}, 0, 0, 0,
            0});
  return Var(&out);
}

Var dot(Var a, Var b) {
  Tape& t = tape_of(a);
  same_tape(a, b);
  Node& A = *a.node();
  Node& B = *b.node();
  if (A.size() != B.size() || !is_vector(A) || !is_vector(B))
    mismatch("dot", A, B);
  Node& out = t.new_node(1, 1, 0, A.grad || B.grad);
  double acc = 0;
  for (std::size_t i = 0; i < A.size(); ++i) acc += A.value[i] * B.value[i];
  out.storage[0] = acc;
  t.record({Op::dot, &out, {&A, &B, nullptr, nullptr, nullptr}, 0, 0, 0, 0});
  return Var(&out);
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  Tape& t = tape_of(parts[0]);
  std::size_t total = 0;
  bool needs_grad = false;
  for (const Var& p : parts) {
    same_tape(parts[0], p);
    const Node& n = *p.node();
    if (!is_vector(n)) mismatch("concat", *parts[0].node(), n);
    total += n.size();
    needs_grad = needs_grad || n.grad;
  }
  Node& out = t.new_node(total, 1, 1, needs_grad);
  std::uint32_t begin = 0;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Node& n = *parts[i].node();
    std::copy(n.value, n.value + n.size(), out.storage.begin() + offset);
    offset += n.size();
    const auto at = t.push_list(parts[i].node());
    if (i == 0) begin = at;
  }
  t.record({Op::concat, &out, {nullptr, nullptr, nullptr, nullptr, nullptr}, 0,
            0, begin, static_cast<std::uint32_t>(parts.size())});
  return Var(&out);
}

Var softmax(Var x) {
  Tape& t = tape_of(x);
  Node& A = *x.node();
  if (A.size() == 0) throw DimensionError("softmax of an empty vector");
  Node& out = t.new_node(A.rows, A.cols, A.rank, A.grad != nullptr);
  const double top = *std::max_element(A.value, A.value + A.size());
  double total = 0;
  for (std::size_t i = 0; i < A.size(); ++i) {
    out.storage[i] = std::exp(A.value[i] - top);
    total += out.storage[i];
  }
  for (auto& v : out.storage) v /= total;
  t.record({Op::softmax, &out, {&A, nullptr, nullptr, nullptr, nullptr}, 0, 0,
            0, 0});
  return Var(&out);
}

Var weighted_sum(Var weights, std::span<const Var> items) {
  Tape& t = tape_of(weights);
  Node& W = *weights.node();
  if (items.empty() || W.size() != items.size())
    throw DimensionError("weighted_sum: " + std::to_string(W.size()) +
                         " weights for " + std::to_string(items.size()) +
                         " items");
  const Node& first = *items[0].node();
  bool needs_grad = W.grad != nullptr;
  for (const Var& it : items) {
    same_tape(weights, it);
    if (it.node()->rows != first.rows || it.node()->cols != first.cols)
      mismatch("weighted_sum", first, *it.node());
    needs_grad = needs_grad || it.node()->grad;
  }
  Node& out = t.new_node(first.rows, first.cols, first.rank, needs_grad);
  std::uint32_t begin = 0;
  for (std::size_t p = 0; p < items.size(); ++p) {
    const Node& it = *items[p].node();
    for (std::size_t i = 0; i < it.size(); ++i)
      out.storage[i] += W.value[p] * it.value[i];
    const auto at = t.push_list(items[p].node());
    if (p == 0) begin = at;
  }
  t.record({Op::weighted_sum, &out, {&W, nullptr, nullptr, nullptr, nullptr},
            0, 0, begin, static_cast<std::uint32_t>(items.size())});
  return Var(&out);
}

Var neg_log_pick(Var p, std::size_t index, double floor) {
  Tape& t = tape_of(p);
  Node& A = *p.node();
  if (index >= A.size())
    throw UsageError("neg_log_pick: index " + std::to_string(index) +
                     " out of range for " + std::to_string(A.size()) +
                     " entries");
  Node& out = t.new_node(1, 1, 0, A.grad != nullptr);
  out.storage[0] = -std::log(std::max(A.value[index], floor));
  t.record({Op::neg_log_pick, &out, {&A, nullptr, nullptr, nullptr, nullptr},
            floor, index, 0, 0});
  return Var(&out);
}

namespace debug {

void corrupt_backward(std::optional<Op> op) {
  g_corrupted.store(op ? static_cast<int>(*op) : -1);
}

std::optional<Op> corrupted_backward() {
  const int v = g_corrupted.load();
  if (v < 0) return std::nullopt;
  return static_cast<Op>(v);
}

}  // namespace debug

}  // namespace mhs::ad
