#pragma once

// Define-by-run reverse-mode differentiation over small dense tensors.
//
// A Tape records every primitive executed on its variables. Calling
// Tape::backward(loss) walks the records in exact reverse order and
// accumulates gradients into every variable that requires them. Leaf
// gradients are never reset by the tape; callers zero them explicitly,
// which is what allows accumulation across the documents of a batch.
//
// Vectors have rank 1 and behave as column vectors in products. Matrices are
// rank 2, stored row-major.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mhs::ad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Owning dense tensor. Model parameters live in these; intermediate values
// live on a Tape.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t rank() const { return shape_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double item() const;

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool flag) { requires_grad_ = flag; }

  bool has_grad() const { return grad_.has_value(); }
  // Allocates a zero gradient if none exists yet.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();
  void clear_grad() { grad_.reset(); }

 private:
  Shape shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
  std::optional<std::vector<double>> grad_;
};

enum class Op : std::uint8_t {
  matmul,
  affine,
  add,
  sub,
  mul,
  scale,
  mix,
  sigmoid,
  tanh,
  hardsigm,
  step,
  step_frozen,
  sum,
  dot,
  concat,
  softmax,
  weighted_sum,
  neg_log_pick,
};

const char* op_name(Op op);

class Tape;

namespace detail {

struct Node {
  Tape* tape = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint8_t rank = 1;
  const double* value = nullptr;
  double* grad = nullptr;
  std::vector<double> storage;
  std::vector<double> grad_storage;

  std::size_t size() const { return rows * cols; }
};

}  // namespace detail

// Non-owning handle to a value recorded on a Tape. Valid while the tape
// lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return node_ != nullptr; }
  std::span<const double> values() const;
  double operator[](std::size_t i) const { return node_->value[i]; }
  double item() const;
  std::size_t size() const { return node_->size(); }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  Shape shape() const;
  bool requires_grad() const { return node_->grad != nullptr; }
  // Gradient after Tape::backward; empty when the value needs none.
  std::span<const double> grad() const;

  detail::Node* node() const { return node_; }
  explicit Var(detail::Node* node) : node_(node) {}

 private:
  detail::Node* node_ = nullptr;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Binds a tensor; gradients accumulate into tensor.grad() when the tensor
  // requires them. The tensor must outlive the tape and must not be resized.
  Var leaf(Tensor& tensor);
  // Binds a read-only tensor whose gradient goes to an external buffer.
  Var leaf(const Tensor& tensor, std::span<double> grad_sink);
  // Binds raw values, e.g. one embedding row. grad may be null.
  Var view(std::span<const double> values, const Shape& shape, double* grad);
  Var constant(const Shape& shape, std::vector<double> values);
  Var constant(std::span<const double> values);
  Var scalar(double value);
  Var zeros(std::size_t n);

  std::size_t record_count() const { return records_.size(); }
  const std::vector<Op>& op_log() const { return op_log_; }

  // loss must be a scalar. Intermediate gradients are reset first, so
  // replaying the tape adds the same leaf gradients again.
  void backward(Var loss);

  void clear();

  // Hooks used by the primitive implementations.
  struct Record {
    Op op;
    detail::Node* out;
    detail::Node* in[5];
    double param;
    std::size_t index;
    std::uint32_t list_begin;
    std::uint32_t list_count;
  };
  detail::Node& new_node(std::size_t rows, std::size_t cols,
                         std::uint8_t rank, bool needs_grad);
  void record(const Record& r);
  std::uint32_t push_list(detail::Node* node);

 private:
  void run_backward(const Record& r);

  std::deque<detail::Node> nodes_;
  std::vector<Record> records_;
  std::vector<Op> op_log_;
  std::vector<detail::Node*> lists_;
};

// a[m x k] * b[k x n]; b may be a rank-1 vector of length k.
Var matmul(Var a, Var b);
// W x + U y + b for vectors x, y. U/y and bias may be invalid (default Var).
Var affine(Var W, Var x, Var U, Var y, Var bias);
inline Var linear(Var W, Var x, Var bias) {
  return affine(W, x, Var{}, Var{}, bias);
}

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
// s * v for a scalar s.
Var scale(Var s, Var v);
// g * a + (1 - g) * b for a scalar g.
Var mix(Var g, Var a, Var b);
Var sigmoid(Var x);
Var tanh(Var x);
// max(0, min(1, (slope * x + 1) / 2)). slope must be positive.
Var hardsigm(Var x, double slope);
// 1 where x > 0.5 else 0; straight-through (identity) gradient.
Var step(Var x);
// Scalar surrogate for a frozen binary decision: binary + (x - anchor).
// Equals `binary` at x == anchor, with unit slope in x.
Var step_frozen(Var x, double binary, double anchor);
Var sum(Var x);
Var dot(Var a, Var b);
Var concat(std::span<const Var> parts);
inline Var concat(Var a, Var b) {
  const Var parts[2] = {a, b};
  return concat(parts);
}
Var softmax(Var x);
// sum_i weights[i] * items[i]; weights has one entry per item.
Var weighted_sum(Var weights, std::span<const Var> items);
// -log(max(p[index], floor)).
Var neg_log_pick(Var p, std::size_t index, double floor = 1e-12);

// Fault injection for verification tooling: scales the backward rule of one
// primitive so gradient checks can be shown to catch it.
namespace debug {
void corrupt_backward(std::optional<Op> op);
std::optional<Op> corrupted_backward();
}  // namespace debug

}  // namespace mhs::ad
