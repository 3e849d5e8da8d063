#pragma once

// Dense float64 tensors with tape-based reverse-mode differentiation.
//
// A Tape records operations in execution order. Parameters enter a tape by
// reference; Tape::backward() pushes gradients through the recorded nodes in
// reverse order and accumulates them into each parameter's grad slot.
// Broadcasting is limited to scalar (size-1) operands.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace vmr::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  /// Throws ShapeMismatch if data.size() differs from the shape's size.
  Tensor(Shape shape, std::vector<double> data);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool has_grad() const { return !grad_.empty() || data_.empty(); }
  /// Allocates a zero gradient on first use.
  std::span<double> grad();
  std::span<const double> grad() const { return grad_; }
  void zero_grad();
  void clear_grad() { grad_.clear(); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<double> grad_;
};

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid while the
/// tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Shape& shape() const;
  std::size_t size() const;
  std::span<const double> value() const;
  /// Value of a single-element var.
  double item() const;
  /// Gradient computed by the last backward pass (zeros if unreached).
  std::span<const double> grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Constant read in place; `value` must outlive the tape.
  Var constant_ref(const Tensor& value);
  /// Records `param` by reference; it must outlive the tape.
  Var parameter(Tensor& param);

  /// Throws NotScalar unless loss has exactly one element. Parameter
  /// gradients accumulate across calls until zeroed.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }

  // Used by operation implementations.
  Var record(Shape shape, std::vector<double> value, std::vector<std::size_t> parents, BackwardFn fn);
  const Shape& shape(std::size_t id) const { return nodes_[id].shape; }
  std::span<const double> value(std::size_t id) const;
  std::span<double> grad(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    Tensor* param = nullptr;
    const Tensor* ref = nullptr;
    std::vector<double> grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ---- operations ----

/// (p x q) * (q x r). Throws ShapeMismatch.
Var matmul(Var a, Var b);
/// Same shapes, or one operand of size 1.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var tanh(Var a);
Var sigmoid(Var a);

enum class ElementwiseOp { Tanh, Sigmoid, Add, Mul, Sub };
/// Dispatches to the named unary/binary operations above.
Var elementwise(ElementwiseOp op, std::span<const Var> args);

Var transpose(Var a);
/// Row r of a matrix as a 1 x cols matrix.
Var row(Var a, std::size_t r);

/// Max-shifted softmax along `axis` (0 or 1 for matrices, 0 for vectors).
/// -inf entries get probability 0. Throws DegenerateRow when every entry of
/// a row is -inf.
Var softmax(Var logits, std::size_t axis);

/// Row lookup; backward scatter-adds into the table gradient.
/// Throws IndexOutOfRange.
Var gather_rows(Var table, std::span<const std::int32_t> ids);

/// Sets entries whose mask is 0 to `value` along `axis` (the mask has the
/// length of that axis). Filled entries pass no gradient.
Var masked_fill(Var t, std::span<const std::uint8_t> mask, double value, std::size_t axis);
/// Elementwise variant: the mask has the tensor's full size.
Var masked_fill_full(Var t, std::span<const std::uint8_t> mask, double value);

Var sum(Var a);
/// log(max(x, floor)); the gradient is 0 where x < floor.
Var log_clamped(Var a, double floor);
/// Sum of the elements at the given flat indices, as a scalar.
Var select_sum(Var a, std::span<const std::size_t> flat_indices);
/// Largest element among the given flat indices (lowest index on ties).
Var select_max(Var a, std::span<const std::size_t> flat_indices);

/// Unidirectional LSTM over the rows of `inputs` (n x d) from a zero state.
/// Weights: input_weights d x 4h, recurrent_weights h x 4h, bias 1 x 4h,
/// gate blocks ordered input, forget, candidate, output. Returns the n x h
/// hidden states.
Var lstm(Var inputs, Var input_weights, Var recurrent_weights, Var bias);

// ---- optimizer ----

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update using each parameter's grad slot. An
/// empty state is initialized to zeros; otherwise its shapes must match
/// (ShapeMismatch).
void adam_step(std::span<Tensor* const> params, AdamState& state, const AdamConfig& config);

// ---- verification ----

/// Compares tape gradients with central differences over every coordinate
/// of `params`. `loss` builds the scalar on the given tape, entering each
/// parameter through Tape::parameter. Returns
/// max |a - g| / max(|a|, |g|, 1e-8). Leaves parameter values and grad
/// slots as they were on entry (grads are restored).
double finite_diff_check(const std::function<Var(Tape&)>& loss, std::span<Tensor* const> params,
                         double eps = 1e-5);

struct GradientPair {
  double analytic = 0.0;
  double numeric = 0.0;
};
/// The per-coordinate comparison behind finite_diff_check, in parameter
/// order. Same restoration guarantees.
std::vector<GradientPair> finite_diff_gradients(const std::function<Var(Tape&)>& loss,
                                                std::span<Tensor* const> params, double eps = 1e-5);
/// |a - g| / max(|a|, |g|, 1e-8).
double relative_error(const GradientPair& pair);

}  // namespace vmr::ad
