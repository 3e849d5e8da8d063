#include "vmr/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "vmr/error.hpp"

namespace vmr::ad {
namespace {

// Dot product with eight independent partial sums in a fixed order, so the
// compiler can vectorize it without reassociating; results are reproducible.
double dot(const double* a, const double* b, std::size_t n) {
  double part[8] = {};
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8)
    for (std::size_t l = 0; l < 8; ++l) part[l] += a[j + l] * b[j + l];
  double acc = ((part[0] + part[1]) + (part[2] + part[3])) + ((part[4] + part[5]) + (part[6] + part[7]));
  for (; j < n; ++j) acc += a[j] * b[j];
  return acc;
}

double sigmoid_scalar(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

void require_matrix(const Shape& s, const char* op) {
  if (s.size() != 2) throw ShapeMismatch(std::string(op) + ": expected a matrix, got " + shape_string(s));
}

// Geometry of the independent lines a reduction along `axis` runs over.
struct Lines {
  std::size_t count;
  std::size_t length;
  std::size_t stride;
  std::size_t start(std::size_t line, const Shape& s, std::size_t axis) const {
    if (s.size() == 1) return 0;
    return axis == 1 ? line * s[1] : line;
  }
};

Lines lines_for(const Shape& s, std::size_t axis, const char* op) {
  if (s.size() == 1 && axis == 0) return {1, s[0], 1};
  if (s.size() == 2 && axis == 1) return {s[0], s[1], 1};
  if (s.size() == 2 && axis == 0) return {s[1], s[0], s[1]};
  throw ShapeMismatch(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                      shape_string(s));
}

enum class Binary { Add, Sub, Mul };

Var binary(Var a, Var b, Binary kind) {
  Tape& tape = a.tape();
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  const bool same = a.shape() == b.shape();
  if (!same && na != 1 && nb != 1)
    throw ShapeMismatch("elementwise: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const Shape out_shape = (same || nb == 1) ? a.shape() : b.shape();
  const std::size_t n = std::max(na, nb);
  auto av = a.value();
  auto bv = b.value();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = av[na == 1 ? 0 : i];
    double y = bv[nb == 1 ? 0 : i];
    out[i] = kind == Binary::Add ? x + y : kind == Binary::Sub ? x - y : x * y;
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape.record(out_shape, std::move(out), {ia, ib}, [ia, ib, na, nb, n, kind](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto av = t.value(ia);
    auto bv = t.value(ib);
    if (t.needs_grad(ia)) {
      auto ga = t.grad(ia);
      for (std::size_t i = 0; i < n; ++i) {
        double d = kind == Binary::Mul ? g[i] * bv[nb == 1 ? 0 : i] : g[i];
        ga[na == 1 ? 0 : i] += d;
      }
    }
    if (t.needs_grad(ib)) {
      auto gb = t.grad(ib);
      for (std::size_t i = 0; i < n; ++i) {
        double d = kind == Binary::Mul ? g[i] * av[na == 1 ? 0 : i] : kind == Binary::Sub ? -g[i] : g[i];
        gb[nb == 1 ? 0 : i] += d;
      }
    }
  });
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---- Tensor ----

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_))
    throw ShapeMismatch("tensor data has " + std::to_string(data_.size()) + " elements, shape " +
                        shape_string(shape_) + " needs " + std::to_string(shape_size(shape_)));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

std::size_t Tensor::rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
std::size_t Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

std::span<double> Tensor::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), 0.0);
  return grad_;
}

void Tensor::zero_grad() { grad_.assign(data_.size(), 0.0); }

// ---- Var ----

const Shape& Var::shape() const { return tape_->shape(id_); }
std::size_t Var::size() const { return tape_->value(id_).size(); }
std::span<const double> Var::value() const { return tape_->value(id_); }
double Var::item() const {
  if (size() != 1) throw NotScalar("item() on a tensor of shape " + shape_string(shape()));
  return value()[0];
}
std::span<const double> Var::grad() const { return tape_->grad(id_); }

// ---- Tape ----

Var Tape::constant(Tensor value) {
  Node node;
  node.shape = value.shape();
  node.value.assign(value.data().begin(), value.data().end());
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant_ref(const Tensor& value) {
  Node node;
  node.shape = value.shape();
  node.ref = &value;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Tensor& param) {
  Node node;
  node.shape = param.shape();
  node.param = &param;
  node.needs_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Shape shape, std::vector<double> value, std::vector<std::size_t> parents, BackwardFn fn) {
  Node node;
  node.shape = std::move(shape);
  node.value = std::move(value);
  for (std::size_t p : parents) node.needs_grad = node.needs_grad || nodes_[p].needs_grad;
  node.parents = std::move(parents);
  if (node.needs_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

std::span<const double> Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.param) return n.param->data();
  if (n.ref) return n.ref->data();
  return n.value;
}

std::span<double> Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  std::size_t size = n.param ? n.param->size() : n.ref ? n.ref->size() : n.value.size();
  if (n.grad.size() != size) n.grad.assign(size, 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.size() != 1) throw NotScalar("backward on a tensor of shape " + shape_string(loss.shape()));
  for (Node& n : nodes_) n.grad.clear();
  grad(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.param) {
      auto pg = n.param->grad();
      for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += n.grad[i];
    } else if (n.backward) {
      n.backward(*this, id);
    }
  }
}

// ---- operations ----

Var matmul(Var a, Var b) {
  require_matrix(a.shape(), "matmul");
  require_matrix(b.shape(), "matmul");
  const std::size_t p = a.shape()[0], q = a.shape()[1], r = b.shape()[1];
  if (b.shape()[0] != q)
    throw ShapeMismatch("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  auto av = a.value();
  auto bv = b.value();
  std::vector<double> out(p * r, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    double* orow = out.data() + i * r;
    for (std::size_t k = 0; k < q; ++k) {
      const double aik = av[i * q + k];
      if (aik == 0.0) continue;
      const double* brow = bv.data() + k * r;
      for (std::size_t j = 0; j < r; ++j) orow[j] += aik * brow[j];
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record({p, r}, std::move(out), {ia, ib}, [ia, ib, p, q, r](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto av = t.value(ia);
    auto bv = t.value(ib);
    if (t.needs_grad(ia)) {
      auto ga = t.grad(ia);
      for (std::size_t i = 0; i < p; ++i)
        for (std::size_t k = 0; k < q; ++k) {
          const double* grow = g.data() + i * r;
          const double* brow = bv.data() + k * r;
          ga[i * q + k] += dot(grow, brow, r);
        }
    }
    if (t.needs_grad(ib)) {
      auto gb = t.grad(ib);
      for (std::size_t i = 0; i < p; ++i) {
        const double* grow = g.data() + i * r;
        for (std::size_t k = 0; k < q; ++k) {
          const double aik = av[i * q + k];
          if (aik == 0.0) continue;
          double* gbrow = gb.data() + k * r;
          for (std::size_t j = 0; j < r; ++j) gbrow[j] += aik * grow[j];
        }
      }
    }
  });
}

Var add(Var a, Var b) { return binary(a, b, Binary::Add); }
Var sub(Var a, Var b) { return binary(a, b, Binary::Sub); }
Var mul(Var a, Var b) { return binary(a, b, Binary::Mul); }

Var scale(Var a, double factor) {
  std::vector<double> out(a.value().begin(), a.value().end());
  for (double& x : out) x *= factor;
  const std::size_t ia = a.id();
  return a.tape().record(a.shape(), std::move(out), {ia}, [ia, factor](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

Var tanh(Var a) {
  std::vector<double> out(a.value().begin(), a.value().end());
  for (double& x : out) x = std::tanh(x);
  const std::size_t ia = a.id();
  return a.tape().record(a.shape(), std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto y = t.value(self);
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var sigmoid(Var a) {
  std::vector<double> out(a.value().begin(), a.value().end());
  for (double& x : out) x = sigmoid_scalar(x);
  const std::size_t ia = a.id();
  return a.tape().record(a.shape(), std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto y = t.value(self);
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var elementwise(ElementwiseOp op, std::span<const Var> args) {
  const bool unary = op == ElementwiseOp::Tanh || op == ElementwiseOp::Sigmoid;
  if (args.size() != (unary ? 1u : 2u))
    throw ShapeMismatch("elementwise: wrong number of operands (" + std::to_string(args.size()) + ")");
  switch (op) {
    case ElementwiseOp::Tanh: return tanh(args[0]);
    case ElementwiseOp::Sigmoid: return sigmoid(args[0]);
    case ElementwiseOp::Add: return add(args[0], args[1]);
    case ElementwiseOp::Mul: return mul(args[0], args[1]);
    case ElementwiseOp::Sub: return sub(args[0], args[1]);
  }
  throw ShapeMismatch("elementwise: unknown op");
}

Var transpose(Var a) {
  require_matrix(a.shape(), "transpose");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  auto av = a.value();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  const std::size_t ia = a.id();
  return a.tape().record({c, r}, std::move(out), {ia}, [ia, r, c](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Var row(Var a, std::size_t r) {
  require_matrix(a.shape(), "row");
  const std::size_t rows = a.shape()[0], c = a.shape()[1];
  if (r >= rows) throw IndexOutOfRange("row " + std::to_string(r) + " of " + shape_string(a.shape()));
  auto av = a.value();
  std::vector<double> out(av.begin() + static_cast<std::ptrdiff_t>(r * c),
                          av.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
  const std::size_t ia = a.id();
  return a.tape().record({1, c}, std::move(out), {ia}, [ia, r, c](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto ga = t.grad(ia);
    for (std::size_t j = 0; j < c; ++j) ga[r * c + j] += g[j];
  });
}

Var softmax(Var logits, std::size_t axis) {
  const Shape shape = logits.shape();
  const Lines lines = lines_for(shape, axis, "softmax");
  auto x = logits.value();
  std::vector<double> out(x.size());
  for (std::size_t l = 0; l < lines.count; ++l) {
    const std::size_t s = lines.start(l, shape, axis);
    double mx = kNegInf;
    for (std::size_t k = 0; k < lines.length; ++k) mx = std::max(mx, x[s + k * lines.stride]);
    if (mx == kNegInf) throw DegenerateRow("softmax: every entry of line " + std::to_string(l) + " is -inf");
    double z = 0.0;
    for (std::size_t k = 0; k < lines.length; ++k) {
      double e = std::exp(x[s + k * lines.stride] - mx);
      out[s + k * lines.stride] = e;
      z += e;
    }
    for (std::size_t k = 0; k < lines.length; ++k) out[s + k * lines.stride] /= z;
  }
  const std::size_t ix = logits.id();
  return logits.tape().record(shape, std::move(out), {ix}, [ix, lines, shape, axis](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto y = t.value(self);
    auto gx = t.grad(ix);
    for (std::size_t l = 0; l < lines.count; ++l) {
      const std::size_t s = lines.start(l, shape, axis);
      double dot = 0.0;
      for (std::size_t k = 0; k < lines.length; ++k) dot += y[s + k * lines.stride] * g[s + k * lines.stride];
      for (std::size_t k = 0; k < lines.length; ++k) {
        const std::size_t i = s + k * lines.stride;
        gx[i] += y[i] * (g[i] - dot);
      }
    }
  });
}

Var gather_rows(Var table, std::span<const std::int32_t> ids) {
  require_matrix(table.shape(), "gather_rows");
  const std::size_t v = table.shape()[0], d = table.shape()[1];
  auto tv = table.value();
  std::vector<double> out(ids.size() * d);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= v)
      throw IndexOutOfRange("gather_rows: id " + std::to_string(ids[r]) + " outside table of " +
                            std::to_string(v) + " rows");
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(ids[r]) * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  const std::size_t it = table.id();
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return table.tape().record({ids.size(), d}, std::move(out), {it},
                             [it, d, saved = std::move(saved)](Tape& t, std::size_t self) {
                               auto g = t.grad(self);
                               auto gt = t.grad(it);
                               for (std::size_t r = 0; r < saved.size(); ++r) {
                                 double* dst = gt.data() + static_cast<std::size_t>(saved[r]) * d;
                                 const double* src = g.data() + r * d;
                                 for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                               }
                             });
}

Var masked_fill(Var t, std::span<const std::uint8_t> mask, double value, std::size_t axis) {
  const Shape& s = t.shape();
  if (s.size() == 0 || s.size() > 2 || axis >= s.size())
    throw ShapeMismatch("masked_fill: axis " + std::to_string(axis) + " invalid for " + shape_string(s));
  if (mask.size() != s[axis])
    throw ShapeMismatch("masked_fill: mask of length " + std::to_string(mask.size()) + " for axis of length " +
                        std::to_string(s[axis]));
  const std::size_t cols = s.size() == 2 ? s[1] : s[0];
  std::vector<std::uint8_t> full(t.size());
  for (std::size_t i = 0; i < full.size(); ++i) {
    std::size_t r = i / cols, c = i % cols;
    full[i] = mask[(s.size() == 2 && axis == 0) ? r : c];
  }
  return masked_fill_full(t, full, value);
}

Var masked_fill_full(Var t, std::span<const std::uint8_t> mask, double value) {
  if (mask.size() != t.size())
    throw ShapeMismatch("masked_fill: mask of length " + std::to_string(mask.size()) + " for tensor " +
                        shape_string(t.shape()));
  std::vector<double> out(t.value().begin(), t.value().end());
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!mask[i]) out[i] = value;
  const std::size_t it = t.id();
  std::vector<std::uint8_t> saved(mask.begin(), mask.end());
  return t.tape().record(t.shape(), std::move(out), {it}, [it, saved = std::move(saved)](Tape& tp, std::size_t self) {
    auto g = tp.grad(self);
    auto gt = tp.grad(it);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (saved[i]) gt[i] += g[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value()) s += x;
  const std::size_t ia = a.id();
  return a.tape().record({1}, {s}, {ia}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& x : t.grad(ia)) x += g;
  });
}

Var log_clamped(Var a, double floor) {
  std::vector<double> out(a.value().begin(), a.value().end());
  for (double& x : out) x = std::log(std::max(x, floor));
  const std::size_t ia = a.id();
  return a.tape().record(a.shape(), std::move(out), {ia}, [ia, floor](Tape& t, std::size_t self) {
    auto g = t.grad(self);
    auto x = t.value(ia);
    auto ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] >= floor) ga[i] += g[i] / x[i];
  });
}

Var select_sum(Var a, std::span<const std::size_t> idx) {
  auto av = a.value();
  double s = 0.0;
  for (std::size_t i : idx) {
    if (i >= av.size()) throw IndexOutOfRange("select_sum: index " + std::to_string(i));
    s += av[i];
  }
  const std::size_t ia = a.id();
  std::vector<std::size_t> saved(idx.begin(), idx.end());
  return a.tape().record({1}, {s}, {ia}, [ia, saved = std::move(saved)](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    auto ga = t.grad(ia);
    for (std::size_t i : saved) ga[i] += g;
  });
}

Var select_max(Var a, std::span<const std::size_t> idx) {
  if (idx.empty()) throw IndexOutOfRange("select_max: no indices");
  auto av = a.value();
  std::size_t best = idx[0];
  for (std::size_t i : idx) {
    if (i >= av.size()) throw IndexOutOfRange("select_max: index " + std::to_string(i));
    if (av[i] > av[best] || (av[i] == av[best] && i < best)) best = i;
  }
  const std::size_t ia = a.id();
  return a.tape().record({1}, {av[best]}, {ia}, [ia, best](Tape& t, std::size_t self) {
    t.grad(ia)[best] += t.grad(self)[0];
  });
}

Var lstm(Var inputs, Var input_weights, Var recurrent_weights, Var bias) {
  require_matrix(inputs.shape(), "lstm");
  require_matrix(input_weights.shape(), "lstm");
  require_matrix(recurrent_weights.shape(), "lstm");
  const std::size_t n = inputs.shape()[0];
  const std::size_t d = inputs.shape()[1];
  const std::size_t h = recurrent_weights.shape()[0];
  const std::size_t G = 4 * h;
  if (input_weights.shape() != Shape{d, G} || recurrent_weights.shape() != Shape{h, G} || bias.size() != G)
    throw ShapeMismatch("lstm: inputs " + shape_string(inputs.shape()) + ", input weights " +
                        shape_string(input_weights.shape()) + ", recurrent weights " +
                        shape_string(recurrent_weights.shape()) + ", bias " + shape_string(bias.shape()));
  auto X = inputs.value();
  auto Wx = input_weights.value();
  auto Wh = recurrent_weights.value();
  auto b = bias.value();

  std::vector<double> gates(n * G);  // activated gate values
  std::vector<double> cell(n * h);
  std::vector<double> tanh_cell(n * h);
  std::vector<double> out(n * h);
  std::vector<double> z(G);
  for (std::size_t t = 0; t < n; ++t) {
    std::copy(b.begin(), b.end(), z.begin());
    const double* x = X.data() + t * d;
    for (std::size_t k = 0; k < d; ++k) {
      const double xk = x[k];
      const double* w = Wx.data() + k * G;
      for (std::size_t j = 0; j < G; ++j) z[j] += xk * w[j];
    }
    if (t > 0) {
      const double* hp = out.data() + (t - 1) * h;
      for (std::size_t k = 0; k < h; ++k) {
        const double hk = hp[k];
        const double* w = Wh.data() + k * G;
        for (std::size_t j = 0; j < G; ++j) z[j] += hk * w[j];
      }
    }
    double* ga = gates.data() + t * G;
    for (std::size_t j = 0; j < h; ++j) {
      ga[j] = sigmoid_scalar(z[j]);
      ga[h + j] = sigmoid_scalar(z[h + j]);
      ga[2 * h + j] = std::tanh(z[2 * h + j]);
      ga[3 * h + j] = sigmoid_scalar(z[3 * h + j]);
      const double c_prev = t > 0 ? cell[(t - 1) * h + j] : 0.0;
      const double c = ga[h + j] * c_prev + ga[j] * ga[2 * h + j];
      cell[t * h + j] = c;
      tanh_cell[t * h + j] = std::tanh(c);
      out[t * h + j] = ga[3 * h + j] * tanh_cell[t * h + j];
    }
  }

  const std::size_t ix = inputs.id(), iwx = input_weights.id(), iwh = recurrent_weights.id(), ib = bias.id();
  return inputs.tape().record(
      {n, h}, std::move(out), {ix, iwx, iwh, ib},
      [=, gates = std::move(gates), cell = std::move(cell), tanh_cell = std::move(tanh_cell)](Tape& tp,
                                                                                                std::size_t self) {
        auto dH = tp.grad(self);
        auto H = tp.value(self);
        auto X = tp.value(ix);
        auto Wx = tp.value(iwx);
        auto Wh = tp.value(iwh);
        std::vector<double> dZ(n * G, 0.0);
        std::vector<double> dh(h), dh_next(h, 0.0), dc_next(h, 0.0);
        const bool want_wh = tp.needs_grad(iwh);
        std::span<double> gWh = want_wh ? tp.grad(iwh) : std::span<double>();
        for (std::size_t t = n; t-- > 0;) {
          const double* ga = gates.data() + t * G;
          double* dz = dZ.data() + t * G;
          for (std::size_t j = 0; j < h; ++j) {
            const double dht = dH[t * h + j] + dh_next[j];
            const double i_g = ga[j], f_g = ga[h + j], g_g = ga[2 * h + j], o_g = ga[3 * h + j];
            const double tc = tanh_cell[t * h + j];
            const double c_prev = t > 0 ? cell[(t - 1) * h + j] : 0.0;
            const double dc = dht * o_g * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * g_g * i_g * (1.0 - i_g);
            dz[h + j] = dc * c_prev * f_g * (1.0 - f_g);
            dz[2 * h + j] = dc * i_g * (1.0 - g_g * g_g);
            dz[3 * h + j] = dht * tc * o_g * (1.0 - o_g);
            dc_next[j] = dc * f_g;
          }
          if (t == 0) break;
          const double* hp = H.data() + (t - 1) * h;
          for (std::size_t k = 0; k < h; ++k) {
            const double* w = Wh.data() + k * G;
            dh_next[k] = dot(dz, w, G);
            if (want_wh) {
              double* gw = gWh.data() + k * G;
              const double hk = hp[k];
              for (std::size_t j = 0; j < G; ++j) gw[j] += hk * dz[j];
            }
          }
        }
        if (tp.needs_grad(iwx)) {
          auto gWx = tp.grad(iwx);
          for (std::size_t t = 0; t < n; ++t)
            for (std::size_t k = 0; k < d; ++k) {
              const double xk = X[t * d + k];
              double* gw = gWx.data() + k * G;
              const double* dz = dZ.data() + t * G;
              for (std::size_t j = 0; j < G; ++j) gw[j] += xk * dz[j];
            }
        }
        if (tp.needs_grad(ix)) {
          auto gX = tp.grad(ix);
          for (std::size_t t = 0; t < n; ++t)
            for (std::size_t k = 0; k < d; ++k) {
              const double* w = Wx.data() + k * G;
              const double* dz = dZ.data() + t * G;
              gX[t * d + k] += dot(dz, w, G);
            }
        }
        if (tp.needs_grad(ib)) {
          auto gb = tp.grad(ib);
          for (std::size_t t = 0; t < n; ++t)
            for (std::size_t j = 0; j < G; ++j) gb[j] += dZ[t * G + j];
        }
      });
}

// ---- optimizer ----

void adam_step(std::span<Tensor* const> params, AdamState& state, const AdamConfig& config) {
  if (state.m.empty() && state.v.empty() && state.step == 0) {
    for (Tensor* p : params) {
      state.m.emplace_back(p->size(), 0.0);
      state.v.emplace_back(p->size(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeMismatch("adam: state holds " + std::to_string(state.m.size()) + " tensors, got " +
                        std::to_string(params.size()) + " parameters");
  for (std::size_t k = 0; k < params.size(); ++k)
    if (state.m[k].size() != params[k]->size() || state.v[k].size() != params[k]->size())
      throw ShapeMismatch("adam: state for parameter " + std::to_string(k) + " has the wrong size");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    auto g = p.grad();
    auto data = p.data();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      data[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
}

// ---- verification ----

std::vector<GradientPair> finite_diff_gradients(const std::function<Var(Tape&)>& loss,
                                                std::span<Tensor* const> params, double eps) {
  std::vector<std::vector<double>> saved_grads;
  for (Tensor* p : params) {
    auto g = p->grad();
    saved_grads.emplace_back(g.begin(), g.end());
    p->zero_grad();
  }
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
  }
  auto evaluate = [&] {
    Tape tape;
    return loss(tape).item();
  };
  std::vector<GradientPair> out;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    std::vector<double> analytic(p.grad().begin(), p.grad().end());
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p[i];
      p[i] = orig + eps;
      const double up = evaluate();
      p[i] = orig - eps;
      const double down = evaluate();
      p[i] = orig;
      out.push_back({analytic[i], (up - down) / (2.0 * eps)});
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto g = params[k]->grad();
    std::copy(saved_grads[k].begin(), saved_grads[k].end(), g.begin());
  }
  return out;
}

double relative_error(const GradientPair& p) {
  return std::abs(p.analytic - p.numeric) / std::max({std::abs(p.analytic), std::abs(p.numeric), 1e-8});
}

double finite_diff_check(const std::function<Var(Tape&)>& loss, std::span<Tensor* const> params, double eps) {
  double worst = 0.0;
  for (const GradientPair& p : finite_diff_gradients(loss, params, eps)) worst = std::max(worst, relative_error(p));
  return worst;
}

}  // namespace vmr::ad
