#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vmr/error.hpp"
#include "vmr/tensor.hpp"

namespace vmr::ad {
namespace {

std::vector<double> values(Var v) { return {v.value().begin(), v.value().end()}; }

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (double& x : t.data()) x = u(rng);
  return t;
}

TEST(Matmul, IdentityAndHandArithmetic) {
  Tape tape;
  Var id = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var m = tape.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(values(matmul(id, m)), (std::vector<double>{1, 2, 3, 4, 5, 6}));

  Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var ones = tape.constant(Tensor::matrix(2, 1, {1, 1}));
  Var c = matmul(a, ones);
  EXPECT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_EQ(values(c), (std::vector<double>{3, 7}));
}

TEST(Matmul, ShapeMismatch) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 3}));
  EXPECT_THROW(matmul(a, b), ShapeMismatch);
}

TEST(Elementwise, BasicValues) {
  Tape tape;
  Var zero = tape.constant(Tensor({1}, 0.0));
  EXPECT_EQ(tanh(zero).item(), 0.0);
  EXPECT_EQ(sigmoid(zero).item(), 0.5);
  Var a = tape.constant(Tensor({1, 2}, {1, 2}));
  Var b = tape.constant(Tensor({1, 2}, {3, 4}));
  std::vector<Var> args = {a, b};
  EXPECT_EQ(values(elementwise(ElementwiseOp::Add, args)), (std::vector<double>{4, 6}));
  EXPECT_EQ(values(elementwise(ElementwiseOp::Sub, args)), (std::vector<double>{-2, -2}));
  EXPECT_EQ(values(elementwise(ElementwiseOp::Mul, args)), (std::vector<double>{3, 8}));
  EXPECT_EQ(values(mul(a, tape.constant(Tensor({1}, 2.0)))), (std::vector<double>{2, 4}));
  Var c = tape.constant(Tensor({2, 1}, {3, 4}));
  EXPECT_THROW(add(a, c), ShapeMismatch);
  EXPECT_THROW(elementwise(ElementwiseOp::Tanh, args), ShapeMismatch);
}

TEST(Softmax, ClosedForms) {
  Tape tape;
  EXPECT_EQ(values(softmax(tape.constant(Tensor({1, 2}, {0, 0})), 1)), (std::vector<double>{0.5, 0.5}));
  auto p = values(softmax(tape.constant(Tensor({1, 2}, {std::log(2.0), 0})), 1));
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
  EXPECT_THROW(softmax(tape.constant(Tensor({1, 2}, {kNegInf, kNegInf})), 1), DegenerateRow);
}

TEST(Softmax, ColumnsAndLargeLogits) {
  Tape tape;
  auto p = values(softmax(tape.constant(Tensor::matrix(2, 2, {1000, 0, 1000, 0})), 0));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[2], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Softmax, RowsSumToOne) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    Tape tape;
    std::size_t rows = 1 + trial % 3, cols = 1 + trial % 17;
    Tensor x = random_tensor({rows, cols}, rng, 30.0);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (i % 5 == 3) x[i] = kNegInf;
    for (std::size_t r = 0; r < rows; ++r) x.at(r, 0) = 0.0;
    auto p = values(softmax(tape.constant(x), 1));
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        EXPECT_GE(p[r * cols + c], 0.0);
        s += p[r * cols + c];
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(GatherRows, DuplicatesAccumulate) {
  Tensor table = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  Tape tape;
  Var t = tape.parameter(table);
  std::vector<std::int32_t> ids = {0, 0};
  Var g = gather_rows(t, ids);
  EXPECT_EQ(values(g), (std::vector<double>{1, 2, 1, 2}));
  tape.backward(sum(g));
  EXPECT_EQ(std::vector<double>(table.grad().begin(), table.grad().end()),
            (std::vector<double>{2, 2, 0, 0, 0, 0}));
}

TEST(GatherRows, EmptyAndOutOfRange) {
  Tensor table({3, 2}, 1.0);
  Tape tape;
  Var t = tape.parameter(table);
  Var empty = gather_rows(t, std::vector<std::int32_t>{});
  EXPECT_EQ(empty.shape(), (Shape{0, 2}));
  EXPECT_THROW(gather_rows(t, std::vector<std::int32_t>{3}), IndexOutOfRange);
}

TEST(MaskedFill, Cases) {
  Tape tape;
  Var x = tape.constant(Tensor({1, 2}, {3, 5}));
  std::vector<std::uint8_t> ones = {1, 1}, first = {1, 0}, none = {0, 0};
  EXPECT_EQ(values(masked_fill(x, ones, 0.0, 1)), (std::vector<double>{3, 5}));
  EXPECT_EQ(values(softmax(masked_fill(x, first, kNegInf, 1), 1)), (std::vector<double>{1, 0}));
  EXPECT_EQ(values(masked_fill(x, none, 0.0, 1)), (std::vector<double>{0, 0}));
  EXPECT_THROW(masked_fill(x, std::vector<std::uint8_t>{1}, 0.0, 1), ShapeMismatch);

  Var m = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  EXPECT_EQ(values(masked_fill(m, first, 0.0, 0)), (std::vector<double>{1, 2, 0, 0}));
  EXPECT_EQ(values(masked_fill(m, first, 0.0, 1)), (std::vector<double>{1, 0, 3, 0}));
}

TEST(MaskedFill, NoGradientThroughFilledEntries) {
  Tensor w({1, 3}, std::vector<double>{1, 2, 3});
  Tape tape;
  Var v = masked_fill(tape.parameter(w), std::vector<std::uint8_t>{1, 0, 1}, 7.0, 1);
  tape.backward(sum(mul(v, v)));
  EXPECT_EQ(std::vector<double>(w.grad().begin(), w.grad().end()), (std::vector<double>{2, 0, 6}));
}

TEST(Backward, SumAndSquare) {
  Tensor w = Tensor::matrix(2, 2, {1, -2, 3, 0.5});
  {
    Tape tape;
    tape.backward(sum(tape.parameter(w)));
  }
  for (double g : w.grad()) EXPECT_EQ(g, 1.0);
  w.zero_grad();
  {
    Tape tape;
    Var p = tape.parameter(w);
    tape.backward(sum(mul(p, p)));
  }
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(w.grad()[i], 2 * w[i]);
}

TEST(Backward, NotScalarAndAccumulation) {
  Tensor w({1, 2}, std::vector<double>{1, 2});
  Tape tape;
  Var p = tape.parameter(w);
  EXPECT_THROW(tape.backward(p), NotScalar);
  Var l = sum(p);
  tape.backward(l);
  tape.backward(l);
  EXPECT_EQ(w.grad()[0], 2.0);
  EXPECT_EQ(w.grad()[1], 2.0);
}

TEST(Backward, ConstantRefReadsInPlaceWithoutGradient) {
  Tensor w = Tensor::matrix(1, 2, {2, 3});
  Tensor p = Tensor::matrix(2, 1, {1, 1});
  Tape tape;
  Var loss = sum(matmul(tape.constant_ref(w), tape.parameter(p)));
  EXPECT_DOUBLE_EQ(loss.item(), 5.0);
  tape.backward(loss);
  EXPECT_FALSE(w.has_grad());
  EXPECT_EQ(std::vector<double>(p.grad().begin(), p.grad().end()), (std::vector<double>{2, 3}));
}

TEST(Backward, TapeIsTopologicallyOrdered) {
  Tensor w({2, 2}, 0.3);
  Tape tape;
  Var p = tape.parameter(w);
  Var l = sum(tanh(matmul(p, transpose(p))));
  for (std::size_t id = 0; id < tape.size(); ++id)
    for (std::size_t parent : tape.parents(id)) EXPECT_LT(parent, id);
  EXPECT_EQ(l.id(), tape.size() - 1);
}

TEST(Losses, SelectAndClampedLog) {
  Tape tape;
  Var p = tape.constant(Tensor({1, 4}, {0.1, 0.3, 0.2, 0.4}));
  std::vector<std::size_t> idx = {1, 2};
  EXPECT_NEAR(select_sum(p, idx).item(), 0.5, 1e-15);
  EXPECT_EQ(select_max(p, idx).item(), 0.3);
  Var logs = log_clamped(tape.constant(Tensor({1, 2}, {0.0, 1.0})), 1e-12);
  EXPECT_NEAR(values(logs)[0], std::log(1e-12), 1e-12);
  EXPECT_EQ(values(logs)[1], 0.0);
  EXPECT_THROW(select_max(p, std::vector<std::size_t>{}), IndexOutOfRange);
}

TEST(Lstm, SingleStepMatchesHandComputation) {
  const std::size_t d = 2, h = 1;
  Tensor x({1, d}, std::vector<double>{0.5, -1.0});
  Tensor wx({d, 4 * h}, std::vector<double>{0.1, 0.2, 0.3, 0.4, -0.5, 0.6, -0.7, 0.8});
  Tensor wh({h, 4 * h}, 0.9);
  Tensor b({1, 4 * h}, std::vector<double>{0.0, 1.0, 0.0, 0.0});
  Tape tape;
  Var out = lstm(tape.constant(x), tape.constant(wx), tape.constant(wh), tape.constant(b));
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  double zi = 0.5 * 0.1 - 1.0 * -0.5, zg = 0.5 * 0.3 - 1.0 * -0.7, zo = 0.5 * 0.4 - 1.0 * 0.8;
  double c = sig(zi) * std::tanh(zg);
  EXPECT_NEAR(out.item(), sig(zo) * std::tanh(c), 1e-15);
}

// Finite-difference agreement for every operation on random small tensors.
TEST(GradientCheck, EveryOperation) {
  std::mt19937_64 rng(5);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng), c = random_tensor({3, 4}, rng);
  Tensor s = random_tensor({1}, rng);
  Tensor table = random_tensor({5, 3}, rng);
  Tensor x = random_tensor({4, 3}, rng), wx = random_tensor({3, 8}, rng, 0.5), wh = random_tensor({2, 8}, rng, 0.5),
         bias = random_tensor({1, 8}, rng, 0.5);
  Tensor probs({1, 4}, std::vector<double>{0.2, 0.3, 0.4, 0.6});
  Tensor w({3, 1}, std::vector<double>{0.3, -0.2, 0.5});
  const Tensor weights = random_tensor({3, 4}, rng);  // fixed, not perturbed

  std::vector<std::pair<std::string, std::function<Var(Tape&)>>> cases = {
      {"matmul", [&](Tape& t) { return sum(tanh(matmul(t.parameter(a), t.parameter(b)))); }},
      {"add", [&](Tape& t) { return sum(mul(add(t.parameter(a), t.parameter(c)), t.parameter(a))); }},
      {"sub", [&](Tape& t) { return sum(tanh(sub(t.parameter(a), t.parameter(c)))); }},
      {"scalar", [&](Tape& t) { return sum(sigmoid(mul(t.parameter(s), t.parameter(a)))); }},
      {"scale", [&](Tape& t) { return sum(tanh(scale(t.parameter(a), -1.7))); }},
      {"transpose", [&](Tape& t) { return sum(tanh(matmul(transpose(t.parameter(a)), t.parameter(c)))); }},
      {"row", [&](Tape& t) { return sum(tanh(row(t.parameter(a), 1))); }},
      {"softmax_rows",
       [&](Tape& t) { return sum(mul(softmax(t.parameter(a), 1), t.constant(weights))); }},
      {"softmax_cols",
       [&](Tape& t) { return sum(mul(softmax(t.parameter(a), 0), t.constant(weights))); }},
      {"gather", [&](Tape& t) {
         std::vector<std::int32_t> ids = {4, 0, 4};
         return sum(tanh(gather_rows(t.parameter(table), ids)));
       }},
      {"masked_softmax", [&](Tape& t) {
         std::vector<std::uint8_t> m = {1, 0, 1, 1};
         Var p = softmax(masked_fill(t.parameter(a), m, kNegInf, 1), 1);
         return sum(mul(p, t.constant(weights)));
       }},
      {"log_select", [&](Tape& t) {
         std::vector<std::size_t> idx = {1, 3};
         return add(log_clamped(select_sum(t.parameter(probs), idx), 1e-12),
                    log_clamped(select_max(t.parameter(probs), idx), 1e-12));
       }},
      {"lstm", [&](Tape& t) {
         Var hs = lstm(t.parameter(x), t.parameter(wx), t.parameter(wh), t.parameter(bias));
         return sum(mul(hs, hs));
       }},
      {"lstm_readout", [&](Tape& t) {
         Var hs = lstm(t.parameter(x), t.parameter(wx), t.parameter(wh), t.parameter(bias));
         return sum(matmul(hs, t.parameter(wh)));
       }},
  };
  std::vector<Tensor*> params = {&a, &b, &c, &s, &table, &x, &wx, &wh, &bias, &probs, &w};
  for (auto& [name, fn] : cases) {
    double err = finite_diff_check(fn, params);
    EXPECT_LT(err, 1e-6) << name;
  }
}

TEST(GradientCheck, QuadraticFormAndConstant) {
  std::mt19937_64 rng(9);
  Tensor q = random_tensor({3, 3}, rng), v = random_tensor({3, 1}, rng);
  std::vector<Tensor*> params = {&v};
  auto quad = [&](Tape& t) {
    Var vv = t.parameter(v);
    return matmul(transpose(vv), matmul(t.constant(q), vv));
  };
  EXPECT_LT(finite_diff_check(quad, params), 1e-7);
  auto constant = [&](Tape& t) {
    t.parameter(v);
    return sum(t.constant(q));
  };
  EXPECT_EQ(finite_diff_check(constant, params), 0.0);
}

TEST(GradientCheck, RestoresGradSlots) {
  Tensor v({1, 2}, std::vector<double>{1, 2});
  v.grad()[0] = 42.0;
  std::vector<Tensor*> params = {&v};
  finite_diff_check([&](Tape& t) { return sum(t.parameter(v)); }, params);
  EXPECT_EQ(v.grad()[0], 42.0);
  EXPECT_EQ(v[0], 1.0);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Tensor w({2, 2}, 0.7);
  w.zero_grad();
  std::vector<Tensor*> params = {&w};
  AdamState state;
  adam_step(params, state, AdamConfig{});
  for (double x : w.data()) EXPECT_EQ(x, 0.7);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepFormula) {
  // At t=1 the bias-corrected moments are g and g^2, so the step is
  // -lr * g / (|g| + eps).
  Tensor w({1, 3}, std::vector<double>{1.0, 1.0, 1.0});
  auto g = w.grad();
  g[0] = 0.5;
  g[1] = -2.0;
  g[2] = 1e-9;
  std::vector<Tensor*> params = {&w};
  AdamState state;
  AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step(params, state, cfg);
  EXPECT_NEAR(w[0], 1.0 - 0.01 * 0.5 / (0.5 + 1e-8), 1e-15);
  EXPECT_NEAR(w[1], 1.0 + 0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_NEAR(w[2], 1.0 - 0.01 * 1e-9 / (1e-9 + 1e-8), 1e-15);
}

TEST(Adam, SymmetryIsPreserved) {
  Tensor a({1, 2}, std::vector<double>{0.3, -0.3});
  Tensor b({1, 2}, std::vector<double>{0.3, -0.3});
  std::vector<Tensor*> params = {&a, &b};
  AdamState state;
  for (int step = 0; step < 2; ++step) {
    a.zero_grad();
    b.zero_grad();
    a.grad()[0] = b.grad()[0] = 0.25;
    a.grad()[1] = b.grad()[1] = -0.25;
    adam_step(params, state, AdamConfig{});
  }
  EXPECT_EQ(a, b);
  EXPECT_EQ(a[0], -a[1]);
}

TEST(Adam, StateShapeMismatch) {
  Tensor a({1, 2}, 0.0);
  std::vector<Tensor*> params = {&a};
  AdamState state;
  state.step = 1;
  state.m = {{0.0}};
  state.v = {{0.0}};
  EXPECT_THROW(adam_step(params, state, AdamConfig{}), ShapeMismatch);
}

TEST(Determinism, ReplayIsBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(77);
    Tensor x = random_tensor({6, 3}, rng), wx = random_tensor({3, 8}, rng), wh = random_tensor({2, 8}, rng),
           b = random_tensor({1, 8}, rng);
    Tape tape;
    Var hs = lstm(tape.constant(x), tape.parameter(wx), tape.parameter(wh), tape.parameter(b));
    Var l = sum(softmax(hs, 1));
    tape.backward(l);
    std::vector<double> out(wx.grad().begin(), wx.grad().end());
    out.push_back(l.item());
    return out;
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace vmr::ad
