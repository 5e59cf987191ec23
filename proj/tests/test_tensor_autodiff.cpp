#include <doctest.h>

#include <cmath>
#include <numeric>

#include "madg/autodiff.hpp"
#include "madg/errors.hpp"
#include "madg/gradcheck.hpp"
#include "madg/optim.hpp"
#include "madg/rng.hpp"
#include "madg/tensor.hpp"

using namespace madg;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, CounterRng& rng, double scale = 1.0) {
  std::vector<double> v(r * c);
  for (double& x : v) x = scale * rng.normal();
  return Tensor({r, c}, std::move(v));
}

}  // namespace

TEST_CASE("tensor construction validates shape") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(Tensor({0, 2}, {}), DimensionError);
  CHECK_THROWS_AS(Tensor({}, {1.0}), DimensionError);
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  CHECK(m.at(1, 2) == 6.0);
  CHECK(Tensor::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(m.item(), DimensionError);
  CHECK_THROWS_AS(Tensor::vector({1, 2}).rows(), DimensionError);
}

TEST_CASE("matmul and add_bias forward") {
  Tape tape;
  const Var a = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  const Var b = tape.constant(Tensor::matrix(2, 2, {5, 6, 7, 8}));
  const Var c = tape.matmul(a, b);
  CHECK(tape.value(c) == Tensor::matrix(2, 2, {19, 22, 43, 50}));
  const Var d = tape.add_bias(c, tape.constant(Tensor::vector({1, -1})));
  CHECK(tape.value(d) == Tensor::matrix(2, 2, {20, 21, 44, 49}));
  CHECK_THROWS_AS(tape.matmul(a, tape.constant(Tensor::matrix(3, 1, {1, 2, 3}))), DimensionError);
  CHECK_THROWS_AS(tape.add_bias(a, tape.constant(Tensor::vector({1, 2, 3}))), DimensionError);
}

TEST_CASE("log_softmax is stable for large logits") {
  Tape tape;
  const Var x = tape.constant(Tensor::matrix(1, 3, {1000.0, 1000.0, 1000.0}));
  const Tensor& y = tape.value(tape.log_softmax(x));
  for (double v : y.data()) CHECK(std::abs(v + std::log(3.0)) < 1e-12);
}

TEST_CASE("gather_label rejects out-of-range labels") {
  Tape tape;
  const Var x = tape.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  const std::vector<std::size_t> bad{0, 2};
  CHECK_THROWS_AS(tape.gather_label(x, bad), IndexError);
  const std::vector<std::size_t> short_labels{0};
  CHECK_THROWS_AS(tape.gather_label(x, short_labels), DimensionError);
}

TEST_CASE("backward contracts") {
  Tape empty;
  CHECK_THROWS_AS(empty.backward(Var{0}), ContractError);
  Tape tape;
  Tensor w = Tensor::matrix(1, 2, {1, 2});
  w.set_requires_grad(true);
  const Var v = tape.leaf(w);
  CHECK_THROWS_AS(tape.backward(v), ContractError);
}

TEST_CASE("mean of scaled sum has the textbook gradient") {
  Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
  x.set_requires_grad(true);
  Tape tape;
  const Var v = tape.leaf(x);
  const Var loss = tape.mean(tape.scale(v, 3.0));
  CHECK(tape.value(loss).item() == doctest::Approx(7.5));
  tape.backward(loss);
  for (double g : x.grad()) CHECK(g == doctest::Approx(0.75));
}

TEST_CASE("gradients accumulate across two backward passes") {
  Tensor x = Tensor::vector({1.0, 2.0});
  x.set_requires_grad(true);
  for (int pass = 0; pass < 2; ++pass) {
    Tape tape;
    tape.backward(tape.mean(tape.leaf(x)));
  }
  CHECK(x.grad()[0] == doctest::Approx(1.0));
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("grl is identity forward and scales the gradient by -eta") {
  CounterRng rng(11);
  Tensor x = random_matrix(3, 4, rng);
  const std::vector<std::size_t> labels{0, 3, 2};
  auto grad_with = [&](bool reversed, double eta) {
    Tensor leaf = x;
    leaf.set_requires_grad(true);
    Tape tape;
    Var v = tape.leaf(leaf);
    if (reversed) v = tape.grl(v, eta);
    const Var loss = tape.mean(tape.gather_label(tape.log_softmax(v), labels));
    tape.backward(loss);
    return std::vector<double>(leaf.grad().begin(), leaf.grad().end());
  };
  for (double eta : {0.0, 0.5, 1.0, 2.0}) {
    const auto plain = grad_with(false, 0.0);
    const auto rev = grad_with(true, eta);
    for (std::size_t i = 0; i < plain.size(); ++i) CHECK(std::abs(rev[i] + eta * plain[i]) <= 1e-12);
  }
  Tape tape;
  const Var a = tape.constant(x);
  CHECK(tape.value(tape.grl(a, 3.0)) == x);
}

TEST_CASE("clamp gradient modes") {
  Tensor x = Tensor::vector({-2.0, 0.5, 2.0});
  for (ClampGrad mode : {ClampGrad::zero, ClampGrad::pass_through}) {
    Tensor leaf = x;
    leaf.set_requires_grad(true);
    Tape tape;
    const Var c = tape.clamp(tape.leaf(leaf), -1.0, 1.0, mode);
    CHECK(tape.value(c) == Tensor::vector({-1.0, 0.5, 1.0}));
    tape.backward(tape.mean(c));
    const double third = 1.0 / 3.0;
    CHECK(leaf.grad()[1] == doctest::Approx(third));
    const double edge = mode == ClampGrad::zero ? 0.0 : third;
    CHECK(leaf.grad()[0] == doctest::Approx(edge));
    CHECK(leaf.grad()[2] == doctest::Approx(edge));
  }
}

TEST_CASE("log1m_softmax_at matches the direct formula and clamps") {
  Tape tape;
  const Var x = tape.constant(Tensor::matrix(2, 3, {0.1, -0.4, 0.7, 40.0, 0.0, 0.0}));
  const std::vector<std::size_t> labels{2, 0};
  const Tensor& y = tape.value(tape.log1m_softmax_at(x, labels));
  const double z[3] = {0.1, -0.4, 0.7};
  const double total = std::exp(z[0]) + std::exp(z[1]) + std::exp(z[2]);
  CHECK(y[0] == doctest::Approx(std::log(1.0 - std::exp(z[2]) / total)).epsilon(1e-13));
  // Probability of label 0 in row 2 exceeds 1 - 1e-12, so the floor applies.
  CHECK(y[1] == doctest::Approx(std::log(1e-12)));
}

TEST_CASE("finite differences agree with every non-reversing op on random seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    CounterRng rng(derive_seed(seed, "gradcheck"));
    const std::size_t n = 2 + rng.below(3), m = 2 + rng.below(3), k = 2 + rng.below(3);
    std::vector<std::size_t> labels(n);
    for (auto& l : labels) l = rng.below(k);
    std::vector<Tensor> inputs{random_matrix(n, m, rng), random_matrix(m, k, rng), random_matrix(1, k, rng)};
    inputs[2] = Tensor::vector(std::vector<double>(inputs[2].data().begin(), inputs[2].data().end()));
    const LossBuilder build = [&](Tape& t, std::span<const Var> v) {
      const Var h = t.relu(t.add_bias(t.matmul(v[0], v[1]), v[2]));
      const Var ce = t.negate(t.mean(t.clamp(t.gather_label(t.log_softmax(h), labels), -50.0, 0.0)));
      const Var dis = t.mean(t.log1m_softmax_at(t.scale(h, 0.7), labels));
      return t.add(ce, t.scale(dis, -1.5));
    };
    const GradCheckResult res = check_gradients(build, inputs);
    CHECK(res.checked == n * m + m * k + k);
    CHECK(res.max_relative_error < 1e-5);
  }
}

TEST_CASE("sgd momentum update matches hand computation") {
  OptimizerState s(2, 0.1, 0.9, 0.01);
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{0.5, 0.25};
  sgd_momentum_step(s, p, g);
  // v = g + wd p; p -= lr v
  CHECK(s.velocity[0] == doctest::Approx(0.51));
  CHECK(p[0] == doctest::Approx(1.0 - 0.051));
  sgd_momentum_step(s, p, g);
  const double v1 = 0.9 * 0.51 + 0.5 + 0.01 * (1.0 - 0.051);
  CHECK(s.velocity[0] == doctest::Approx(v1));
  CHECK(p[0] == doctest::Approx(1.0 - 0.051 - 0.1 * v1));
  std::vector<double> wrong{1.0};
  CHECK_THROWS_AS(sgd_momentum_step(s, wrong, g), DimensionError);
  CHECK_THROWS_AS(OptimizerState(2, 0.1, 1.0, 0.0), ContractError);
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  OptimizerState s(3, 0.0, 0.9, 0.0);
  std::vector<double> p{0.1, -0.2, 0.3};
  const auto before = p;
  sgd_momentum_step(s, p, std::vector<double>{1.0, 2.0, 3.0});
  CHECK(p == before);
}

TEST_CASE("counter rng is deterministic and splittable") {
  CounterRng a(42), b(42), c(derive_seed(42, "data"));
  for (int i = 0; i < 10; ++i) CHECK(a() == b());
  CHECK(CounterRng(42)() != c());
  CHECK(derive_seed(1, "sigma") != derive_seed(1, "init"));
  CounterRng r(5);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) sum += r.normal();
  CHECK(std::abs(sum / 20000.0) < 0.03);
  for (int i = 0; i < 1000; ++i) CHECK(r.below(7) < 7);
}
