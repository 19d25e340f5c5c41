#include <doctest.h>

#include <cmath>
#include <random>

#include "altpp/autodiff.hpp"
#include "altpp/errors.hpp"
#include "altpp/gradcheck.hpp"
#include "altpp/network.hpp"
#include "altpp/rng.hpp"

using namespace altpp;

namespace {

Tensor randn(Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  return standard_normal(rng, std::move(shape));
}

}  // namespace

TEST_CASE("tensor construction and shape checks") {
  Tensor t(Shape{2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.at(1, 2) == 1.5);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::matrix({{1, 2}, {3}}), DimensionError);
  CHECK(Tensor::scalar(4).item() == 4);
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(m.row(1) == Tensor::vector({3, 4}));
  CHECK(m.reshaped({4}).values() == std::vector<double>{1, 2, 3, 4});
  CHECK_THROWS_AS(m.reshaped({3}), DimensionError);
}

TEST_CASE("linear layer examples") {
  Tape tape;
  auto run = [&](Tensor in, Tensor w, Tensor b) {
    return ops::linear(tape.constant(std::move(in)), tape.constant(std::move(w)), tape.constant(std::move(b))).value();
  };
  CHECK(run(Tensor::matrix({{1, 2}}), Tensor::matrix({{1, 0}, {0, 1}}), Tensor::vector({0, 0})) ==
        Tensor::matrix({{1, 2}}));
  CHECK(run(Tensor::matrix({{1, 1}}), Tensor::matrix({{2, 0}, {0, 3}}), Tensor::vector({1, 1})) ==
        Tensor::matrix({{3, 4}}));
  CHECK_THROWS_AS(run(Tensor::matrix({{1, 1}}), Tensor(Shape{3, 2}), Tensor::vector({0, 0})), DimensionError);
}

TEST_CASE("activations") {
  Tape tape;
  const Var x = tape.constant(Tensor::vector({0.0, 50.0, -50.0, 1.0}));
  const Tensor th = ops::tanh(x).value();
  CHECK(th[0] == 0.0);
  CHECK(th[1] <= 1.0);
  CHECK(th[2] >= -1.0);
  const Tensor ge = ops::gelu(x).value();
  CHECK(ge[0] == 0.0);
  CHECK(ge[3] == doctest::Approx(0.8411920).epsilon(1e-6));
}

TEST_CASE("backward on a polynomial and unreachable leaves") {
  Tape tape;
  const Var w = tape.parameter(Tensor::scalar(3.0));
  const Var unused = tape.parameter(Tensor::vector({1.0, 2.0}));
  tape.backward(ops::mul(w, w));
  CHECK(tape.grad(w).item() == 6.0);
  CHECK(tape.grad(unused) == Tensor(Shape{2}, 0.0));

  Tape tape2;
  const Var v = tape2.parameter(Tensor::vector({1.0, 2.0}));
  CHECK_THROWS_AS(tape2.backward(ops::scale(v, 2.0)), ContractError);
}

TEST_CASE("non-finite forward values raise NumericError") {
  Tape tape;
  const Var big = tape.constant(Tensor::scalar(1e200));
  CHECK_THROWS_AS(ops::mul(big, big), NumericError);
}

TEST_CASE("gradient check: quadratic and constant objectives") {
  const auto quad = finite_difference_check(
      [](Tape&, const std::vector<Var>& p) { return ops::sum_squares(p[0]); }, {randn({3, 2}, 1)});
  CHECK(quad.max_rel_error <= 1e-8);
  const auto constant = finite_difference_check(
      [](Tape& t, const std::vector<Var>&) { return t.constant(Tensor::scalar(2.5)); }, {randn({4}, 2)});
  CHECK(constant.max_rel_error == 0.0);
}

// Every differentiable op checked on random inputs.
TEST_CASE("gradient check: property over ops and random inputs") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    const Tensor x = randn({3, 4}, derive_seed(seed, 1));
    const Tensor w = randn({4, 2}, derive_seed(seed, 2));
    const Tensor b = randn({2}, derive_seed(seed, 3));
    const Tensor y = randn({3, 2}, derive_seed(seed, 4));
    const auto r = finite_difference_check(
        [](Tape&, const std::vector<Var>& p) {
          const Var h = ops::tanh(ops::linear(p[0], p[1], p[2]));
          const Var g = ops::gelu(ops::matmul(p[0], p[1]));
          const Var both = ops::concat_cols(ops::mul(h, p[3]), ops::sub(g, ops::scale(p[3], 0.5)));
          return ops::add_n({ops::sum_squares(ops::add(both, both)), ops::sum(h)});
        },
        {x, w, b, y});
    CHECK(r.max_rel_error <= 1e-6);
  }
}

TEST_CASE("self-attention examples") {
  const Tensor x = Tensor::matrix({{0.5, -1.0, 2.0}});
  const Tensor wv = randn({3, 3}, 7);
  // One token: the attention weight is 1 and the output is X + X Wv.
  const Tensor out = self_attention_forward(x, randn({3, 3}, 5), randn({3, 3}, 6), wv);
  for (std::size_t j = 0; j < 3; ++j) {
    double v = x[j];
    for (std::size_t i = 0; i < 3; ++i) v += x[i] * wv.at(i, j);
    CHECK(out[j] == doctest::Approx(v).epsilon(1e-14));
  }
  CHECK(attention_weights(x, randn({3, 3}, 5), randn({3, 3}, 6)) == Tensor::matrix({{1.0}}));

  const Tensor seq = randn({4, 3}, 9);
  const Tensor zero(Shape{3, 3});
  CHECK(self_attention_forward(seq, zero, zero, zero) == seq);

  const Tensor a = attention_weights(seq, randn({3, 3}, 10), randn({3, 3}, 11));
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += a.at(r, c);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(self_attention_forward(Tensor(Shape{2, 0}), Tensor(Shape{0, 0}), Tensor(Shape{0, 0}),
                                         Tensor(Shape{0, 0})),
                  DimensionError);
}

TEST_CASE("gradient check: self-attention and GELU networks") {
  const auto r = finite_difference_check(
      [](Tape&, const std::vector<Var>& p) {
        return ops::sum_squares(ops::self_attention(p[0], 3, p[1], p[2], p[3]));
      },
      {randn({2, 6}, 21), randn({2, 2}, 22), randn({2, 2}, 23), randn({2, 2}, 24)});
  CHECK(r.max_rel_error <= 1e-6);

  for (const NetworkSpec& spec : {attention_spec(3, 8, 2, 2), mlp_spec(3, 5, 2, 2, Activation::kGelu)}) {
    const Network net{spec, init_parameters(spec, 31)};
    std::vector<Tensor> params;
    for (const auto& t : net.params.tensors) params.push_back(t.value);
    const Tensor input = randn({2, 3}, 32);
    const auto check = finite_difference_check(
        [&](Tape& tape, const std::vector<Var>& leaves) {
          const BoundNetwork bn(spec, leaves);
          return ops::sum_squares(bn.forward(tape.constant(input)));
        },
        params);
    CHECK(check.max_rel_error <= 1e-3);
  }
}

TEST_CASE("network spec validation and layout") {
  CHECK_THROWS_AS(mlp_spec(0, 4, 1).validate(), DimensionError);
  CHECK_THROWS_AS(attention_spec(2, 10, 1, 4).validate(), Error);  // 10 not divisible by 4 tokens
  const auto p = zero_parameters(mlp_spec(3, 4, 2, 2));
  REQUIRE(p.size() == 6);
  CHECK(p.tensors[0].name == "hidden0.weight");
  CHECK(p.tensors[0].value.shape() == Shape{3, 4});
  CHECK(p.tensors[4].value.shape() == Shape{4, 2});
  CHECK(p.count() == 3 * 4 + 4 + 4 * 4 + 4 + 4 * 2 + 2);
  CHECK(parse_network_kind(to_string(NetworkKind::kSelfAttention)) == NetworkKind::kSelfAttention);
  CHECK_THROWS_AS(parse_activation("relu6"), ConfigError);
}

TEST_CASE("zero-initialized MLP outputs zero") {
  const NetworkSpec spec = mlp_spec(4, 8, 3);
  const Network net{spec, zero_parameters(spec)};
  CHECK(network_forward(net, randn({5, 4}, 3)) == Tensor(Shape{5, 3}, 0.0));
}

TEST_CASE("initialization is deterministic with fan-in variance") {
  const NetworkSpec spec = mlp_spec(50, 200, 10, 1);
  CHECK(init_parameters(spec, 4) == init_parameters(spec, 4));
  CHECK_FALSE(init_parameters(spec, 4) == init_parameters(spec, 5));
  const auto p = init_parameters(spec, 4);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Tensor& t = p[i];
    if (t.rank() == 1) {
      CHECK(t == Tensor(t.shape(), 0.0));
      continue;
    }
    double ss = 0.0;
    for (double v : t.values()) ss += v * v;
    const double var = ss / static_cast<double>(t.size());
    CHECK(var == doctest::Approx(1.0 / static_cast<double>(t.dim(0))).epsilon(0.2));
  }
}

TEST_CASE("depth-1 MLP equals readout(tanh(linear))") {
  const NetworkSpec spec = mlp_spec(2, 3, 1, 1);
  const Network net{spec, init_parameters(spec, 8)};
  const Tensor x = Tensor::matrix({{0.3, -0.7}});
  const auto& p = net.params;
  double out = p[3][0];
  for (std::size_t h = 0; h < 3; ++h) {
    double pre = p[1][h];
    for (std::size_t i = 0; i < 2; ++i) pre += x[i] * p[0].at(i, h);
    out += std::tanh(pre) * p[2].at(h, 0);
  }
  CHECK(network_forward(net, x)[0] == doctest::Approx(out).epsilon(1e-14));
}
