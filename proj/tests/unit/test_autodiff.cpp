#include <cmath>
#include <numbers>

#include "doctest.h"
#include "lno/autodiff.hpp"
#include "lno/error.hpp"
#include "lno/gradcheck.hpp"
#include "lno/rng.hpp"

using namespace lno;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = scale * rng.uniform(-1.0, 1.0);
  return t;
}

// Tanh-approximation GELU in long double.
long double gelu_oracle(long double x) {
  const long double c = std::sqrt(2.0L / std::numbers::pi_v<long double>);
  return 0.5L * x * (1.0L + std::tanh(c * (x + 0.044715L * x * x * x)));
}

}  // namespace

TEST_CASE("softmax examples") {
  const Tensor z = softmax_last_axis(Tensor::matrix(1, 4));
  for (double v : z.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  const Tensor two = softmax_last_axis(Tensor::matrix(1, 2, {0.0, std::log(2.0)}));
  CHECK(std::abs(two[0] - 1.0 / 3.0) < 1e-15);
  CHECK(std::abs(two[1] - 2.0 / 3.0) < 1e-15);
  const Tensor hot = softmax_last_axis(Tensor::matrix(1, 3, {0.5, 1e4 + 0.5, -2.0}));
  CHECK(std::abs(hot[1] - 1.0) < 1e-12);
  CHECK(hot[0] < 1e-12);
  CHECK(hot[2] < 1e-12);
}

TEST_CASE("softmax rows are stochastic over 1000 random rows") {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng.below(12);
    const Tensor row = random_tensor({1, n}, rng, 50.0);
    const Tensor p = softmax_last_axis(row);
    double s = 0.0;
    for (double v : p.data()) {
      REQUIRE(v >= 0.0);
      s += v;
    }
    REQUIRE(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("layer norm examples") {
  const Tensor gamma = Tensor::vector({1, 1, 1, 1}), beta = Tensor::vector({0, 0, 0, 0});
  const Tensor c = layer_norm(Tensor::matrix(1, 4, 3.0), gamma, beta);
  for (double v : c.data()) CHECK(v == 0.0);

  Rng rng(12);
  const Tensor x = random_tensor({5, 4}, rng, 3.0);
  const Tensor b = Tensor::vector({0.5, -1, 2, 0});
  const Tensor collapsed = layer_norm(x, Tensor::vector({0, 0, 0, 0}), b);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t j = 0; j < 4; ++j) CHECK(collapsed(r, j) == b[j]);

  const Tensor x2 = random_tensor({3, 9}, rng, 2.0);
  const Tensor ones(Shape{9}, 1.0), zeros(Shape{9}, 0.0);
  const Tensor y = layer_norm(x2, ones, zeros, 1e-5);
  for (std::size_t r = 0; r < 3; ++r) {
    // Two-pass oracle for the expected normalized values.
    double mean = 0.0;
    for (std::size_t j = 0; j < 9; ++j) mean += x2(r, j);
    mean /= 9.0;
    double var = 0.0;
    for (std::size_t j = 0; j < 9; ++j) var += (x2(r, j) - mean) * (x2(r, j) - mean);
    var /= 9.0;
    double ym = 0.0, yv = 0.0;
    for (std::size_t j = 0; j < 9; ++j) {
      CHECK(std::abs(y(r, j) - (x2(r, j) - mean) / std::sqrt(var + 1e-5)) < 1e-10);
      ym += y(r, j);
    }
    ym /= 9.0;
    for (std::size_t j = 0; j < 9; ++j) yv += (y(r, j) - ym) * (y(r, j) - ym);
    yv /= 9.0;
    CHECK(std::abs(ym) < 1e-10);
    CHECK(std::abs(yv - var / (var + 1e-5)) < 1e-10);
  }
}

TEST_CASE("gelu examples") {
  CHECK(gelu(0.0) == 0.0);
  for (double x : {10.0, 25.0, 100.0}) CHECK(std::abs(gelu(x) - x) / x < 1e-6);
  CHECK(std::abs(gelu(1.0) - static_cast<double>(gelu_oracle(1.0L))) < 1e-15);
  CHECK(std::abs(gelu(1.0) - 0.8411919906082768) < 1e-15);
  double prev = gelu(-0.75);
  for (int i = 1; i <= 1000; ++i) {
    const double x = -0.75 + i * 0.01;
    const double g = gelu(x);
    REQUIRE(g > prev);
    prev = g;
  }
}

TEST_CASE("backward analytic cases") {
  Tape tape;
  const Var w = tape.parameter(Tensor::vector({0.3, -2.0, 5.0}));
  tape.backward(sum(w));
  const Tensor gw = tape.grad(w);
  for (double g : gw.data()) CHECK(g == 1.0);

  Tape t2;
  const Var v = t2.parameter(Tensor::vector({1.0, 2.0}));
  t2.backward(sum(mul(v, v)));
  CHECK(t2.grad(v)[0] == 2.0);
  CHECK(t2.grad(v)[1] == 4.0);
}

TEST_CASE("backward contracts") {
  Tape tape;
  const Var a = tape.parameter(Tensor::matrix(2, 2, 1.0));
  const Var unused = tape.parameter(Tensor::matrix(3, 1, 7.0));
  const Var y = matmul(a, a);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
  tape.backward(sum(y));
  const Tensor gu = tape.grad(unused);
  for (double g : gu.data()) CHECK(g == 0.0);
  CHECK(tape.grad(unused).shape() == Shape{3, 1});
  // Each recorded op with a backward rule runs exactly once.
  CHECK(tape.backward_visits() == 2);
}

TEST_CASE("finite difference check on a quadratic") {
  Rng rng(13);
  const ScalarFunction f = [](Tape&, const std::vector<Var>& p) {
    return sum(mul(p[0], p[0]));
  };
  const GradCheckReport r = finite_diff_check(f, {random_tensor({7}, rng)});
  CHECK(r.coordinates_checked == 7);
  CHECK(r.max_relative_error < 1e-9);
}

TEST_CASE("every primitive matches central differences") {
  Rng rng(14);
  const ScalarFunction f = [](Tape& tape, const std::vector<Var>& p) {
    const Var h = gelu(add_row(matmul(p[0], p[1]), p[2]));                  // 4 x 5
    const Var n = layer_norm(h, p[3], p[4]);                                 // 4 x 5
    const Var s = softmax_last_axis(scale(n, 1.7));                          // 4 x 5
    const Var t = transpose(slice_cols(s, 1, 3));                            // 3 x 4
    const std::vector<Var> parts{matmul(t, n), sub(p[5], t)};               // 3 x 5, 3 x 4
    const Var c = concat_cols(parts);                                        // 3 x 9
    const Var q = sqrt(add(mul(c, c), tape.constant(Tensor::matrix(3, 9, 1.0))));
    return add(mean(q), sum(mul(p[5], p[5])));
  };
  const std::vector<Tensor> params{random_tensor({4, 3}, rng), random_tensor({3, 5}, rng),
                                   random_tensor({5}, rng),    random_tensor({5}, rng, 2.0),
                                   random_tensor({5}, rng),    random_tensor({3, 4}, rng)};
  GradCheckOptions opt;
  opt.max_coordinates = 200;
  const GradCheckReport r = finite_diff_check(f, params, opt);
  CHECK(r.max_relative_error < 1e-6);
}

TEST_CASE("random compositions match central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    // Two-column layer norm is input independent up to eps, which leaves nothing to check.
    const std::size_t r = 2 + rng.below(4), c = 3 + rng.below(4);
    const std::uint64_t pattern = rng.next_u64();
    const ScalarFunction f = [=](Tape&, const std::vector<Var>& p) {
      Var x = p[0];
      for (int step = 0; step < 4; ++step) {
        switch ((pattern >> (3 * step)) % 5) {
          case 0: x = gelu(x); break;
          case 1: x = softmax_last_axis(x); break;
          case 2: x = layer_norm(x, p[1], p[2]); break;
          case 3: x = matmul(x, p[3]); break;
          default: x = add(mul(x, p[4]), p[0]); break;
        }
      }
      return sum(mul(x, x));
    };
    const std::vector<Tensor> params{random_tensor({r, c}, rng), random_tensor({c}, rng, 2.0),
                                     random_tensor({c}, rng), random_tensor({c, c}, rng),
                                     random_tensor({r, c}, rng)};
    const GradCheckReport rep = finite_diff_check(f, params);
    INFO("seed " << seed << " param " << rep.worst_parameter << " analytic " << rep.worst_analytic << " numeric "
              << rep.worst_numeric);
    CHECK(rep.max_relative_error < 1e-4);
  }
}

TEST_CASE("forward evaluation is deterministic") {
  Rng rng(15);
  const Tensor x = random_tensor({6, 8}, rng);
  CHECK(bit_identical(softmax_last_axis(x), softmax_last_axis(x)));
  CHECK(bit_identical(gelu(x), gelu(x)));
}
