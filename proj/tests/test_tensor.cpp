#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "modgnn/nn.hpp"
#include "modgnn/rng.hpp"
#include "modgnn/tensor.hpp"

using namespace modgnn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false,
                     double scale = 1.0) {
  std::vector<double> v(detail::numel_of(shape));
  for (double& x : v) x = rng.uniform(-scale, scale);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// independent triple-loop reference product
std::vector<double> matmul_oracle(std::span<const double> a,
                                  std::span<const double> b, int m, int k,
                                  int n) {
  std::vector<double> c(std::size_t(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p)
        c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

Tensor identity_matrix(int n) {
  std::vector<double> v(std::size_t(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[std::size_t(i) * n + i] = 1.0;
  return Tensor({n, n}, std::move(v));
}

}  // namespace

TEST_CASE("matmul identity returns the other operand") {
  Rng rng(7);
  Tensor b = random_tensor({3, 4}, rng);
  Tensor out = matmul(identity_matrix(3), b);
  for (std::size_t i = 0; i < b.numel(); ++i)
    REQUIRE(out.data()[i] == b.data()[i]);
}

TEST_CASE("matmul 1x1") {
  Tensor a({1, 1}, {2.0});
  Tensor b({1, 1}, {3.0});
  REQUIRE(matmul(a, b).data()[0] == 6.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor({3, 3}, rng);
    Tensor b = random_tensor({3, 3}, rng);
    Tensor c = matmul(a, b);
    auto ref = matmul_oracle(a.data(), b.data(), 3, 3, 3);
    for (std::size_t i = 0; i < ref.size(); ++i)
      REQUIRE(std::abs(c.data()[i] - ref[i]) < 1e-12);
  }
}

TEST_CASE("matmul associativity with identity is exact") {
  Rng rng(3);
  Tensor a = random_tensor({4, 4}, rng);
  Tensor b = random_tensor({4, 5}, rng);
  Tensor lhs = matmul(matmul(a, identity_matrix(4)), b);
  Tensor rhs = matmul(a, b);
  for (std::size_t i = 0; i < lhs.numel(); ++i)
    REQUIRE(lhs.data()[i] == rhs.data()[i]);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Rng rng(1);
  Tensor a = random_tensor({2, 3}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  REQUIRE_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("backward of sum of squares is 2x") {
  Rng rng(5);
  Tensor x = random_tensor({4, 3}, rng, true);
  Tensor loss = sum_all(mul(x, x));
  loss.backward();
  for (std::size_t i = 0; i < x.numel(); ++i)
    REQUIRE(x.grad()[i] == Catch::Approx(2.0 * x.data()[i]).margin(1e-14));
}

TEST_CASE("loss independent of a leaf leaves its grad at zero") {
  Rng rng(6);
  Tensor x = random_tensor({2, 2}, rng, true);
  Tensor y = random_tensor({2, 2}, rng, true);
  Tensor loss = sum_all(mul(y, y));
  loss.backward();
  for (double g : x.grad()) REQUIRE(g == 0.0);
}

TEST_CASE("backward requires a scalar") {
  Rng rng(9);
  Tensor x = random_tensor({2, 2}, rng, true);
  Tensor y = mul(x, x);
  REQUIRE_THROWS_AS(y.backward(), std::invalid_argument);
}

TEST_CASE("grad accumulates additively across uses") {
  Tensor x({1}, {3.0}, true);
  Tensor two({1}, {2.0});
  // loss = x*x + 2x -> dloss = 2x + 2 = 8
  Tensor loss = sum_all(add(mul(x, x), mul(two, x)));
  loss.backward();
  REQUIRE(x.grad()[0] == Catch::Approx(8.0));
}

TEST_CASE("segment_sum and gather_rows round gradients correctly") {
  Rng rng(11);
  Tensor x = random_tensor({4, 2}, rng, true);
  Tensor g = gather_rows(x, {0, 2, 2, 3, 1});
  Tensor s = segment_sum(g, {0, 0, 1, 1, 1}, 2);
  REQUIRE(s.shape() == Shape{2, 2});
  // forward: seg0 = x0 + x2, seg1 = x2 + x3 + x1
  REQUIRE(s.data()[0] ==
          Catch::Approx(x.data()[0] + x.data()[4]).margin(1e-15));
  Tensor loss = sum_all(mul(s, s));
  loss.backward();
  // d/dx2 = 2*seg0 + 2*seg1 (row 2 feeds both segments)
  for (int j = 0; j < 2; ++j) {
    const double expect = 2.0 * s.data()[j] + 2.0 * s.data()[2 + j];
    REQUIRE(x.grad()[4 + j] == Catch::Approx(expect).margin(1e-12));
  }
}

TEST_CASE("every differentiable op passes a finite-difference check") {
  Rng rng(13);
  // scalar function mixing all ops: sum(tanh(A.B + b) * mask + relu(C - D))
  auto build_loss = [](const Tensor& a, const Tensor& b, const Tensor& bias,
                       const Tensor& c, const Tensor& d) {
    Tensor h = tanh(add_rowwise(matmul(a, b), bias));
    Tensor g = gather_rows(h, {1, 0, 2, 1});
    Tensor s = segment_sum(g, {0, 1, 1, 2}, 3);
    Tensor r = relu(sub(c, d));
    Tensor joined = concat_cols({s, r});
    Tensor scaled = scale_rows(scale(joined, 0.7), {1.0, -0.5, 2.0});
    return sum_all(mul(scaled, scaled));
  };
  Tensor a = random_tensor({3, 4}, rng, true);
  Tensor b = random_tensor({4, 2}, rng, true);
  Tensor bias = random_tensor({2}, rng, true);
  Tensor c = random_tensor({3, 3}, rng, true);
  Tensor d = random_tensor({3, 3}, rng, true);

  Tensor loss = build_loss(a, b, bias, c, d);
  loss.backward();

  const double h = 1e-5;
  auto check_param = [&](Tensor& t) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = t.data()[i];
      t.data()[i] = orig + h;
      const double up = build_loss(a, b, bias, c, d).item();
      t.data()[i] = orig - h;
      const double down = build_loss(a, b, bias, c, d).item();
      t.data()[i] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double ad = t.grad()[i];
      const double rel = std::abs(fd - ad) / std::max({1.0, std::abs(fd), std::abs(ad)});
      REQUIRE(rel < 1e-4);
    }
  };
  check_param(a);
  check_param(b);
  check_param(bias);
  check_param(c);
  check_param(d);
}

TEST_CASE("finiteness checks flag NaN when enabled") {
  const bool prev = finite_checks_enabled();
  finite_checks_enabled() = true;
  Tensor x({2}, {1.0, 2.0});
  x.data()[0] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(scale(x, 2.0), std::runtime_error);
  finite_checks_enabled() = prev;
}

TEST_CASE("no-grad mode records no graph") {
  Tensor x({2, 2}, {1, 2, 3, 4}, true);
  NoGradGuard ng;
  Tensor y = mul(x, x);
  REQUIRE_FALSE(y.requires_grad());
}
