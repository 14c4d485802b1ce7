#include <doctest.h>

#include <random>

#include "asda/gradcheck.hpp"
#include "asda/ops.hpp"

using namespace asda;

namespace {
Tensor rnd(std::vector<std::size_t> shape, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  return Tensor::randn(std::move(shape), rng, scale);
}
}  // namespace

TEST_CASE("grad_check rejects non-scalar objectives and bad steps") {
  auto ident = [](const std::vector<Tensor>& xs) { return add(xs[0], xs[0]); };
  CHECK_THROWS_AS(grad_check(ident, {rnd({2, 2}, 1)}), std::invalid_argument);

  auto ok = [](const std::vector<Tensor>& xs) { return sum_all(xs[0]); };
  GradCheckOptions bad;
  bad.step = 0.0;
  CHECK_THROWS_AS(grad_check(ok, {rnd({2, 2}, 1)}, bad), std::invalid_argument);
}

TEST_CASE("quadratic minimum has exactly zero analytic gradient") {
  Tensor c = rnd({1, 8}, 7);
  Tensor x = c.detach();
  x.set_requires_grad(true);
  Tensor loss = l2_norm_squared(subtract(x, c));
  backward(loss);
  for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("per-primitive gradient checks") {
  const double tol = 1e-6;

  SUBCASE("sum of gelu") {
    auto f = [](const std::vector<Tensor>& xs) { return sum_all(gelu(xs[0])); };
    CHECK(grad_check(f, {rnd({1, 8}, 11)}) < tol);
  }
  SUBCASE("matmul + transpose") {
    auto f = [](const std::vector<Tensor>& xs) {
      return l2_norm_squared(matmul(xs[0], transpose(xs[1])));
    };
    CHECK(grad_check(f, {rnd({3, 4}, 21), rnd({5, 4}, 22)}) < tol);
  }
  SUBCASE("add, subtract, scalar multiply") {
    auto f = [](const std::vector<Tensor>& xs) {
      return mean_all(scalar_multiply(subtract(add(xs[0], xs[1]), xs[2]), 1.7));
    };
    CHECK(grad_check(f, {rnd({4, 3}, 31), rnd({4, 3}, 32), rnd({4, 3}, 33)}) < tol);
  }
  SUBCASE("row softmax") {
    auto f = [](const std::vector<Tensor>& xs) {
      return l2_norm_squared(row_softmax(xs[0]));
    };
    CHECK(grad_check(f, {rnd({4, 6}, 41, 2.0)}) < tol);
  }
  SUBCASE("layer norm, plain and affine") {
    auto f = [](const std::vector<Tensor>& xs) { return l2_norm_squared(layer_norm(xs[0])); };
    CHECK(grad_check(f, {rnd({3, 8}, 51, 2.0)}) < tol);
    auto g = [](const std::vector<Tensor>& xs) {
      return l2_norm_squared(layer_norm_affine(xs[0], xs[1], xs[2]));
    };
    CHECK(grad_check(g, {rnd({3, 8}, 52, 2.0), rnd({1, 8}, 53), rnd({1, 8}, 54)}) < tol);
  }
  SUBCASE("reductions") {
    auto f = [](const std::vector<Tensor>& xs) {
      return add(mean_all(xs[0]), l2_norm_squared(mean_over_rows(xs[0])));
    };
    CHECK(grad_check(f, {rnd({5, 4}, 61)}) < tol);
  }
  SUBCASE("slicing and concatenation") {
    auto f = [](const std::vector<Tensor>& xs) {
      Tensor joined = concat_cols({slice_rows(xs[0], 0, 2), slice_rows(xs[0], 2, 4)});
      return l2_norm_squared(concat_rows({joined, slice_cols(joined, 0, 8)}));
    };
    CHECK(grad_check(f, {rnd({4, 4}, 71)}) < tol);
  }
  SUBCASE("gather and scatter") {
    std::vector<std::uint8_t> keep = {1, 0, 1, 0, 1, 0};
    auto f = [keep](const std::vector<Tensor>& xs) {
      Tensor vis = gather_rows(xs[0], {0, 2, 4});
      return l2_norm_squared(scatter_rows(vis, keep, xs[1]));
    };
    CHECK(grad_check(f, {rnd({6, 3}, 81), rnd({6, 3}, 82)}) < tol);
  }
  SUBCASE("conv2d dense, grouped, depthwise, strided") {
    auto make_f = [](std::size_t stride, std::size_t padding, std::size_t groups) {
      return [stride, padding, groups](const std::vector<Tensor>& xs) {
        return l2_norm_squared(conv2d(xs[0], xs[1], xs[2], stride, padding, groups));
      };
    };
    CHECK(grad_check(make_f(1, 1, 1), {rnd({4, 5, 5}, 91), rnd({4, 4, 3, 3}, 92), rnd({4}, 93)}) < tol);
    CHECK(grad_check(make_f(1, 1, 2), {rnd({4, 5, 5}, 94), rnd({4, 2, 3, 3}, 95), rnd({4}, 96)}) < tol);
    CHECK(grad_check(make_f(1, 1, 4), {rnd({4, 5, 5}, 97), rnd({4, 1, 3, 3}, 98), rnd({4}, 99)}) < tol);
    CHECK(grad_check(make_f(2, 0, 1), {rnd({2, 7, 7}, 90), rnd({3, 2, 3, 3}, 89), rnd({3}, 88)}) < tol);
  }
  SUBCASE("classification losses") {
    std::vector<std::size_t> labels = {0, 2, 1};
    auto f = [labels](const std::vector<Tensor>& xs) {
      return softmax_cross_entropy(xs[0], labels);
    };
    CHECK(grad_check(f, {rnd({3, 3}, 101, 2.0)}) < tol);
    Tensor targets = Tensor::from_data({2, 3}, {1, 0, 1, 0, 1, 0});
    auto g = [targets](const std::vector<Tensor>& xs) { return sigmoid_bce(xs[0], targets); };
    CHECK(grad_check(g, {rnd({2, 3}, 102, 2.0)}) < tol);
  }
  SUBCASE("row bias broadcast") {
    auto f = [](const std::vector<Tensor>& xs) {
      return l2_norm_squared(add_row_bias(xs[0], xs[1]));
    };
    CHECK(grad_check(f, {rnd({5, 4}, 111), rnd({1, 4}, 112)}) < tol);
  }
}

TEST_CASE("coordinate sampling produces the same verdict") {
  auto f = [](const std::vector<Tensor>& xs) {
    return l2_norm_squared(row_softmax(matmul(xs[0], xs[1])));
  };
  GradCheckOptions opts;
  opts.max_coords_per_tensor = 6;
  CHECK(grad_check(f, {rnd({4, 5}, 121), rnd({5, 4}, 122)}, opts) < 1e-6);
}
