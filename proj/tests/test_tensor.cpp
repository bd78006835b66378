#include <cmath>
#include <random>

#include "doctest.h"
#include "hsc/tensor.hpp"

using namespace hsc;

namespace {

Tensor leaf1d(std::vector<double> v) {
  Shape s{static_cast<int>(v.size())};
  return Tensor::leaf(std::move(s), std::move(v));
}

}  // namespace

TEST_CASE("elementwise known values") {
  Tensor a = Tensor::constant({2}, {1, 2});
  Tensor b = Tensor::constant({2}, {3, 4});
  CHECK(mul(a, b).values() == std::vector<double>{3, 8});
  CHECK(add(a, b).values() == std::vector<double>{4, 6});
  CHECK(sub(a, b).values() == std::vector<double>{-2, -2});
  CHECK(divide(b, a).values() == std::vector<double>{3, 2});

  Tensor zero = Tensor::scalar(0.0);
  CHECK(add(a, zero).values() == a.values());  // identity, bit exact
  Tensor map = Tensor::constant({2, 2}, {1, 2, 3, 4});
  CHECK(mul(map, zero).values() == std::vector<double>{0, 0, 0, 0});  // annihilator
}

TEST_CASE("trailing-dimension broadcast") {
  Tensor a = Tensor::constant({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor row = Tensor::constant({3}, {10, 20, 30});
  CHECK(add(a, row).values() == std::vector<double>{11, 22, 33, 14, 25, 36});

  // extent-1 broadcast in the middle
  Tensor x = Tensor::constant({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor m = Tensor::constant({2, 1, 2}, {1, 10, 100, 1000});
  CHECK(mul(x, m).values() == std::vector<double>{1, 20, 3, 40, 500, 6000, 700, 8000});

  CHECK_THROWS_WITH_AS(add(a, Tensor::constant({2}, {1, 1})),
                       doctest::Contains("[2,3]"), TensorError);
}

TEST_CASE("broadcast gradients sum over broadcast sites") {
  Tensor a = leaf1d({1, 2, 3, 4});
  Tensor b = Tensor::leaf({1}, {3});
  Tensor loss = sum_all(mul(reshape(a, {2, 2}), b));
  backward(loss);
  CHECK(a.grad() == std::vector<double>{3, 3, 3, 3});
  CHECK(b.grad() == std::vector<double>{10});
}

TEST_CASE("matmul") {
  Tensor a = Tensor::constant({1, 2}, {1, 2});
  Tensor b = Tensor::constant({2, 1}, {3, 4});
  CHECK(matmul(a, b).values() == std::vector<double>{11});

  Tensor eye = Tensor::constant({2, 2}, {1, 0, 0, 1});
  Tensor x = Tensor::constant({2, 2}, {5, 6, 7, 8});
  CHECK(matmul(eye, x).values() == x.values());

  CHECK_THROWS_AS(matmul(a, a), TensorError);

  // grad of sum(A*B) wrt A is ones * B^T
  Tensor A = Tensor::leaf({2, 3}, {0.1, -0.2, 0.3, 0.4, -0.5, 0.6});
  Tensor B = Tensor::constant({3, 2}, {1, 2, 3, 4, 5, 6});
  backward(sum_all(matmul(A, B)));
  CHECK(A.grad() == std::vector<double>{3, 7, 11, 3, 7, 11});
}

TEST_CASE("backward accumulation semantics") {
  Tensor w = Tensor::leaf({1}, {2.0});
  Tensor x1 = Tensor::constant({1}, {3.0});
  Tensor x2 = Tensor::constant({1}, {5.0});
  Tensor loss = add(mul(w, x1), mul(w, x2));
  backward(loss);
  CHECK(w.grad() == std::vector<double>{8.0});  // x1 + x2: shared-use sum rule
  backward(loss);
  CHECK(w.grad() == std::vector<double>{16.0});  // accumulates without reset
  w.zero_grad();
  backward(loss);
  CHECK(w.grad() == std::vector<double>{8.0});

  CHECK_THROWS_AS(backward(Tensor::leaf({2}, {1, 2})), TensorError);
  backward(sum_all(Tensor::constant({2}, {1, 2})));  // constant graph: no-op
}

TEST_CASE("finite_diff_check closed forms") {
  Tensor x = leaf1d({1, 2});
  auto quad = [&] { return sum_all(mul(x, x)); };
  FdResult r = finite_diff_check(quad, x, 1e-5);
  CHECK(r.max_rel_err < 1e-7);
  x.zero_grad();
  backward(quad());
  CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));

  auto lin = [&] { return sum_all(mul_scalar(x, 3.0)); };
  CHECK(finite_diff_check(lin, x, 1e-5).max_rel_err < 1e-10);

  CHECK_THROWS_AS(finite_diff_check(quad, x, 0.0), TensorError);
}

TEST_CASE("unary op gradients") {
  std::mt19937_64 rng(7);
  Tensor x = leaf1d(uniform_init(6, rng, 0.2, 2.0));  // positive, away from kinks
  auto check = [&](const std::function<Tensor()>& f) {
    CHECK(finite_diff_check(f, x, 1e-5).max_rel_err < 1e-5);
  };
  check([&] { return sum_all(relu(x)); });
  check([&] { return sum_all(sigmoid(x)); });
  check([&] { return sum_all(tanh_op(x)); });
  check([&] { return sum_all(exp_op(x)); });
  check([&] { return sum_all(log_op(x)); });
  check([&] { return sum_all(pow_scalar(x, 1.7)); });
  check([&] { return sum_all(clamp_min(x, 0.1)); });
  check([&] { return mean_all(mul(x, x)); });
  check([&] { return sum_all(sum_lastdim(reshape(x, {2, 3}))); });
  check([&] { return sum_all(mean_channelwise(reshape(x, {3, 2}))); });
  check([&] { return sum_all(divide(Tensor::constant({6}, {1, 1, 1, 1, 1, 1}), x)); });
  // weighted sum: plain sum of softmax rows is identically 1 per row
  Tensor sw = Tensor::constant({2, 3}, {0.2, 1.4, -0.7, 2.0, 0.3, -1.1});
  check([&] { return sum_all(mul(softmax_lastdim(reshape(x, {2, 3})), sw)); });
  check([&] { return sum_all(transpose2d(reshape(x, {2, 3}))); });
}

TEST_CASE("relu subgradient at zero is zero") {
  Tensor x = leaf1d({0.0, -1.0, 2.0});
  backward(sum_all(relu(x)));
  CHECK(x.grad() == std::vector<double>{0, 0, 1});
}

TEST_CASE("softmax rows") {
  Tensor z = Tensor::constant({2, 2}, {0, 0, 3, 1});
  Tensor p = softmax_lastdim(z);
  CHECK(p.values()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.values()[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.values()[2] + p.values()[3] == doctest::Approx(1.0).epsilon(1e-12));
  for (double v : p.values()) CHECK(v >= 0.0);
}

TEST_CASE("shape ops") {
  Tensor a = Tensor::leaf({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = reshape(a, {3, 2});
  CHECK(r.values() == a.values());
  CHECK(r.node()->value == a.node()->value);  // shared buffer view
  CHECK_THROWS_AS(reshape(a, {4, 2}), TensorError);

  Tensor s = slice(a, 1, 1, 2);
  CHECK(s.values() == std::vector<double>{2, 3, 5, 6});
  CHECK_THROWS_AS(slice(a, 1, 2, 2), TensorError);

  Tensor c = concat(1, {slice(a, 1, 0, 1), slice(a, 1, 1, 2)});
  CHECK(c.values() == a.values());
  backward(sum_all(c));
  CHECK(a.grad() == std::vector<double>(6, 1.0));

  Tensor parts = concat(0, {Tensor::constant({1, 2}, {1, 2}), Tensor::constant({2, 2}, {3, 4, 5, 6})});
  CHECK(parts.shape() == Shape{3, 2});
  CHECK(parts.values() == std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK_THROWS_AS(concat(0, {a, Tensor::constant({2, 2}, {1, 2, 3, 4})}), TensorError);

  Tensor d = detach(a);
  CHECK_FALSE(d.needs_grad());
  CHECK(d.values() == a.values());
  a.zero_grad();
  backward(sum_all(mul(d, d)));  // no gradient flows into a
  CHECK(a.grad() == std::vector<double>(6, 0.0));
}

TEST_CASE("slice/concat gradient routing") {
  Tensor a = Tensor::leaf({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  backward(sum_all(slice(a, 1, 1, 2)));
  CHECK(a.grad() == std::vector<double>{0, 1, 1, 0, 0, 1, 1, 0});

  std::mt19937_64 rng(3);
  Tensor x = Tensor::leaf({2, 3}, uniform_init(6, rng, -1, 1));
  auto f = [&] {
    Tensor c = concat(0, {mul(x, x), x});
    return sum_all(mul(c, c));
  };
  CHECK(finite_diff_check(f, x, 1e-5).max_rel_err < 1e-5);
}

TEST_CASE("parameter registry and share groups") {
  ParamRegistry reg;
  std::mt19937_64 rng(1);
  auto w1 = reg.create("layer1.w", {2, 2}, uniform_init(4, rng, -1, 1), "block.w1");
  auto w2 = reg.create("layer1_reuse.w", {2, 2}, {}, "block.w1");
  auto w3 = reg.create("layer2.w", {2, 2}, uniform_init(4, rng, -1, 1));
  CHECK(reg.name_count() == 3);
  CHECK(reg.distinct_count() == 2);
  CHECK(reg.total_weights() == 8);
  CHECK(w1->data().data() == w2->data().data());   // aliased value buffer
  CHECK(w1->grad().data() == w2->grad().data());   // aliased grad buffer
  CHECK(w1->leaf != w2->leaf);                     // distinct leaf nodes
  CHECK(w3->data().data() != w1->data().data());

  CHECK_THROWS_AS(reg.create("layer1.w", {2, 2}, zeros_init(4)), TensorError);
  CHECK_THROWS_AS(reg.create("bad.w", {3, 3}, zeros_init(9), "block.w1"), TensorError);

  // gradient of aliased parameters sums across both use sites
  Tensor x = Tensor::constant({2, 2}, {1, 0, 0, 1});
  backward(sum_all(add(matmul(x, w1->tensor()), matmul(x, w2->tensor()))));
  for (double g : w1->grad()) CHECK(g == doctest::Approx(2.0).epsilon(1e-15));
  reg.zero_grad();
  for (double g : w2->grad()) CHECK(g == 0.0);
}

TEST_CASE("shared-parameter gradient equals clone sum") {
  std::mt19937_64 rng(11);
  auto init = uniform_init(4, rng, -1, 1);
  auto xv = uniform_init(4, rng, -1, 1);
  Tensor x = Tensor::constant({2, 2}, xv);

  ParamRegistry reg;
  auto shared = reg.create("w", {2, 2}, init);
  Tensor w = shared->tensor();
  backward(mean_all(mul(matmul(x, w), tanh_op(matmul(x, w)))));

  Tensor w1 = Tensor::leaf({2, 2}, init);
  Tensor w2 = Tensor::leaf({2, 2}, init);
  backward(mean_all(mul(matmul(x, w1), tanh_op(matmul(x, w2)))));
  for (int i = 0; i < 4; ++i)
    CHECK(shared->grad()[i] == doctest::Approx(w1.grad()[i] + w2.grad()[i]).epsilon(1e-12));
}

TEST_CASE("determinism of forward evaluation") {
  std::mt19937_64 rng(5);
  auto v = uniform_init(12, rng, -2, 2);
  auto run = [&] {
    Tensor x = Tensor::constant({3, 4}, v);
    return softmax_lastdim(matmul(x, transpose2d(x))).values();
  };
  CHECK(run() == run());
}

TEST_CASE("factory validation") {
  CHECK_THROWS_AS(Tensor::constant({2}, {1.0}), TensorError);
  CHECK_THROWS_AS(Tensor::leaf({2, 0}, {}), TensorError);
  CHECK_THROWS_AS(Tensor::scalar(1.0).grad(), TensorError);
  CHECK_THROWS_AS(Tensor::constant({2}, {1, 2}).item(), TensorError);
  CHECK(Tensor::scalar(4.5).item() == 4.5);
  CHECK(Tensor::fill({2, 2}, 7.0).values() == std::vector<double>(4, 7.0));
}
