#include <cmath>
#include <random>

#include "doctest.h"
#include "hsc/layers.hpp"
#include "oracles.hpp"

using namespace hsc;

namespace {

std::mt19937_64 rng_for(unsigned seed) { return std::mt19937_64(seed); }

double dot_all(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("conv_nd hand cases") {
  // [1,2,3] * [1,1], stride 1, no pad -> [3,5]
  ConvSpec s = make_conv_spec(1, {2}, 1, 1, {1}, Padding::none);
  Tensor x = Tensor::constant({1, 3, 1}, {1, 2, 3});
  Tensor w = Tensor::constant({2, 1, 1}, {1, 1});
  Tensor b = Tensor::constant({1}, {0});
  CHECK(conv_nd(s, w, b, x).values() == std::vector<double>{3, 5});

  // Dirac kernel, same padding -> identity
  ConvSpec s2 = make_conv_spec(2, {3, 3}, 1, 1, {1, 1}, Padding::same);
  auto rng = rng_for(1);
  Tensor img = Tensor::constant({1, 4, 4, 1}, uniform_init(16, rng, -1, 1));
  std::vector<double> dirac(9, 0.0);
  dirac[4] = 1.0;
  Tensor wd = Tensor::constant({3, 3, 1, 1}, dirac);
  CHECK(conv_nd(s2, wd, b, img).values() == img.values());

  CHECK_THROWS_AS(conv_nd(s, w, b, Tensor::constant({1, 3, 2}, zeros_init(6))), TensorError);
  CHECK_THROWS_AS(conv_nd(s, Tensor::constant({3, 1, 1}, {1, 1, 1}), b, x), TensorError);
  ConvSpec tight = make_conv_spec(1, {4}, 1, 1, {1}, Padding::none);
  CHECK_THROWS_AS(conv_nd(tight, Tensor::constant({4, 1, 1}, zeros_init(4)), b, x), TensorError);
}

TEST_CASE("conv_nd matches direct sum on 200 random instances") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> dims_d(1, 3), ext_d(1, 4), ch_d(1, 3), str_d(1, 2);
  std::uniform_int_distribution<int> pad_d(0, 1), n_d(1, 2);
  for (int trial = 0; trial < 200; ++trial) {
    const int dims = dims_d(rng);
    std::vector<int> in_sp(dims), kernel(dims), stride(dims);
    const Padding pad = pad_d(rng) ? Padding::same : Padding::none;
    for (int d = 0; d < dims; ++d) {
      in_sp[d] = ext_d(rng);
      kernel[d] = pad == Padding::none ? std::uniform_int_distribution<int>(1, in_sp[d])(rng)
                                       : ext_d(rng);
      stride[d] = str_d(rng);
    }
    const int ci = ch_d(rng), co = ch_d(rng), n = n_d(rng);
    ConvSpec spec = make_conv_spec(dims, kernel, ci, co, stride, pad);

    const auto wv = uniform_init(oracle::product(kernel) * ci * co, rng, -1, 1);
    const auto bv = uniform_init(co, rng, -1, 1);
    const auto xv = uniform_init(n * oracle::product(in_sp) * ci, rng, -1, 1);

    Shape xs{n};
    xs.insert(xs.end(), in_sp.begin(), in_sp.end());
    xs.push_back(ci);
    Shape ws(kernel.begin(), kernel.end());
    ws.push_back(ci);
    ws.push_back(co);

    Tensor out = conv_nd(spec, Tensor::constant(ws, wv), Tensor::constant({co}, bv),
                         Tensor::constant(xs, xv));
    const auto ref = oracle::brute_conv(spec, wv, bv, xv, n, in_sp);
    REQUIRE(out.values().size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(out.values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv_nd gradients") {
  std::mt19937_64 rng(7);
  ConvSpec spec = make_conv_spec(2, {2, 2}, 2, 3, {1, 2}, Padding::same);
  Tensor w = Tensor::leaf({2, 2, 2, 3}, uniform_init(24, rng, -1, 1));
  Tensor b = Tensor::leaf({3}, uniform_init(3, rng, -1, 1));
  Tensor x = Tensor::leaf({2, 3, 3, 2}, uniform_init(36, rng, -1, 1));
  auto f = [&] { return mean_all(mul(conv_nd(spec, w, b, x), conv_nd(spec, w, b, x))); };
  CHECK(finite_diff_check(f, w, 1e-5).max_rel_err < 1e-5);
  CHECK(finite_diff_check(f, b, 1e-5).max_rel_err < 1e-5);
  CHECK(finite_diff_check(f, x, 1e-5).max_rel_err < 1e-5);
}

TEST_CASE("transposed_conv_nd hand cases") {
  // stride-2 upsampling of [1] with kernel [1,1] -> [1,1]
  ConvSpec s = make_conv_spec(1, {2}, 1, 1, {2}, Padding::none);
  Tensor x = Tensor::constant({1, 1, 1}, {1});
  Tensor w = Tensor::constant({2, 1, 1}, {1, 1});
  Tensor b = Tensor::constant({1}, {0});
  Tensor y = transposed_conv_nd(s, w, b, x);
  CHECK(y.shape() == Shape{1, 2, 1});
  CHECK(y.values() == std::vector<double>{1, 1});

  // Dirac kernel, stride 1, same padding -> identity
  ConvSpec s2 = make_conv_spec(1, {3}, 1, 1, {1}, Padding::same);
  auto rng = rng_for(3);
  Tensor seq = Tensor::constant({1, 5, 1}, uniform_init(5, rng, -1, 1));
  Tensor wd = Tensor::constant({3, 1, 1}, {0, 1, 0});
  CHECK(transposed_conv_nd(s2, wd, b, seq).values() == seq.values());
}

TEST_CASE("transposed_conv_nd is the adjoint of conv_nd") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> dims_d(1, 3), out_d(1, 3), ker_d(1, 3), ch_d(1, 3), str_d(1, 2);
  std::uniform_int_distribution<int> pad_d(0, 1);
  for (int trial = 0; trial < 40; ++trial) {
    const int dims = dims_d(rng);
    std::vector<int> in_sp(dims), kernel(dims), stride(dims);
    const Padding pad = pad_d(rng) ? Padding::same : Padding::none;
    // choose extents consistent with the transposed size law so the pair of
    // maps is exactly adjoint
    for (int d = 0; d < dims; ++d) {
      const int o = out_d(rng);
      kernel[d] = ker_d(rng);
      stride[d] = str_d(rng);
      in_sp[d] = pad == Padding::same ? stride[d] * o : stride[d] * (o - 1) + kernel[d];
    }
    const int ci = ch_d(rng), co = ch_d(rng);
    ConvSpec spec = make_conv_spec(dims, kernel, ci, co, stride, pad);

    Shape xs{1};
    xs.insert(xs.end(), in_sp.begin(), in_sp.end());
    xs.push_back(ci);
    Shape ws(kernel.begin(), kernel.end());
    ws.push_back(ci);
    ws.push_back(co);
    Tensor w = Tensor::constant(ws, uniform_init(numel(ws), rng, -1, 1));
    Tensor zero_co = Tensor::fill({co}, 0.0);
    Tensor zero_ci = Tensor::fill({ci}, 0.0);
    Tensor x = Tensor::constant(xs, uniform_init(numel(xs), rng, -1, 1));

    Tensor cx = conv_nd(spec, w, zero_co, x);
    Tensor yr = Tensor::constant(cx.shape(), uniform_init(cx.size(), rng, -1, 1));
    Tensor ty = transposed_conv_nd(spec, w, zero_ci, yr);
    REQUIRE(ty.shape() == x.shape());
    const double lhs = dot_all(cx.values(), yr.values());
    const double rhs = dot_all(x.values(), ty.values());
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("transposed_conv_nd gradients") {
  std::mt19937_64 rng(8);
  ConvSpec spec = make_conv_spec(1, {3}, 2, 2, {2}, Padding::none);
  Tensor w = Tensor::leaf({3, 2, 2}, uniform_init(12, rng, -1, 1));
  Tensor b = Tensor::leaf({2}, uniform_init(2, rng, -1, 1));
  Tensor x = Tensor::leaf({1, 3, 2}, uniform_init(6, rng, -1, 1));
  auto f = [&] {
    Tensor y = transposed_conv_nd(spec, w, b, x);
    return mean_all(mul(y, y));
  };
  CHECK(finite_diff_check(f, w, 1e-5).max_rel_err < 1e-5);
  CHECK(finite_diff_check(f, b, 1e-5).max_rel_err < 1e-5);
  CHECK(finite_diff_check(f, x, 1e-5).max_rel_err < 1e-5);
}

TEST_CASE("depthwise conv matches per-channel direct sum") {
  std::mt19937_64 rng(17);
  const int ch = 3;
  const std::vector<int> in_sp{4, 3};
  auto wv = uniform_init(2 * 2 * ch, rng, -1, 1);
  auto bv = uniform_init(ch, rng, -1, 1);
  auto xv = uniform_init(2 * 12 * ch, rng, -1, 1);
  Tensor y = depthwise_conv_nd(2, Tensor::constant({2, 2, ch}, wv), Tensor::constant({ch}, bv),
                               Tensor::constant({2, 4, 3, ch}, xv), {1, 1}, Padding::same);

  ConvSpec per = make_conv_spec(2, {2, 2}, 1, 1, {1, 1}, Padding::same);
  for (int c = 0; c < ch; ++c) {
    std::vector<double> wc(4), xc(2 * 12);
    for (int t = 0; t < 4; ++t) wc[t] = wv[t * ch + c];
    for (int i = 0; i < 2 * 12; ++i) xc[i] = xv[i * ch + c];
    auto ref = oracle::brute_conv(per, wc, {bv[c]}, xc, 2, in_sp);
    for (std::size_t i = 0; i < ref.size(); ++i)
      CHECK(y.values()[i * ch + c] == doctest::Approx(ref[i]).epsilon(1e-12));
  }

  Tensor w = Tensor::leaf({2, 2, ch}, wv);
  Tensor x = Tensor::leaf({2, 4, 3, ch}, xv);
  Tensor b = Tensor::leaf({ch}, bv);
  auto f = [&] {
    Tensor out = depthwise_conv_nd(2, w, b, x, {1, 1}, Padding::same);
    return mean_all(mul(out, out));
  };
  CHECK(finite_diff_check(f, w, 1e-5).max_rel_err < 1e-5);
  CHECK(finite_diff_check(f, x, 1e-5).max_rel_err < 1e-5);
  CHECK(finite_diff_check(f, b, 1e-5).max_rel_err < 1e-5);
}

TEST_CASE("max_pool") {
  Tensor x = Tensor::constant({1, 2, 2, 1}, {1, 2, 3, 4});
  Tensor p = max_pool(x, {2, 2}, {2, 2});
  CHECK(p.shape() == Shape{1, 1, 1, 1});
  CHECK(p.values() == std::vector<double>{4});

  // ties route gradient to the first (row-major) maximum
  Tensor t = Tensor::leaf({1, 2, 2, 1}, {7, 7, 7, 7});
  backward(sum_all(max_pool(t, {2, 2}, {1, 1})));
  CHECK(t.grad() == std::vector<double>{1, 0, 0, 0});

  CHECK_THROWS_AS(max_pool(x, {3, 3}, {1, 1}), TensorError);

  std::mt19937_64 rng(23);
  Tensor z = Tensor::leaf({2, 5, 1}, {0.1, 0.9, 0.3, 0.8, 0.2, 0.7, 0.15, 0.85, 0.4, 0.6});
  auto f = [&] {
    Tensor y = max_pool(z, {2}, {2});
    return sum_all(mul(y, y));
  };
  CHECK(finite_diff_check(f, z, 1e-5).max_rel_err < 1e-5);
}

TEST_CASE("global_avg_pool") {
  Tensor x = Tensor::constant({1, 2, 2, 1}, {1, 2, 3, 4});
  CHECK(global_avg_pool(x).values() == std::vector<double>{2.5});
  Tensor c = Tensor::fill({2, 3, 3, 4}, 1.25);
  Tensor g = global_avg_pool(c);
  for (double v : g.values()) CHECK(v == doctest::Approx(1.25).epsilon(1e-15));

  auto rng = rng_for(4);
  Tensor l = Tensor::leaf({2, 3, 2}, uniform_init(12, rng, -1, 1));
  auto f = [&] {
    Tensor y = global_avg_pool(l);
    return sum_all(mul(y, y));
  };
  CHECK(finite_diff_check(f, l, 1e-5).max_rel_err < 1e-5);
}

TEST_CASE("batch_norm statistics and modes") {
  ParamRegistry reg;
  BatchNormState bn = make_batch_norm(reg, "bn", 1);
  Tensor x = Tensor::constant({2, 1}, {3, 7});  // mean 5, biased var 4
  Tensor y = batch_norm(bn, x);
  CHECK(y.values()[0] + y.values()[1] == doctest::Approx(0.0).epsilon(1e-9));
  const double sd = std::sqrt((y.values()[0] * y.values()[0] + y.values()[1] * y.values()[1]) / 2);
  CHECK(sd == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(bn.running.mean[0] == doctest::Approx(0.5).epsilon(1e-12));   // 0.9*0 + 0.1*5
  CHECK(bn.running.var[0] == doctest::Approx(1.3).epsilon(1e-12));    // 0.9*1 + 0.1*4

  CHECK_THROWS_AS(batch_norm(bn, Tensor::constant({1, 1}, {3})), TensorError);

  bn.training = false;
  bn.running.mean = {2.0};
  bn.running.var = {4.0};
  Tensor e = batch_norm(bn, Tensor::constant({1, 1}, {6}));
  CHECK(e.values()[0] == doctest::Approx((6.0 - 2.0) / std::sqrt(4.0 + bn.running.eps)).epsilon(1e-12));
}

TEST_CASE("batch_norm gradients") {
  std::mt19937_64 rng(31);
  Tensor x = Tensor::leaf({4, 3}, uniform_init(12, rng, -2, 2));
  Tensor gamma = Tensor::leaf({3}, {1.2, 0.8, 1.0});
  Tensor beta = Tensor::leaf({3}, {0.1, -0.2, 0.3});
  BatchNormRunning running;
  // per-position weights break the normalization invariance mean(y^2) ~ const,
  // keeping the probe's true gradient O(1)
  Tensor r = Tensor::constant({4, 3}, uniform_init(12, rng, 0.5, 1.5));
  auto f = [&] {
    Tensor y = batch_norm_affine(x, gamma, beta, running, true);
    return mean_all(mul(mul(y, r), y));
  };
  CHECK(finite_diff_check(f, gamma, 1e-5).max_rel_err < 1e-5);
  CHECK(finite_diff_check(f, beta, 1e-5).max_rel_err < 1e-5);
  CHECK(finite_diff_check(f, x, 1e-5).max_rel_err < 1e-4);
}

TEST_CASE("dense") {
  Tensor eye = Tensor::constant({2, 2}, {1, 0, 0, 1});
  Tensor zero = Tensor::fill({2}, 0.0);
  Tensor x = Tensor::constant({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK(dense(eye, zero, x).values() == x.values());

  Tensor w = Tensor::constant({2, 1}, {3, 4});
  CHECK(dense(w, Tensor::fill({1}, 0.0), Tensor::constant({1, 2}, {1, 2})).values() ==
        std::vector<double>{11});

  std::mt19937_64 rng(12);
  Tensor wl = Tensor::leaf({2, 3}, uniform_init(6, rng, -1, 1));
  Tensor bl = Tensor::leaf({3}, uniform_init(3, rng, -1, 1));
  auto f = [&] { return mean_all(mul(dense(wl, bl, x, Act::tanh), dense(wl, bl, x, Act::tanh))); };
  CHECK(finite_diff_check(f, wl, 1e-5).max_rel_err < 1e-5);
  CHECK(finite_diff_check(f, bl, 1e-5).max_rel_err < 1e-5);

  CHECK_THROWS_AS(dense(w, zero, x), TensorError);
}

TEST_CASE("activation dispatch") {
  Tensor x = Tensor::constant({2}, {-1, 2});
  CHECK(activation(Act::relu, x).values() == std::vector<double>{0, 2});
  CHECK(activation(Act::sigmoid, Tensor::scalar(0.0)).values()[0] == doctest::Approx(0.5));
  CHECK(activation(Act::linear, x).values() == x.values());
  CHECK_THROWS_AS(activation(Act::softmax, Tensor::constant({2, 2}, {1, 2, 3, 4}), 0), TensorError);
  CHECK(act_from_string("tanh") == Act::tanh);
  CHECK(act_name(Act::softmax) == "softmax");
  CHECK_THROWS_AS(act_from_string("gelu"), TensorError);
}

TEST_CASE("gru_step matches the four-equation oracle") {
  std::mt19937_64 rng(41);
  ParamRegistry reg;
  GruCellParams p = make_gru_cell(reg, "gru", 3, 4, rng);
  // biases nonzero to exercise every term
  p.v_r->data() = uniform_init(4, rng, -0.5, 0.5);
  p.v_u->data() = uniform_init(4, rng, -0.5, 0.5);
  p.v_c->data() = uniform_init(4, rng, -0.5, 0.5);

  const auto xv = uniform_init(2 * 3, rng, -1, 1);
  const auto hv = uniform_init(2 * 4, rng, -1, 1);
  Tensor h = gru_step(p, Tensor::constant({2, 3}, xv), Tensor::constant({2, 4}, hv));
  const auto ref = oracle::gru_oracle(p.W_r->data(), p.W_u->data(), p.W_c->data(), p.U_r->data(),
                                      p.U_u->data(), p.U_c->data(), p.v_r->data(), p.v_u->data(),
                                      p.v_c->data(), xv, hv, 2, 3, 4);
  for (int i = 0; i < 8; ++i) CHECK(h.values()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("gru fixed points and saturation") {
  std::mt19937_64 rng(42);
  ParamRegistry reg;
  GruCellParams p = make_gru_cell(reg, "gru", 2, 3, rng);
  for (auto& w : {p.W_r, p.W_u, p.W_c, p.U_r, p.U_u, p.U_c})
    std::fill(w->data().begin(), w->data().end(), 0.0);
  Tensor h0 = Tensor::fill({1, 3}, 0.0);
  Tensor x = Tensor::constant({1, 2}, {0.3, -0.4});
  CHECK(gru_step(p, x, h0).values() == std::vector<double>{0, 0, 0});

  // saturate the update gate: h' ~= h_prev
  std::fill(p.v_u->data().begin(), p.v_u->data().end(), 50.0);
  Tensor hp = Tensor::constant({1, 3}, {0.5, -0.25, 0.75});
  const auto out = gru_step(p, x, hp).values();
  for (int i = 0; i < 3; ++i) CHECK(out[i] == doctest::Approx(hp.values()[i]).epsilon(1e-9));
}

TEST_CASE("gru gradients") {
  std::mt19937_64 rng(43);
  ParamRegistry reg;
  GruCellParams p = make_gru_cell(reg, "gru", 2, 3, rng);
  Tensor x = Tensor::leaf({2, 2}, uniform_init(4, rng, -1, 1));
  Tensor h0 = Tensor::fill({2, 3}, 0.0);
  auto f = [&] {
    Tensor h1 = gru_step(p, x, h0);
    Tensor h2 = gru_step(p, x, h1);
    return mean_all(mul(h2, h2));
  };
  CHECK(finite_diff_check(f, x, 1e-5).max_rel_err < 1e-5);
  CHECK(finite_diff_check(f, p.W_c->tensor(), 1e-5).max_rel_err < 1e-5);
  CHECK(finite_diff_check(f, p.U_r->tensor(), 1e-5).max_rel_err < 1e-5);
  CHECK(finite_diff_check(f, p.v_u->tensor(), 1e-5).max_rel_err < 1e-5);
}

TEST_CASE("bigru forward") {
  std::mt19937_64 rng(44);
  ParamRegistry reg;
  GruCellParams fwd = make_gru_cell(reg, "fwd", 2, 3, rng);
  GruCellParams bwd = make_gru_cell(reg, "bwd", 2, 3, rng);
  const int N = 2, B = 4;
  auto sv = uniform_init(N * B * 2, rng, -1, 1);
  Tensor seq = Tensor::constant({N, B, 2}, sv);

  Tensor out = bigru_forward(fwd, bwd, seq);
  CHECK(out.shape() == Shape{N, B, 6});  // 2 x hidden

  // reversed-sequence symmetry of the backward branch
  std::vector<double> rv(sv.size());
  for (int n = 0; n < N; ++n)
    for (int b = 0; b < B; ++b)
      for (int f = 0; f < 2; ++f) rv[(n * B + b) * 2 + f] = sv[(n * B + (B - 1 - b)) * 2 + f];
  Tensor rseq = Tensor::constant({N, B, 2}, rv);
  Tensor rstates = gru_forward(bwd, rseq);  // [N,B,3]
  for (int n = 0; n < N; ++n)
    for (int b = 0; b < B; ++b)
      for (int j = 0; j < 3; ++j)
        CHECK(out.values()[(n * B + b) * 6 + 3 + j] ==
              doctest::Approx(rstates.values()[(n * B + (B - 1 - b)) * 3 + j]).epsilon(1e-15));

  // B=2 equals two explicit gru_step chains
  Tensor seq2 = Tensor::constant({1, 2, 2}, {0.1, -0.2, 0.3, 0.4});
  Tensor out2 = bigru_forward(fwd, bwd, seq2);
  Tensor x0 = Tensor::constant({1, 2}, {0.1, -0.2});
  Tensor x1 = Tensor::constant({1, 2}, {0.3, 0.4});
  Tensor z = Tensor::fill({1, 3}, 0.0);
  Tensor h1 = gru_step(fwd, x0, z), h2 = gru_step(fwd, x1, h1);
  Tensor g1 = gru_step(bwd, x1, z), g0 = gru_step(bwd, x0, g1);
  std::vector<double> expect;
  for (auto* t : {&h1, &g0, &h2, &g1})
    expect.insert(expect.end(), t->values().begin(), t->values().end());
  for (int i = 0; i < 12; ++i) CHECK(out2.values()[i] == doctest::Approx(expect[i]).epsilon(1e-15));

  CHECK_THROWS_AS(bigru_forward(fwd, bwd, Tensor::constant({1, 2}, {1, 2})), TensorError);
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(50);
  Tensor x = Tensor::fill({10, 10}, 1.0);
  Tensor same = dropout(x, 0.0, rng, true);
  CHECK(same.values() == x.values());
  Tensor eval = dropout(x, 0.5, rng, false);
  CHECK(eval.values() == x.values());

  std::mt19937_64 a(7), b(7);
  Tensor d1 = dropout(x, 0.3, a, true);
  Tensor d2 = dropout(x, 0.3, b, true);
  CHECK(d1.values() == d2.values());  // seed-deterministic
  for (double v : d1.values()) CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.7).epsilon(1e-15)));

  CHECK_THROWS_AS(dropout(x, 1.0, rng, true), TensorError);
}
