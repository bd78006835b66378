#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "doctest.h"
#include "hsc/losses.hpp"

using hsc::Shape;
using hsc::Tensor;

namespace {

std::mt19937_64 rng_for(unsigned seed) { return std::mt19937_64(seed); }

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, bool needs_grad = false,
                     double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(hsc::numel(shape)));
  for (double& x : v) x = dist(rng);
  return needs_grad ? Tensor::leaf(shape, v) : Tensor::constant(shape, v);
}

double row_entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

// Plain-loop softmax + cross-entropy, independent of the tensor graph.
double brute_softmax_ce(const std::vector<double>& logits, const std::vector<double>& labels,
                        int rows, int cols) {
  double total = 0.0;
  for (int r = 0; r < rows; ++r) {
    double mx = logits[r * cols];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, logits[r * cols + c]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) z += std::exp(logits[r * cols + c] - mx);
    for (int c = 0; c < cols; ++c)
      total -= labels[r * cols + c] * (logits[r * cols + c] - mx - std::log(z));
  }
  return total / rows;
}

}  // namespace

TEST_CASE("cross entropy closed forms") {
  Tensor onehot = Tensor::constant({1, 2}, {1, 0});
  CHECK(hsc::cross_entropy(onehot, onehot).item() == doctest::Approx(0.0).epsilon(1e-12));
  Tensor half = Tensor::constant({1, 2}, {0.5, 0.5});
  CHECK(hsc::cross_entropy(onehot, half).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  for (int c : {3, 7}) {
    std::vector<double> u(static_cast<std::size_t>(c), 1.0 / c);
    std::vector<double> y(static_cast<std::size_t>(c), 0.0);
    y[1] = 1.0;
    Tensor uy = Tensor::constant({1, c}, y);
    Tensor up = Tensor::constant({1, c}, u);
    CHECK(hsc::cross_entropy(uy, up).item() ==
          doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-12));
  }

  // Batch mean over two rows: (0 + ln2)/2.
  Tensor y2 = Tensor::constant({2, 2}, {1, 0, 0, 1});
  Tensor p2 = Tensor::constant({2, 2}, {1, 0, 0.5, 0.5});
  CHECK(hsc::cross_entropy(y2, p2).item() ==
        doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));

  // The zero-probability slot is clamped at 1e-12, keeping the loss finite.
  Tensor wrong = Tensor::constant({1, 2}, {0, 1});
  CHECK(hsc::cross_entropy(onehot, wrong).item() ==
        doctest::Approx(-std::log(1e-12)).epsilon(1e-12));

  CHECK_THROWS_WITH_AS(hsc::cross_entropy(onehot, Tensor::constant({1, 2}, {0.7, 0.7})),
                       doctest::Contains("sums to"), hsc::TensorError);
  CHECK_THROWS_AS(hsc::cross_entropy(Tensor::constant({1, 2}, {0.3, 0.3}), half),
                  hsc::TensorError);
  CHECK_THROWS_AS(hsc::cross_entropy(onehot, Tensor::constant({1, 3}, {0.5, 0.25, 0.25})),
                  hsc::TensorError);
}

TEST_CASE("cross entropy gradient through softmax") {
  auto rng = rng_for(41);
  Tensor logits = random_tensor({3, 4}, rng, true);
  Tensor y = Tensor::constant({3, 4}, {1, 0, 0, 0, 0, 0, 1, 0, 0, 1, 0, 0});
  auto loss = [&]() { return hsc::cross_entropy(y, hsc::softmax_lastdim(logits)); };
  CHECK(hsc::finite_diff_check(loss, logits, 1e-5).max_rel_err < 1e-6);
}

TEST_CASE("wasserstein surrogate is an expectation difference over raw scores") {
  Tensor y = Tensor::constant({1, 2}, {1, 0});
  CHECK(hsc::wasserstein_loss(y, y).item() == 0.0);
  Tensor zeros = Tensor::constant({1, 2}, {0, 0});
  CHECK(hsc::wasserstein_loss(y, zeros).item() == doctest::Approx(0.5).epsilon(1e-15));

  auto rng = rng_for(42);
  Tensor scores = random_tensor({4, 3}, rng, true, -2.0, 2.0);
  Tensor labels = Tensor::constant({4, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1, 1, 0, 0});
  double mean_t = 4.0 / 12.0;
  double mean_s = 0.0;
  for (double v : scores.values()) mean_s += v;
  mean_s /= 12.0;
  CHECK(hsc::wasserstein_loss(labels, scores).item() ==
        doctest::Approx(mean_t - mean_s).epsilon(1e-12));

  auto loss = [&]() { return hsc::wasserstein_loss(labels, scores); };
  CHECK(hsc::finite_diff_check(loss, scores, 1e-5).max_rel_err < 1e-7);

  // Alternative reading: second expectation is the batch-mean true-class
  // softmax score.
  const auto& sv = scores.values();
  double agree = 0.0;
  for (int r = 0; r < 4; ++r) {
    double z = 0.0;
    for (int c = 0; c < 3; ++c) z += std::exp(sv[r * 3 + c]);
    for (int c = 0; c < 3; ++c)
      agree += labels.values()[r * 3 + c] * std::exp(sv[r * 3 + c]) / z;
  }
  CHECK(hsc::wasserstein_loss(labels, scores, hsc::WlossMode::true_class_score).item() ==
        doctest::Approx(mean_t - agree / 4.0).epsilon(1e-12));

  CHECK(hsc::wloss_mode_from_string("logits") == hsc::WlossMode::logits);
  CHECK(hsc::wloss_mode_from_string("true_class_score") == hsc::WlossMode::true_class_score);
  CHECK_THROWS_AS(hsc::wloss_mode_from_string("softmax"), hsc::TensorError);
  CHECK_THROWS_AS(hsc::wasserstein_loss(y, Tensor::fill({2, 2}, 0.0)), hsc::TensorError);
}

TEST_CASE("joint objective with the wasserstein term disabled is plain cross entropy") {
  auto rng = rng_for(43);
  Tensor logits = random_tensor({3, 4}, rng);
  Tensor probs = hsc::softmax_lastdim(logits);
  Tensor y = Tensor::constant({3, 4}, {0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1});
  hsc::LossValue joint = hsc::combine_losses(
      {{"ce", 1.0, hsc::cross_entropy(y, probs)},
       {"wasserstein", 0.0, hsc::wasserstein_loss(y, logits)}});
  CHECK(joint.total.item() == doctest::Approx(hsc::cross_entropy(y, probs).item()).epsilon(1e-15));
}

TEST_CASE("loss totals equal the weighted component sum") {
  auto rng = rng_for(44);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<hsc::LossTerm> terms;
    double expect = 0.0;
    for (int i = 0; i < 4; ++i) {
      double w = dist(rng);
      double v = dist(rng);
      terms.push_back({"t" + std::to_string(i), w, Tensor::scalar(v)});
      expect += w * v;
    }
    hsc::LossValue lv = hsc::combine_losses(terms);
    CHECK(std::abs(lv.total.item() - expect) < 1e-12);
    CHECK(lv.part("t2") == terms[2].value.item());
    CHECK(lv.has("t0"));
    CHECK(!lv.has("nope"));
    CHECK_THROWS_AS(lv.part("nope"), hsc::TensorError);
  }
  CHECK_THROWS_AS(hsc::combine_losses({}), hsc::TensorError);
  CHECK_THROWS_AS(hsc::combine_losses({{"bad", 1.0, Tensor::fill({2}, 0.0)}}), hsc::TensorError);
}

TEST_CASE("mean squared reconstruction") {
  Tensor x = Tensor::constant({1, 2}, {0, 0});
  Tensor xh = Tensor::constant({1, 2}, {1, 1});
  CHECK(hsc::mse_reconstruction(x, x).item() == 0.0);
  CHECK(hsc::mse_reconstruction(x, xh).item() == doctest::Approx(1.0).epsilon(1e-15));

  auto rng = rng_for(45);
  Tensor a = random_tensor({3, 4}, rng, true);
  Tensor b = random_tensor({3, 4}, rng);
  double base = hsc::mse_reconstruction(a, b).item();
  // Doubling the residual quadruples the loss.
  Tensor mid = hsc::add(b, hsc::mul_scalar(hsc::sub(a, b), 0.5));
  CHECK(hsc::mse_reconstruction(a, mid).item() == doctest::Approx(base / 4.0).epsilon(1e-12));

  auto loss = [&]() { return hsc::mse_reconstruction(a, b); };
  CHECK(hsc::finite_diff_check(loss, a, 1e-5).max_rel_err < 1e-7);
  CHECK_THROWS_AS(hsc::mse_reconstruction(a, Tensor::fill({4, 3}, 0.0)), hsc::TensorError);
}

TEST_CASE("orthogonality penalty on the scaled gram matrix") {
  // Columns orthonormal after 1/batch scaling -> zero penalty.
  const double s = std::sqrt(2.0);
  Tensor ortho = Tensor::constant({2, 2}, {s, 0, 0, s});
  CHECK(hsc::orthogonality_loss(ortho).item() == doctest::Approx(0.0).epsilon(1e-12));

  // Gram/batch = diag(1,4): penalty (1-1)^2 + (4-1)^2 = 9.
  Tensor scaled = Tensor::constant({2, 2}, {s, 0, 0, 2 * s});
  CHECK(hsc::orthogonality_loss(scaled).item() == doctest::Approx(9.0).epsilon(1e-12));

  auto rng = rng_for(46);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor f = random_tensor({4, 3}, rng);
    double got = hsc::orthogonality_loss(f).item();
    CHECK(got >= 0.0);
    // Brute-force oracle.
    const auto& v = f.values();
    double want = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double g = 0.0;
        for (int r = 0; r < 4; ++r) g += v[r * 3 + i] * v[r * 3 + j];
        g /= 4.0;
        double d = g - (i == j ? 1.0 : 0.0);
        want += d * d;
      }
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }

  Tensor leaff = random_tensor({3, 3}, rng, true);
  auto loss = [&]() { return hsc::orthogonality_loss(leaff); };
  CHECK(hsc::finite_diff_check(loss, leaff, 1e-5).max_rel_err < 1e-6);
  CHECK_THROWS_AS(hsc::orthogonality_loss(Tensor::fill({2, 2, 2}, 0.0)), hsc::TensorError);
}

TEST_CASE("cross reconstruction picks a different same-class sample when possible") {
  auto rng = rng_for(47);

  // All classes distinct: forced identity.
  std::vector<int> distinct = {3, 1, 4, 2};
  CHECK(hsc::cross_reconstruction_indices(distinct, rng) == std::vector<int>{0, 1, 2, 3});

  // Two members per class: forced swap.
  std::vector<int> pairs = {0, 1, 0, 1};
  CHECK(hsc::cross_reconstruction_indices(pairs, rng) == std::vector<int>{2, 3, 0, 1});

  // Mixed: singleton self-targets, larger classes never self-target and stay
  // in-class, with every admissible partner seen across draws.
  std::vector<int> mixed = {5, 2, 2, 2, 9};
  std::map<int, std::map<int, int>> seen;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<int> idx = hsc::cross_reconstruction_indices(mixed, rng);
    CHECK(idx[0] == 0);
    CHECK(idx[4] == 4);
    for (int i = 1; i <= 3; ++i) {
      CHECK(idx[i] != i);
      CHECK(mixed[static_cast<std::size_t>(idx[i])] == 2);
      seen[i][idx[i]]++;
    }
  }
  for (int i = 1; i <= 3; ++i) {
    CHECK(seen[i].size() == 2);
    for (const auto& [partner, count] : seen[i]) {
      (void)partner;
      CHECK(count > 100);  // roughly uniform over the two partners
    }
  }

  CHECK_THROWS_AS(hsc::cross_reconstruction_indices({}, rng), hsc::TensorError);

  // Tensor-level wrapper gathers whole rows.
  Tensor batch = Tensor::constant({4, 2}, {10, 11, 20, 21, 30, 31, 40, 41});
  Tensor t = hsc::class_cross_reconstruction_targets(batch, pairs, rng);
  CHECK(t.values() == std::vector<double>{30, 31, 40, 41, 10, 11, 20, 21});
  CHECK_THROWS_AS(hsc::class_cross_reconstruction_targets(batch, {0, 1}, rng), hsc::TensorError);
}

TEST_CASE("temperature softmax closed forms") {
  auto rng = rng_for(48);
  Tensor logits = random_tensor({2, 5}, rng, false, -3.0, 3.0);
  Tensor t1 = hsc::kd_softened_softmax(logits, 1.0);
  Tensor plain = hsc::softmax_lastdim(logits);
  CHECK(t1.values() == plain.values());

  Tensor two = Tensor::constant({1, 2}, {2, 0});
  Tensor soft = hsc::kd_softened_softmax(two, 2.0);
  const double e = std::exp(1.0);
  CHECK(soft.values()[0] == doctest::Approx(e / (e + 1)).epsilon(1e-12));
  CHECK(soft.values()[1] == doctest::Approx(1 / (e + 1)).epsilon(1e-12));

  Tensor hot = hsc::kd_softened_softmax(random_tensor({3, 4}, rng, false, -5.0, 5.0), 1e6);
  for (double v : hot.values()) CHECK(std::abs(v - 0.25) < 1e-5);

  CHECK_THROWS_AS(hsc::kd_softened_softmax(two, 0.0), hsc::TensorError);
  CHECK_THROWS_AS(hsc::kd_softened_softmax(two, -1.0), hsc::TensorError);

  Tensor leafl = random_tensor({2, 3}, rng, true);
  Tensor probe = random_tensor({2, 3}, rng, false, 0.5, 1.5);
  auto loss = [&]() { return hsc::sum_all(hsc::mul(hsc::kd_softened_softmax(leafl, 3.0), probe)); };
  CHECK(hsc::finite_diff_check(loss, leafl, 1e-5).max_rel_err < 1e-6);
}

TEST_CASE("student objective adds a scaled distillation distance to cross entropy") {
  Tensor y = Tensor::constant({1, 2}, {1, 0});
  Tensor probs = Tensor::constant({1, 2}, {0.5, 0.5});
  Tensor qt = Tensor::constant({1, 2}, {0.66, 0.34});
  Tensor qs = Tensor::constant({1, 2}, {0.60, 0.42});  // diff [0.06,-0.08], norm 0.1

  CHECK(hsc::student_loss(y, probs, qt, qt, 5.0).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(hsc::student_loss(y, probs, qt, qs, 0.0).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(hsc::student_loss(y, probs, qt, qs, 2.0).item() ==
        doctest::Approx(std::log(2.0) + 0.2).epsilon(1e-12));
  CHECK_THROWS_AS(hsc::student_loss(y, probs, qt, qs, -0.5), hsc::TensorError);

  // Gradient flows through both the student probabilities and q_S.
  auto rng = rng_for(49);
  Tensor sl = random_tensor({2, 3}, rng, true);
  Tensor tl = random_tensor({2, 3}, rng);
  Tensor y2 = Tensor::constant({2, 3}, {0, 1, 0, 1, 0, 0});
  auto loss = [&]() {
    Tensor sp = hsc::softmax_lastdim(sl);
    Tensor qS = hsc::kd_softened_softmax(sl, 4.0);
    Tensor qT = hsc::kd_softened_softmax(tl, 4.0);
    return hsc::student_loss(y2, sp, qT, qS, 1.5);
  };
  CHECK(hsc::finite_diff_check(loss, sl, 1e-5).max_rel_err < 1e-5);
}

TEST_CASE("conditional GAN losses over the doubled class encoding") {
  // Label helper: real class j -> slot 2j, fake class j -> slot 2j+1.
  Tensor real = hsc::cgan_labels({0, 1}, 2, false);
  CHECK(real.values() == std::vector<double>{1, 0, 0, 0, 0, 0, 1, 0});
  Tensor fake = hsc::cgan_labels({0, 1}, 2, true);
  CHECK(fake.values() == std::vector<double>{0, 1, 0, 0, 0, 0, 0, 1});
  CHECK_THROWS_AS(hsc::cgan_labels({2}, 2, false), hsc::TensorError);
  CHECK_THROWS_AS(hsc::cgan_labels({-1}, 2, true), hsc::TensorError);

  // Uniform discriminator: every term is ln(2C).
  Tensor flat_r = Tensor::fill({2, 4}, 0.3);
  Tensor flat_f = Tensor::fill({2, 4}, -0.2);
  auto [gen_u, disc_u] = hsc::cgan_minmax_losses(flat_r, flat_f, real, fake);
  CHECK(gen_u.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(disc_u.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // Confident correct discriminator: tiny disc loss, large generator loss.
  Tensor sharp_r = Tensor::constant({2, 4}, {20, 0, 0, 0, 0, 0, 20, 0});
  Tensor sharp_f = Tensor::constant({2, 4}, {0, 20, 0, 0, 0, 0, 0, 20});
  auto [gen_s, disc_s] = hsc::cgan_minmax_losses(sharp_r, sharp_f, real, fake);
  CHECK(disc_s.item() < 1e-6);
  CHECK(gen_s.item() > 10.0);

  // Random case against a plain-loop oracle.
  auto rng = rng_for(50);
  Tensor lr = random_tensor({3, 4}, rng, false, -2.0, 2.0);
  Tensor lf = random_tensor({3, 4}, rng, true, -2.0, 2.0);
  Tensor r3 = hsc::cgan_labels({1, 0, 1}, 2, false);
  Tensor f3 = hsc::cgan_labels({0, 0, 1}, 2, true);
  auto [gen_r, disc_r] = hsc::cgan_minmax_losses(lr, lf, r3, f3);
  std::vector<double> union_logits = lr.values();
  union_logits.insert(union_logits.end(), lf.values().begin(), lf.values().end());
  std::vector<double> union_labels = r3.values();
  union_labels.insert(union_labels.end(), f3.values().begin(), f3.values().end());
  CHECK(disc_r.item() ==
        doctest::Approx(brute_softmax_ce(union_logits, union_labels, 6, 4)).epsilon(1e-12));
  std::vector<double> gen_labels(12, 0.0);
  gen_labels[0 * 4 + 0] = 1.0;  // class 0 -> real slot 0
  gen_labels[1 * 4 + 0] = 1.0;
  gen_labels[2 * 4 + 2] = 1.0;  // class 1 -> real slot 2
  CHECK(gen_r.item() ==
        doctest::Approx(brute_softmax_ce(lf.values(), gen_labels, 3, 4)).epsilon(1e-12));

  auto gen_loss = [&]() { return hsc::cgan_minmax_losses(lr, lf, r3, f3).first; };
  CHECK(hsc::finite_diff_check(gen_loss, lf, 1e-5).max_rel_err < 1e-6);

  CHECK_THROWS_AS(hsc::cgan_minmax_losses(lr, lf, r3, r3), hsc::TensorError);  // real slots as fake
  CHECK_THROWS_AS(hsc::cgan_minmax_losses(Tensor::fill({3, 3}, 0.0), lf,
                                          Tensor::fill({3, 3}, 0.0), f3),
                  hsc::TensorError);  // odd slot count
}

TEST_CASE("sharpening lowers temperature without moving symmetric rows") {
  Tensor p = Tensor::constant({1, 2}, {0.8, 0.2});
  Tensor s = hsc::paws_sharpen(p, 0.5);
  CHECK(s.values()[0] == doctest::Approx(0.64 / 0.68).epsilon(1e-12));
  CHECK(s.values()[1] == doctest::Approx(0.04 / 0.68).epsilon(1e-12));

  CHECK(hsc::paws_sharpen(p, 1.0).values() == p.values());
  Tensor sym = Tensor::constant({1, 2}, {0.5, 0.5});
  for (double T : {0.1, 0.5, 2.0}) {
    Tensor out = hsc::paws_sharpen(sym, T);
    CHECK(out.values()[0] == doctest::Approx(0.5).epsilon(1e-12));
  }

  auto rng = rng_for(51);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = random_tensor({1, 5}, rng, false, -2.0, 2.0);
    Tensor row = hsc::softmax_lastdim(logits);
    for (double T : {0.25, 0.5, 0.9}) {
      Tensor sharp = hsc::paws_sharpen(row, T);
      double sum = 0.0;
      for (double v : sharp.values()) sum += v;
      CHECK(std::abs(sum - 1.0) < 1e-12);
      CHECK(row_entropy(sharp.values()) <= row_entropy(row.values()) + 1e-12);
    }
  }

  CHECK_THROWS_AS(hsc::paws_sharpen(p, 0.0), hsc::TensorError);
  CHECK_THROWS_AS(hsc::paws_sharpen(Tensor::constant({1, 2}, {0.9, 0.9}), 0.5),
                  hsc::TensorError);
}

TEST_CASE("soft nearest-neighbour pseudo-labels") {
  // Orthogonal one-per-class supports, anchor equal to support 0: the
  // low-temperature limit is a one-hot on class 0.
  Tensor supports = Tensor::constant({2, 2}, {1, 0, 0, 1});
  Tensor labels = Tensor::constant({2, 2}, {1, 0, 0, 1});
  Tensor anchor = Tensor::constant({1, 2}, {1, 0});
  Tensor sharp = hsc::snn_classify(anchor, supports, labels, 1e-3);
  CHECK(std::abs(sharp.values()[0] - 1.0) < 1e-6);
  CHECK(sharp.values()[1] < 1e-6);

  // Equidistant anchor: uniform pseudo-label.
  Tensor mid = Tensor::constant({1, 2}, {1, 1});
  Tensor even = hsc::snn_classify(mid, supports, labels, 0.7);
  CHECK(even.values()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(even.values()[1] == doctest::Approx(0.5).epsilon(1e-12));

  // Three-support hand case against explicit arithmetic.
  Tensor sup3 = Tensor::constant({3, 2}, {1, 0, 0, 1, 1, 1});
  Tensor lab3 = Tensor::constant({3, 2}, {1, 0, 0, 1, 1, 0});
  Tensor a3 = Tensor::constant({1, 2}, {2, 0});
  const double tau = 0.5;
  double s0 = 1.0 / tau, s1 = 0.0 / tau, s2 = (1.0 / std::sqrt(2.0)) / tau;
  double z = std::exp(s0) + std::exp(s1) + std::exp(s2);
  Tensor got = hsc::snn_classify(a3, sup3, lab3, tau);
  CHECK(got.values()[0] == doctest::Approx((std::exp(s0) + std::exp(s2)) / z).epsilon(1e-12));
  CHECK(got.values()[1] == doctest::Approx(std::exp(s1) / z).epsilon(1e-12));

  // Rows sum to 1 for one-hot support labels.
  auto rng = rng_for(52);
  Tensor anchors = random_tensor({5, 3}, rng, true);
  Tensor sups = random_tensor({4, 3}, rng);
  Tensor labs = Tensor::constant({4, 2}, {1, 0, 0, 1, 1, 0, 0, 1});
  Tensor rows = hsc::snn_classify(anchors, sups, labs, 0.3);
  for (int r = 0; r < 5; ++r) {
    double sum = rows.values()[r * 2] + rows.values()[r * 2 + 1];
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }

  Tensor probe = random_tensor({5, 2}, rng, false, 0.5, 1.5);
  auto loss = [&]() { return hsc::sum_all(hsc::mul(hsc::snn_classify(anchors, sups, labs, 0.3), probe)); };
  CHECK(hsc::finite_diff_check(loss, anchors, 1e-6).max_rel_err < 1e-5);

  CHECK_THROWS_WITH_AS(hsc::snn_classify(Tensor::fill({1, 2}, 0.0), supports, labels, 1.0),
                       doctest::Contains("zero norm"), hsc::TensorError);
  CHECK_THROWS_AS(hsc::snn_classify(anchor, supports, labels, 0.0), hsc::TensorError);
  CHECK_THROWS_AS(hsc::snn_classify(anchor, Tensor::fill({2, 3}, 1.0), labels, 1.0),
                  hsc::TensorError);
  CHECK_THROWS_AS(hsc::snn_classify(anchor, supports, Tensor::fill({3, 2}, 1.0), 1.0),
                  hsc::TensorError);
}

TEST_CASE("view-consistency loss closed forms") {
  // Identical confident predictions: cross terms vanish and the pooled mean
  // stays one-hot, so the entropy regularizer vanishes too.
  Tensor hot = Tensor::constant({2, 3}, {1, 0, 0, 1, 0, 0});
  CHECK(hsc::paws_loss(hot, hot, 0.25).item() == doctest::Approx(0.0).epsilon(1e-9));

  // Distinct confident predictions: cross terms still vanish but the pooled
  // mean [1/2, 0, 1/2] contributes -ln 2.
  Tensor split = Tensor::constant({2, 3}, {1, 0, 0, 0, 0, 1});
  CHECK(hsc::paws_loss(split, split, 0.25).item() ==
        doctest::Approx(-std::log(2.0)).epsilon(1e-12));

  Tensor uni = Tensor::fill({2, 3}, 1.0 / 3.0);
  CHECK(hsc::paws_loss(uni, uni, 1.0).item() == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_THROWS_AS(hsc::paws_loss(Tensor::fill({2, 3}, 0.4), uni, 1.0), hsc::TensorError);
  CHECK_THROWS_AS(hsc::paws_loss(uni, Tensor::fill({2, 3}, 0.4), 1.0), hsc::TensorError);
  CHECK_THROWS_AS(hsc::paws_loss(uni, Tensor::fill({3, 2}, 0.5), 1.0), hsc::TensorError);
}

TEST_CASE("view-consistency targets carry no gradient") {
  auto rng = rng_for(53);
  Tensor la = random_tensor({3, 4}, rng, true);
  Tensor lp = random_tensor({3, 4}, rng, true);
  const double T = 0.5;

  Tensor loss = hsc::paws_loss(hsc::softmax_lastdim(la), hsc::softmax_lastdim(lp), T);
  hsc::backward(loss);
  std::vector<double> ga = la.grad();
  std::vector<double> gp = lp.grad();

  // Surrogate with the sharpened targets frozen as constants: identical
  // gradients prove the stop-gradient contract.
  la.zero_grad();
  lp.zero_grad();
  Tensor pa = hsc::softmax_lastdim(la);
  Tensor pp = hsc::softmax_lastdim(lp);
  Tensor ta = Tensor::constant(pa.shape(), hsc::paws_sharpen(pa, T).values());
  Tensor tp = Tensor::constant(pp.shape(), hsc::paws_sharpen(pp, T).values());
  auto nll = [](const Tensor& t, const Tensor& p) {
    return hsc::neg(hsc::mean_all(
        hsc::sum_lastdim(hsc::mul(t, hsc::log_op(hsc::clamp_min(p, hsc::kLogFloor))))));
  };
  Tensor cross = hsc::mul_scalar(hsc::add(nll(ta, pp), nll(tp, pa)), 0.5);
  Tensor pooled = hsc::concat(0, {hsc::paws_sharpen(pa, T), hsc::paws_sharpen(pp, T)});
  Tensor p_bar = hsc::mean_channelwise(pooled);
  Tensor ent = hsc::neg(hsc::sum_all(hsc::mul(p_bar, hsc::log_op(hsc::clamp_min(p_bar, 1e-12)))));
  Tensor surrogate = hsc::sub(cross, ent);
  CHECK(surrogate.item() == doctest::Approx(loss.item()).epsilon(1e-13));
  hsc::backward(surrogate);
  for (std::size_t i = 0; i < ga.size(); ++i) {
    CHECK(la.grad()[i] == doctest::Approx(ga[i]).epsilon(1e-12));
    CHECK(lp.grad()[i] == doctest::Approx(gp[i]).epsilon(1e-12));
  }

  // And the surrogate itself passes finite differences (targets ta/tp frozen
  // at the center point), transferring numeric trust to the equal gradients.
  la.zero_grad();
  lp.zero_grad();
  auto fd_loss = [&]() {
    Tensor a = hsc::softmax_lastdim(la);
    Tensor p = hsc::softmax_lastdim(lp);
    Tensor fcross = hsc::mul_scalar(hsc::add(nll(ta, p), nll(tp, a)), 0.5);
    Tensor fpooled = hsc::concat(0, {hsc::paws_sharpen(a, T), hsc::paws_sharpen(p, T)});
    Tensor fbar = hsc::mean_channelwise(fpooled);
    Tensor fent =
        hsc::neg(hsc::sum_all(hsc::mul(fbar, hsc::log_op(hsc::clamp_min(fbar, 1e-12)))));
    return hsc::sub(fcross, fent);
  };
  CHECK(hsc::finite_diff_check(fd_loss, la, 1e-6).max_rel_err < 1e-4);
}
