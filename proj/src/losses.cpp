#include "hsc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace hsc {
namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(op) + " needs equal shapes, got " + shape_str(a.shape()) +
                      " and " + shape_str(b.shape()));
}

std::pair<std::int64_t, std::int64_t> rows_cols(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.empty()) throw TensorError("probability tensor must have at least one dimension");
  const std::int64_t cols = s.back();
  return {numel(s) / cols, cols};
}

void require_normalized_rows(const char* what, const Tensor& t, double tol = 1e-6) {
  auto [rows, cols] = rows_cols(t);
  const auto& v = t.values();
  for (std::int64_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::int64_t c = 0; c < cols; ++c) sum += v[static_cast<std::size_t>(r * cols + c)];
    if (std::abs(sum - 1.0) > tol)
      throw TensorError(std::string(what) + " row " + std::to_string(r) + " sums to " +
                        std::to_string(sum) + ", expected 1");
  }
}

// Batch-mean of -sum_c t_c ln(max(p_c, 1e-12)) without row-sum validation;
// shared by the soft-target losses.
Tensor soft_nll(const Tensor& targets, const Tensor& probs) {
  Tensor per_row = sum_lastdim(mul(targets, log_op(clamp_min(probs, kLogFloor))));
  return neg(mean_all(per_row));
}

Tensor row_normalize(const Tensor& t, const char* what) {
  auto [rows, cols] = rows_cols(t);
  (void)cols;
  Tensor sq = sum_lastdim(mul(t, t));
  const auto& n = sq.values();
  for (std::int64_t r = 0; r < rows; ++r)
    if (n[static_cast<std::size_t>(r)] <= 0.0)
      throw TensorError(std::string(what) + " row " + std::to_string(r) + " has zero norm");
  Shape keep = t.shape();
  keep.back() = 1;
  return divide(t, reshape(pow_scalar(sq, 0.5), keep));
}

}  // namespace

double LossValue::part(const std::string& name) const {
  for (const LossTerm& p : parts)
    if (p.name == name) return p.value.item();
  throw TensorError("loss has no component named '" + name + "'");
}

bool LossValue::has(const std::string& name) const {
  for (const LossTerm& p : parts)
    if (p.name == name) return true;
  return false;
}

LossValue combine_losses(std::vector<LossTerm> parts) {
  if (parts.empty()) throw TensorError("a loss needs at least one component");
  LossValue out;
  out.parts = std::move(parts);
  for (const LossTerm& p : out.parts) {
    if (p.value.size() != 1)
      throw TensorError("loss component '" + p.name + "' is not a scalar: " +
                        shape_str(p.value.shape()));
    Tensor weighted = p.weight == 1.0 ? p.value : mul_scalar(p.value, p.weight);
    out.total = out.total.defined() ? add(out.total, weighted) : weighted;
  }
  return out;
}

Tensor cross_entropy(const Tensor& targets, const Tensor& probs) {
  require_same_shape("cross entropy", targets, probs);
  require_normalized_rows("cross-entropy probability", probs);
  require_normalized_rows("cross-entropy target", targets);
  return soft_nll(targets, probs);
}

WlossMode wloss_mode_from_string(const std::string& s) {
  if (s == "logits") return WlossMode::logits;
  if (s == "true_class_score") return WlossMode::true_class_score;
  throw TensorError("unknown wloss_mode '" + s + "' (expected logits|true_class_score)");
}

Tensor wasserstein_loss(const Tensor& targets, const Tensor& scores, WlossMode mode) {
  require_same_shape("wasserstein loss", targets, scores);
  if (mode == WlossMode::logits) return sub(mean_all(targets), mean_all(scores));
  Tensor agreement = mean_all(sum_lastdim(mul(targets, softmax_lastdim(scores))));
  return sub(mean_all(targets), agreement);
}

Tensor mse_reconstruction(const Tensor& original, const Tensor& reconstructed) {
  require_same_shape("reconstruction loss", original, reconstructed);
  Tensor d = sub(original, reconstructed);
  return mean_all(mul(d, d));
}

Tensor orthogonality_loss(const Tensor& features) {
  const Shape& s = features.shape();
  if (s.size() != 2) throw TensorError("orthogonality loss expects [batch, d], got " + shape_str(s));
  const double inv_batch = 1.0 / static_cast<double>(s[0]);
  Tensor gram = mul_scalar(matmul(transpose2d(features), features), inv_batch);
  std::vector<double> eye(static_cast<std::size_t>(s[1]) * static_cast<std::size_t>(s[1]), 0.0);
  for (int i = 0; i < s[1]; ++i) eye[static_cast<std::size_t>(i) * s[1] + i] = 1.0;
  Tensor d = sub(gram, Tensor::constant({s[1], s[1]}, eye));
  return sum_all(mul(d, d));
}

std::vector<int> cross_reconstruction_indices(const std::vector<int>& labels,
                                              std::mt19937_64& rng) {
  if (labels.empty()) throw TensorError("cross-reconstruction needs a non-empty batch");
  std::unordered_map<int, std::vector<int>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(static_cast<int>(i));
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::vector<int>& peers = members[labels[i]];
    if (peers.size() == 1) {
      out[i] = static_cast<int>(i);
      continue;
    }
    std::uniform_int_distribution<std::size_t> pick(0, peers.size() - 2);
    std::size_t j = pick(rng);
    // Skip self while keeping the draw uniform over the other members.
    out[i] = peers[j] == static_cast<int>(i) ? peers[peers.size() - 1] : peers[j];
  }
  return out;
}

Tensor gather_rows(const Tensor& batch, const std::vector<int>& indices) {
  const Shape& s = batch.shape();
  if (s.empty()) throw TensorError("gather_rows needs a batched tensor");
  const std::int64_t row = numel(s) / s[0];
  std::vector<double> out(indices.size() * static_cast<std::size_t>(row));
  const auto& v = batch.values();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= s[0])
      throw TensorError("gather index " + std::to_string(indices[i]) + " outside batch of " +
                        std::to_string(s[0]));
    std::copy_n(v.begin() + indices[i] * row, row, out.begin() + static_cast<std::int64_t>(i) * row);
  }
  Shape os = s;
  os[0] = static_cast<int>(indices.size());
  return Tensor::constant(os, std::move(out));
}

Tensor class_cross_reconstruction_targets(const Tensor& batch, const std::vector<int>& labels,
                                          std::mt19937_64& rng) {
  if (batch.shape().empty() || batch.shape()[0] != static_cast<int>(labels.size()))
    throw TensorError("cross-reconstruction labels count " + std::to_string(labels.size()) +
                      " does not match batch " + shape_str(batch.shape()));
  return gather_rows(batch, cross_reconstruction_indices(labels, rng));
}

Tensor kd_softened_softmax(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0))
    throw TensorError("softmax temperature must be positive, got " + std::to_string(temperature));
  return softmax_lastdim(mul_scalar(logits, 1.0 / temperature));
}

Tensor student_loss(const Tensor& y, const Tensor& student_probs, const Tensor& q_teacher,
                    const Tensor& q_student, double lambda) {
  if (lambda < 0.0)
    throw TensorError("distillation weight must be non-negative, got " + std::to_string(lambda));
  require_same_shape("distillation", q_teacher, q_student);
  Tensor ce = cross_entropy(y, student_probs);
  Tensor d = sub(q_teacher, q_student);
  Tensor kd = mean_all(pow_scalar(sum_lastdim(mul(d, d)), 0.5));
  return add(ce, mul_scalar(kd, lambda));
}

Tensor cgan_labels(const std::vector<int>& class_ids, int num_classes, bool fake) {
  if (num_classes < 1) throw TensorError("discriminator needs at least one class");
  if (class_ids.empty()) throw TensorError("discriminator labels need at least one sample");
  const int width = 2 * num_classes;
  std::vector<double> rows(class_ids.size() * static_cast<std::size_t>(width), 0.0);
  for (std::size_t i = 0; i < class_ids.size(); ++i) {
    const int c = class_ids[i];
    if (c < 0 || c >= num_classes)
      throw TensorError("class id " + std::to_string(c) + " maps to a slot outside 2C=" +
                        std::to_string(width));
    rows[i * width + 2 * c + (fake ? 1 : 0)] = 1.0;
  }
  return Tensor::constant({static_cast<int>(class_ids.size()), width}, std::move(rows));
}

std::pair<Tensor, Tensor> cgan_minmax_losses(const Tensor& disc_logits_real,
                                             const Tensor& disc_logits_fake,
                                             const Tensor& real_labels_2c,
                                             const Tensor& fake_labels_2c) {
  require_same_shape("discriminator real batch", disc_logits_real, real_labels_2c);
  require_same_shape("discriminator fake batch", disc_logits_fake, fake_labels_2c);
  if (disc_logits_real.shape().back() != disc_logits_fake.shape().back())
    throw TensorError("real and fake discriminator outputs disagree on slot count");
  const int width = disc_logits_real.shape().back();
  if (width % 2 != 0)
    throw TensorError("discriminator must output 2C slots, got " + std::to_string(width));

  Tensor union_logits = concat(0, {disc_logits_real, disc_logits_fake});
  Tensor union_labels = concat(0, {real_labels_2c, fake_labels_2c});
  Tensor disc = cross_entropy(union_labels, softmax_lastdim(union_logits));

  // Fake samples judged against the REAL slot of their class.
  const auto& fl = fake_labels_2c.values();
  std::vector<double> gen_rows(fl.size(), 0.0);
  const auto cols = static_cast<std::size_t>(width);
  for (std::size_t i = 0; i < fl.size() / cols; ++i)
    for (std::size_t c = 0; c + 1 < cols; c += 2) {
      if (fl[i * cols + c] != 0.0)
        throw TensorError("fake discriminator labels must occupy odd (fake) slots");
      gen_rows[i * cols + c] = fl[i * cols + c + 1];
    }
  Tensor gen_labels = Tensor::constant(fake_labels_2c.shape(), std::move(gen_rows));
  Tensor gen = cross_entropy(gen_labels, softmax_lastdim(disc_logits_fake));
  return {gen, disc};
}

Tensor paws_sharpen(const Tensor& p, double temperature) {
  if (!(temperature > 0.0))
    throw TensorError("sharpening temperature must be positive, got " +
                      std::to_string(temperature));
  require_normalized_rows("sharpening input", p);
  Tensor q = pow_scalar(p, 1.0 / temperature);
  Shape keep = p.shape();
  keep.back() = 1;
  return divide(q, reshape(sum_lastdim(q), keep));
}

Tensor snn_classify(const Tensor& anchors, const Tensor& supports, const Tensor& support_labels,
                    double tau) {
  if (!(tau > 0.0))
    throw TensorError("similarity temperature must be positive, got " + std::to_string(tau));
  if (anchors.shape().size() != 2 || supports.shape().size() != 2)
    throw TensorError("soft nearest-neighbour expects [n, dim] embeddings");
  if (anchors.shape()[1] != supports.shape()[1])
    throw TensorError("anchor dim " + std::to_string(anchors.shape()[1]) +
                      " does not match support dim " + std::to_string(supports.shape()[1]));
  if (support_labels.shape().size() != 2 || support_labels.shape()[0] != supports.shape()[0])
    throw TensorError("support labels " + shape_str(support_labels.shape()) +
                      " do not match supports " + shape_str(supports.shape()));
  Tensor a = row_normalize(anchors, "anchor embedding");
  Tensor s = row_normalize(supports, "support embedding");
  Tensor sims = mul_scalar(matmul(a, transpose2d(s)), 1.0 / tau);
  return matmul(softmax_lastdim(sims), support_labels);
}

Tensor paws_loss(const Tensor& p_anchor, const Tensor& p_positive, double temperature) {
  require_same_shape("view predictions", p_anchor, p_positive);
  if (p_anchor.shape().size() != 2)
    throw TensorError("view predictions must be [batch, classes], got " +
                      shape_str(p_anchor.shape()));
  require_normalized_rows("anchor prediction", p_anchor);
  require_normalized_rows("positive prediction", p_positive);

  Tensor target_a = paws_sharpen(detach(p_anchor), temperature);
  Tensor target_p = paws_sharpen(detach(p_positive), temperature);
  Tensor cross = mul_scalar(add(soft_nll(target_a, p_positive), soft_nll(target_p, p_anchor)), 0.5);

  // Mean-entropy regularizer over the sharpened views; kept differentiable.
  Tensor pooled = concat(0, {paws_sharpen(p_anchor, temperature),
                             paws_sharpen(p_positive, temperature)});
  Tensor p_bar = mean_channelwise(pooled);
  Tensor entropy = neg(sum_all(mul(p_bar, log_op(clamp_min(p_bar, kLogFloor)))));
  return sub(cross, entropy);
}

}  // namespace hsc
