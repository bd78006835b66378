#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hsc/tensor.hpp"

namespace hsc {

// A scalar training objective and its named component breakdown. `total` is
// always the weighted sum of the parts, built from the same graph nodes.
struct LossTerm {
  std::string name;
  double weight = 1.0;
  Tensor value;  // scalar
};

struct LossValue {
  std::vector<LossTerm> parts;
  Tensor total;
  double part(const std::string& name) const;
  bool has(const std::string& name) const;
};

LossValue combine_losses(std::vector<LossTerm> parts);

// -inf guard shared by every log-likelihood term.
inline constexpr double kLogFloor = 1e-12;

// Batch-mean of -sum_c t_c ln p_c. Rows of `probs` (and `targets`) must sum
// to 1 within 1e-6; ln is floored at ln(1e-12).
Tensor cross_entropy(const Tensor& targets, const Tensor& probs);

enum class WlossMode { logits, true_class_score };
WlossMode wloss_mode_from_string(const std::string& s);

// mean(targets) - mean(scores) over pre-softmax scores; the alternative mode
// replaces the second expectation with the batch-mean of <y, softmax(scores)>.
Tensor wasserstein_loss(const Tensor& targets, const Tensor& scores,
                        WlossMode mode = WlossMode::logits);

// Mean squared difference over all coordinates.
Tensor mse_reconstruction(const Tensor& original, const Tensor& reconstructed);

// || F^T F / batch - I ||_F^2 for features [batch, d].
Tensor orthogonality_loss(const Tensor& features);

// For each sample, a uniformly chosen different same-class sample (itself when
// it is the sole member of its class).
std::vector<int> cross_reconstruction_indices(const std::vector<int>& labels,
                                              std::mt19937_64& rng);
Tensor gather_rows(const Tensor& batch, const std::vector<int>& indices);
Tensor class_cross_reconstruction_targets(const Tensor& batch, const std::vector<int>& labels,
                                          std::mt19937_64& rng);

// softmax(logits / T); T = 1 is the standard softmax bit-exactly.
Tensor kd_softened_softmax(const Tensor& logits, double temperature);

// cross_entropy(y, student_probs) + lambda * batch-mean ||q_teacher - q_student||_2.
Tensor student_loss(const Tensor& y, const Tensor& student_probs, const Tensor& q_teacher,
                    const Tensor& q_student, double lambda);

// One-hot rows over 2C discriminator slots: real class j -> slot 2j, fake
// class j -> slot 2j+1. Throws when a class id is outside [0, C).
Tensor cgan_labels(const std::vector<int>& class_ids, int num_classes, bool fake);

// Discriminator loss: CE over the union of real rows (toward real slots) and
// fake rows (toward fake slots). Generator loss: CE of fake rows toward the
// matching REAL slots (non-saturating). Both inputs are pre-softmax logits.
std::pair<Tensor, Tensor> cgan_minmax_losses(const Tensor& disc_logits_real,
                                             const Tensor& disc_logits_fake,
                                             const Tensor& real_labels_2c,
                                             const Tensor& fake_labels_2c);

// Row-wise p^{1/T} renormalized.
Tensor paws_sharpen(const Tensor& p, double temperature);

// Soft nearest-neighbour pseudo-labels: softmax of cosine similarities at
// temperature tau against L2-normalized supports, projected through the
// support label matrix. Rows of the result sum to 1 for one-hot labels.
Tensor snn_classify(const Tensor& anchors, const Tensor& supports,
                    const Tensor& support_labels, double tau);

// 1/2 mean[ H(rho(pA), pP) + H(rho(pP), pA) ] - H(p_bar). Sharpened targets
// are detached; the mean sharpened prediction p_bar stays differentiable.
Tensor paws_loss(const Tensor& p_anchor, const Tensor& p_positive, double temperature);

}  // namespace hsc
