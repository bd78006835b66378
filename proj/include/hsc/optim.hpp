#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "hsc/losses.hpp"

namespace hsc {

// Adam with Nesterov look-ahead on the first moment (bias-corrected).
// Parameters sharing a value buffer are updated once per step.
class Nadam {
 public:
  explicit Nadam(std::vector<ParamPtr> params, double lr = 1e-3, double beta1 = 0.9,
                 double beta2 = 0.999, double eps = 1e-8);

  // Reads accumulated gradients; throws on any non-finite gradient, naming
  // the parameter and coordinate, leaving all parameters untouched.
  void step();
  void zero_grad();
  std::int64_t step_count() const { return t_; }

  double lr;
  double beta1, beta2, eps;

 private:
  std::vector<ParamPtr> params_;  // deduplicated by value buffer
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

// Base rate through epoch 20, then decayed by e^{-0.005} per later epoch.
double lr_schedule(int epoch, double base_lr);

// The four trainable components of the adversarial adaptation model. Forward
// closures rebuild their graph from current parameter values on every call.
struct DaParts {
  std::function<Tensor(const Tensor&)> encode;        // f_E
  std::function<Tensor(const Tensor&)> classify;      // f_S: encoded -> class probabilities
  std::function<Tensor(const Tensor&)> decode;        // f_DE: encoded -> reconstructed features
  std::function<Tensor(const Tensor&)> discriminate;  // f_D: encoded -> 2-domain probabilities
  std::vector<ParamPtr> encoder_params, classifier_params, decoder_params, domain_params;
};

// One optimization iteration:
//   Stage 1 - descend f_S, f_E, f_DE on L1 = CE + cross-reconstruction MSE +
//             orthogonality of the reconstructed source features.
//   Stage 2 - descend f_D on the 2-domain CE (source=0, target=1), then
//             descend f_E on the negated domain CE plus lambda * L2 over the
//             encoder parameters.
// An undefined target tensor skips Stage 2 (the supervised ablation). The
// returned components are ce, recon, ortho and, when Stage 2 ran, domain
// (weight -1) and reg (weight lambda).
LossValue da_two_stage_step(const DaParts& parts, const Tensor& source_x,
                            const std::vector<int>& source_labels, int num_classes,
                            const Tensor& target_x, Nadam& stage1_opt, Nadam& domain_opt,
                            Nadam& encoder_opt, double lambda, std::mt19937_64& rng);

}  // namespace hsc
