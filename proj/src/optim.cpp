#include "hsc/optim.hpp"

#include <cmath>
#include <unordered_set>

namespace hsc {
namespace {

Tensor one_hot_rows(const std::vector<int>& labels, int classes) {
  std::vector<double> rows(labels.size() * static_cast<std::size_t>(classes), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes)
      throw TensorError("label " + std::to_string(labels[i]) + " outside " +
                        std::to_string(classes) + " classes");
    rows[i * classes + labels[i]] = 1.0;
  }
  return Tensor::constant({static_cast<int>(labels.size()), classes}, std::move(rows));
}

void zero_params(const std::vector<ParamPtr>& params) {
  for (const ParamPtr& p : params) std::fill(p->grad().begin(), p->grad().end(), 0.0);
}

}  // namespace

Nadam::Nadam(std::vector<ParamPtr> params, double lr_in, double beta1_in, double beta2_in,
             double eps_in)
    : lr(lr_in), beta1(beta1_in), beta2(beta2_in), eps(eps_in) {
  std::unordered_set<const void*> seen;
  for (ParamPtr& p : params) {
    if (!p) throw TensorError("optimizer received a null parameter");
    if (!seen.insert(p->data().data()).second) continue;
    params_.push_back(std::move(p));
  }
  if (params_.empty()) throw TensorError("optimizer needs at least one parameter");
  for (const ParamPtr& p : params_) {
    m_.emplace_back(p->data().size(), 0.0);
    v_.emplace_back(p->data().size(), 0.0);
  }
}

void Nadam::step() {
  for (const ParamPtr& p : params_) {
    const std::vector<double>& g = p->grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!std::isfinite(g[i]))
        throw TensorError("non-finite gradient " + std::to_string(g[i]) + " in parameter '" +
                          p->name + "' at index " + std::to_string(i) + "; step aborted");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    std::vector<double>& w = params_[k]->data();
    const std::vector<double>& g = params_[k]->grad();
    std::vector<double>& m = m_[k];
    std::vector<double>& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      const double look_ahead = beta1 * m_hat + (1.0 - beta1) * g[i] / bc1;
      w[i] -= lr * look_ahead / (std::sqrt(v_hat) + eps);
    }
  }
}

void Nadam::zero_grad() { zero_params(params_); }

double lr_schedule(int epoch, double base_lr) {
  if (epoch < 0) throw TensorError("epoch must be non-negative, got " + std::to_string(epoch));
  if (epoch <= 20) return base_lr;
  return base_lr * std::exp(-0.005 * static_cast<double>(epoch - 20));
}

LossValue da_two_stage_step(const DaParts& parts, const Tensor& source_x,
                            const std::vector<int>& source_labels, int num_classes,
                            const Tensor& target_x, Nadam& stage1_opt, Nadam& domain_opt,
                            Nadam& encoder_opt, double lambda, std::mt19937_64& rng) {
  if (!source_x.defined() || source_x.shape().empty())
    throw TensorError("adaptation step needs labeled source samples");
  if (source_x.shape()[0] != static_cast<int>(source_labels.size()))
    throw TensorError("source batch " + shape_str(source_x.shape()) + " carries " +
                      std::to_string(source_labels.size()) + " labels");
  if (lambda < 0.0)
    throw TensorError("regularizer weight must be non-negative, got " + std::to_string(lambda));

  // Stage 1: supervised + reconstructive + orthogonality descent.
  Tensor y = one_hot_rows(source_labels, num_classes);
  Tensor cross_targets = class_cross_reconstruction_targets(source_x, source_labels, rng);
  Tensor encoded = parts.encode(source_x);
  Tensor reconstructed = parts.decode(encoded);
  std::vector<LossTerm> terms;
  terms.push_back({"ce", 1.0, cross_entropy(y, parts.classify(encoded))});
  terms.push_back({"recon", 1.0, mse_reconstruction(cross_targets, reconstructed)});
  terms.push_back({"ortho", 1.0, orthogonality_loss(reconstructed)});
  LossValue stage1 = combine_losses(terms);
  stage1_opt.zero_grad();
  backward(stage1.total);
  stage1_opt.step();

  if (!target_x.defined()) return stage1;

  // Stage 2a: sharpen the domain classifier (descent on domain CE).
  auto domain_ce = [&]() {
    Tensor both = concat(0, {parts.encode(source_x), parts.encode(target_x)});
    std::vector<int> domains(static_cast<std::size_t>(both.shape()[0]), 1);
    std::fill(domains.begin(), domains.begin() + source_x.shape()[0], 0);
    return cross_entropy(one_hot_rows(domains, 2), parts.discriminate(both));
  };
  Tensor d_loss = domain_ce();
  domain_opt.zero_grad();
  backward(d_loss);
  domain_opt.step();

  // Stage 2b: push the encoder toward domain confusion, L2-regularized.
  Tensor d_for_encoder = domain_ce();
  Tensor l2;
  for (const ParamPtr& p : parts.encoder_params) {
    Tensor t = p->tensor();
    Tensor sq = sum_all(mul(t, t));
    l2 = l2.defined() ? add(l2, sq) : sq;
  }
  if (!l2.defined()) l2 = Tensor::scalar(0.0);
  terms.push_back({"domain", -1.0, d_for_encoder});
  terms.push_back({"reg", lambda, l2});
  LossValue full = combine_losses(terms);
  Tensor encoder_objective = add(neg(d_for_encoder), mul_scalar(l2, lambda));
  encoder_opt.zero_grad();
  backward(encoder_objective);
  encoder_opt.step();
  return full;
}

}  // namespace hsc
