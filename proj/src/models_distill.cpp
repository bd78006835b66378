#include <memory>
#include <random>
#include <utility>

#include "hsc/models.hpp"
#include "model_parts.hpp"

// Modality hallucination: a two-modality teacher, a conditional generator /
// discriminator pair that learns to fake the second modality's features, and
// a student classifier distilled to work from modality 1 alone.

namespace hsc {

namespace {

using detail::DenseLayer;

// Generator and discriminator hidden layers run dense -> batch norm ->
// 10% dropout -> ReLU.
constexpr double kHalDropRate = 0.1;

void require_hallucinator(const ArchitectureConfig& cfg, const char* who) {
  if (cfg.kind != ModelKind::hallucinator)
    throw ModelError(std::string(who) + " got kind " + model_kind_name(cfg.kind));
  validate(cfg);
}

// Conditioning used after adversarial training: the label block is zeroed so
// generation depends on the features alone.
Tensor label_free_condition(const Tensor& feats, int classes) {
  Tensor zeros = Tensor::fill({feats.shape()[0], classes}, 0.0);
  return concat(1, {feats, zeros});
}

}  // namespace

TeacherModel build_teacher(const ArchitectureConfig& cfg) {
  require_hallucinator(cfg, "build_teacher");
  struct State {
    ArchitectureConfig cfg;
    std::shared_ptr<ParamRegistry> reg;
    DenseLayer f1a, f1b, f2a, f2b, c1, c2, c3;
  };
  auto state = std::make_shared<State>();
  state->cfg = cfg;
  state->reg = std::make_shared<ParamRegistry>();
  ParamRegistry& reg = *state->reg;
  const int d = cfg.code_dim;
  const int w = cfg.width;

  std::mt19937_64 f1_rng(detail::component_seed(cfg.seed, "featurenet1"));
  state->f1a = detail::make_dense_layer(reg, "t.f1.l1", cfg.bands[0], w, Act::relu, false,
                                        f1_rng);
  state->f1b = detail::make_dense_layer(reg, "t.f1.l2", w, d, Act::relu, false, f1_rng);
  std::mt19937_64 f2_rng(detail::component_seed(cfg.seed, "featurenet2"));
  state->f2a = detail::make_dense_layer(reg, "t.f2.l1", cfg.bands[1], w, Act::relu, false,
                                        f2_rng);
  state->f2b = detail::make_dense_layer(reg, "t.f2.l2", w, d, Act::relu, false, f2_rng);
  std::mt19937_64 c_rng(detail::component_seed(cfg.seed, "teacher_cls"));
  state->c1 = detail::make_dense_layer(reg, "t.cls.l1", 2 * d, w, Act::relu, false, c_rng);
  state->c2 = detail::make_dense_layer(reg, "t.cls.l2", w, w, Act::relu, false, c_rng);
  state->c3 = detail::make_dense_layer(reg, "t.cls.l3", w, cfg.classes, Act::linear, false,
                                       c_rng);

  TeacherModel teacher;
  teacher.feat_dim = d;
  teacher.classes = cfg.classes;
  teacher.features1 = [state](const Tensor& x) {
    detail::require_vector_input(x, state->cfg.bands[0], "modality-1");
    return detail::run_dense(state->f1b, detail::run_dense(state->f1a, x));
  };
  teacher.features2 = [state](const Tensor& x) {
    detail::require_vector_input(x, state->cfg.bands[1], "modality-2");
    return detail::run_dense(state->f2b, detail::run_dense(state->f2a, x));
  };
  teacher.classifier_logits = [state](const Tensor& feats) {
    detail::require_vector_input(feats, 2 * state->cfg.code_dim, "joint feature");
    Tensor h1 = detail::run_dense(state->c1, feats);
    Tensor h2 = detail::run_dense(state->c2, h1);
    return detail::run_dense(state->c3, h2);
  };
  teacher.feature1_params = detail::collect_params(std::vector<DenseLayer>{state->f1a,
                                                                           state->f1b});
  teacher.feature2_params = detail::collect_params(std::vector<DenseLayer>{state->f2a,
                                                                           state->f2b});
  teacher.classifier_params = detail::collect_params(std::vector<DenseLayer>{state->c1,
                                                                             state->c2,
                                                                             state->c3});
  teacher.set_training = [](bool) {};
  return teacher;
}

LossValue teacher_train_step(TeacherModel& teacher, const Batch& batch, Nadam& opt) {
  if (teacher.frozen) throw ModelError("teacher is frozen; thaw it before training");
  const Tensor& x1 = detail::batch_input(batch, 0, "modality-1");
  const Tensor& x2 = detail::batch_input(batch, 1, "modality-2");
  detail::require_labels(batch, teacher.classes);
  Tensor feats1 = teacher.features1(x1);
  Tensor feats2 = teacher.features2(x2);
  Tensor joint = concat(1, {feats1, feats2});
  Tensor logits = teacher.classifier_logits(joint);
  Tensor probs = softmax_lastdim(logits);
  Tensor ce = cross_entropy(batch.labels, probs);
  LossValue loss = combine_losses({{"ce", 1.0, ce}});
  opt.zero_grad();
  backward(loss.total);
  opt.step();
  return loss;
}

std::vector<int> teacher_predict(TeacherModel& teacher, const Tensor& x1, const Tensor& x2) {
  Tensor feats1 = teacher.features1(x1);
  Tensor feats2 = teacher.features2(x2);
  Tensor logits = teacher.classifier_logits(concat(1, {feats1, feats2}));
  return batch_label_ids(logits);
}

HalGenerator build_hal_generator(const ArchitectureConfig& cfg) {
  require_hallucinator(cfg, "build_hal_generator");
  struct State {
    int cond_dim = 0;
    std::shared_ptr<ParamRegistry> reg;
    DenseLayer l1, l2, l3;
    std::mt19937_64 drop_rng;
    bool training = true;
  };
  auto state = std::make_shared<State>();
  state->reg = std::make_shared<ParamRegistry>();
  const int d = cfg.code_dim;
  const int w = cfg.width;
  state->cond_dim = d + cfg.classes;
  std::mt19937_64 rng(detail::component_seed(cfg.seed, "generator"));
  state->l1 = detail::make_dense_layer(*state->reg, "g.l1", state->cond_dim, w, Act::linear,
                                       true, rng);
  state->l2 = detail::make_dense_layer(*state->reg, "g.l2", w, w, Act::linear, true, rng);
  state->l3 = detail::make_dense_layer(*state->reg, "g.l3", w, d, Act::linear, false, rng);
  state->drop_rng.seed(detail::component_seed(cfg.seed, "generator_dropout"));

  HalGenerator gen;
  gen.cond_dim = state->cond_dim;
  gen.out_dim = d;
  gen.map = [state](const Tensor& cond) {
    detail::require_vector_input(cond, state->cond_dim, "generator condition");
    Tensor h1 = relu(dropout(detail::run_dense(state->l1, cond), kHalDropRate, state->drop_rng,
                             state->training));
    Tensor h2 = relu(dropout(detail::run_dense(state->l2, h1), kHalDropRate, state->drop_rng,
                             state->training));
    return detail::run_dense(state->l3, h2);
  };
  gen.params = detail::collect_params(std::vector<DenseLayer>{state->l1, state->l2, state->l3});
  gen.set_training = [state](bool training) {
    state->training = training;
    state->l1.bn->training = training;
    state->l2.bn->training = training;
  };
  return gen;
}

HalDiscriminator build_hal_discriminator(const ArchitectureConfig& cfg) {
  require_hallucinator(cfg, "build_hal_discriminator");
  struct State {
    int feat_dim = 0;
    std::shared_ptr<ParamRegistry> reg;
    DenseLayer l1, l2, l3;
    std::mt19937_64 drop_rng;
    bool training = true;
  };
  auto state = std::make_shared<State>();
  state->reg = std::make_shared<ParamRegistry>();
  state->feat_dim = cfg.code_dim;
  const int w = cfg.width;
  std::mt19937_64 rng(detail::component_seed(cfg.seed, "discriminator"));
  state->l1 = detail::make_dense_layer(*state->reg, "d.l1", cfg.code_dim, w, Act::linear, true,
                                       rng);
  state->l2 = detail::make_dense_layer(*state->reg, "d.l2", w, w, Act::linear, true, rng);
  state->l3 = detail::make_dense_layer(*state->reg, "d.l3", w, 2 * cfg.classes, Act::linear,
                                       false, rng);
  state->drop_rng.seed(detail::component_seed(cfg.seed, "discriminator_dropout"));

  HalDiscriminator disc;
  disc.logits = [state](const Tensor& feats) {
    detail::require_vector_input(feats, state->feat_dim, "discriminator feature");
    Tensor h1 = relu(dropout(detail::run_dense(state->l1, feats), kHalDropRate, state->drop_rng,
                             state->training));
    Tensor h2 = relu(dropout(detail::run_dense(state->l2, h1), kHalDropRate, state->drop_rng,
                             state->training));
    return detail::run_dense(state->l3, h2);
  };
  disc.params = detail::collect_params(std::vector<DenseLayer>{state->l1, state->l2, state->l3});
  disc.set_training = [state](bool training) {
    state->training = training;
    state->l1.bn->training = training;
    state->l2.bn->training = training;
  };
  return disc;
}

LossValue hallucination_train_step(const TeacherModel& teacher, HalGenerator& gen,
                                   HalDiscriminator& disc, const Batch& batch, double noise_std,
                                   Nadam& gen_opt, Nadam& disc_opt, std::mt19937_64& rng) {
  if (!teacher.frozen)
    throw ModelError("hallucination training requires a frozen teacher");
  if (gen.frozen) throw ModelError("generator is frozen; thaw it before adversarial training");
  if (noise_std < 0.0)
    throw ModelError("noise level must be non-negative, got " + std::to_string(noise_std));
  const Tensor& x1 = detail::batch_input(batch, 0, "modality-1");
  const Tensor& x2 = detail::batch_input(batch, 1, "modality-2");
  detail::require_labels(batch, teacher.classes);
  const std::vector<int> ids = batch_label_ids(batch.labels);

  Tensor feats1 = detach(teacher.features1(x1));
  const int n = feats1.shape()[0];
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<double> draw(static_cast<std::size_t>(n) * teacher.feat_dim);
  for (double& v : draw) v = noise_std * unit(rng);
  Tensor noise = Tensor::constant({n, teacher.feat_dim}, std::move(draw));
  Tensor f1_aug = add(feats1, noise);
  Tensor real = detach(teacher.features2(x2));
  Tensor cond = concat(1, {f1_aug, batch.labels});
  Tensor real_lab = cgan_labels(ids, teacher.classes, false);
  Tensor fake_lab = cgan_labels(ids, teacher.classes, true);

  // Real and generated features share one discriminator batch so its batch
  // normalization keeps their relative placement (separate batches would be
  // re-centered individually, hiding the location signal).
  // Discriminator phase: generated features enter as constants.
  Tensor fake_fixed = detach(gen.map(cond));
  Tensor d_joint = disc.logits(concat(0, {real, fake_fixed}));
  Tensor d_real = slice(d_joint, 0, 0, n);
  Tensor d_fake = slice(d_joint, 0, n, n);
  auto [d_loss, d_phase_gen] = cgan_minmax_losses(d_real, d_fake, real_lab, fake_lab);
  (void)d_phase_gen;
  disc_opt.zero_grad();
  backward(d_loss);
  disc_opt.step();

  // Generator phase: a fresh graph through the updated discriminator.
  Tensor fake_live = gen.map(cond);
  Tensor g_joint = disc.logits(concat(0, {real, fake_live}));
  Tensor d_real2 = slice(g_joint, 0, 0, n);
  Tensor d_fake2 = slice(g_joint, 0, n, n);
  auto [g_phase_disc, g_loss] = cgan_minmax_losses(d_real2, d_fake2, real_lab, fake_lab);
  (void)g_phase_disc;
  gen_opt.zero_grad();
  backward(g_loss);
  gen_opt.step();

  return combine_losses({{"disc", 1.0, d_loss}, {"gen", 1.0, g_loss}});
}

StudentModel build_student(const ArchitectureConfig& cfg) {
  require_hallucinator(cfg, "build_student");
  struct State {
    int in_dim = 0;
    std::shared_ptr<ParamRegistry> reg;
    DenseLayer l1, l2, l3;
  };
  auto state = std::make_shared<State>();
  state->reg = std::make_shared<ParamRegistry>();
  state->in_dim = 2 * cfg.code_dim;
  const int w = cfg.width;
  std::mt19937_64 rng(detail::component_seed(cfg.seed, "student"));
  state->l1 = detail::make_dense_layer(*state->reg, "st.l1", state->in_dim, w, Act::relu, false,
                                       rng);
  state->l2 = detail::make_dense_layer(*state->reg, "st.l2", w, w, Act::relu, false, rng);
  state->l3 = detail::make_dense_layer(*state->reg, "st.l3", w, cfg.classes, Act::linear, false,
                                       rng);

  StudentModel student;
  student.classifier_logits = [state](const Tensor& feats) {
    detail::require_vector_input(feats, state->in_dim, "student feature");
    Tensor h1 = detail::run_dense(state->l1, feats);
    Tensor h2 = detail::run_dense(state->l2, h1);
    return detail::run_dense(state->l3, h2);
  };
  student.params = detail::collect_params(std::vector<DenseLayer>{state->l1, state->l2,
                                                                  state->l3});
  student.set_training = [](bool) {};
  return student;
}

LossValue student_distill_step(const TeacherModel& teacher, const HalGenerator& gen,
                               StudentModel& student, const Batch& batch, double temperature,
                               double lambda, Nadam& opt) {
  if (!(temperature > 0.0))
    throw ModelError("distillation temperature must be positive, got " +
                     std::to_string(temperature));
  if (lambda < 0.0)
    throw ModelError("distillation weight must be non-negative, got " + std::to_string(lambda));
  if (!teacher.frozen) throw ModelError("student distillation requires a frozen teacher");
  if (!gen.frozen) throw ModelError("student distillation requires a frozen generator");
  const Tensor& x1 = detail::batch_input(batch, 0, "modality-1");
  const Tensor& x2 = detail::batch_input(batch, 1, "modality-2");
  detail::require_labels(batch, teacher.classes);
  gen.set_training(false);

  Tensor feats1 = detach(teacher.features1(x1));
  Tensor feats2 = detach(teacher.features2(x2));
  Tensor t_logits = detach(teacher.classifier_logits(concat(1, {feats1, feats2})));
  Tensor q_teacher = kd_softened_softmax(t_logits, temperature);

  Tensor fake = detach(gen.map(label_free_condition(feats1, teacher.classes)));
  Tensor s_logits = student.classifier_logits(concat(1, {feats1, fake}));
  Tensor q_student = kd_softened_softmax(s_logits, temperature);
  Tensor probs = softmax_lastdim(s_logits);

  Tensor ce = cross_entropy(batch.labels, probs);
  Tensor d = sub(q_teacher, q_student);
  Tensor kd = mean_all(pow_scalar(sum_lastdim(mul(d, d)), 0.5));
  LossValue loss = combine_losses({{"ce", 1.0, ce}, {"kd", lambda, kd}});
  opt.zero_grad();
  backward(loss.total);
  opt.step();
  return loss;
}

std::vector<int> student_predict(const TeacherModel& teacher, const HalGenerator& gen,
                                 const StudentModel& student, const Tensor& x1) {
  gen.set_training(false);
  Tensor feats1 = teacher.features1(x1);
  Tensor fake = gen.map(label_free_condition(feats1, teacher.classes));
  Tensor logits = student.classifier_logits(concat(1, {feats1, fake}));
  return batch_label_ids(logits);
}

}  // namespace hsc
