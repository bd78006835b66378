#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsc/attention.hpp"
#include "hsc/blocks.hpp"
#include "hsc/layers.hpp"
#include "hsc/losses.hpp"
#include "hsc/optim.hpp"

namespace hsc {

class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

enum class ModelKind {
  hyperloopnet,
  hybatnet,
  fusatnet,
  hyperfusenet,
  attae,
  bigruae,
  fbae,
  resae3d,
  da_net,
  hallucinator,
  paws,
};

ModelKind model_kind_from_string(const std::string& name);
std::string model_kind_name(ModelKind kind);

// One flat bag of hyperparameters; each builder reads the fields it needs and
// validates the ones with structural consequences.
struct ArchitectureConfig {
  ModelKind kind = ModelKind::hyperloopnet;
  std::vector<int> bands = {8};  // per modality, first entry is the HSI cube
  int classes = 3;
  int block_width = 32;  // F, channels inside self-looping blocks
  int block_layers = 4;  // K, conv layers per block
  int block_rounds = 1;  // extra level-2 refinement rounds
  std::vector<int> scales = {3, 5, 7};
  int patch = 11;
  int width = 16;         // generic stack width (conv filters / dense units)
  int depth_filters = 2;  // filters of initial 3D convolutions
  int code_dim = 4;       // autoencoder bottleneck / embedding dimension
  double tau = 0.25;      // soft nearest-neighbour softmax temperature
  double sharpen = 0.10;  // pseudo-label sharpening temperature
  double kd_temperature = 2.0;
  double lambda = 1.0;   // distillation / encoder-regularizer weight
  double lambda1 = 1.0;  // aux->HSI reconstruction weight
  double lambda2 = 1.0;  // HSI->aux reconstruction weight
  double wasserstein_weight = 1.0;
  bool identity_combine = false;  // skip attention branches, classify the raw patch
  int seed = 0;
};

void validate(const ArchitectureConfig& cfg);  // throws ModelError

// Flat key=value serialization; parses back bit-exactly (doubles via %.17g).
std::string config_text(const ArchitectureConfig& cfg);
ArchitectureConfig config_from_text(const std::string& text);

// One training batch: per-modality inputs plus one-hot labels (autoencoders
// ignore labels; label-free calls may leave `labels` undefined).
struct Batch {
  std::vector<Tensor> inputs;
  Tensor labels;  // [N, C] one-hot rows
};

std::vector<int> batch_label_ids(const Tensor& one_hot);  // row argmax

struct ModelGraph {
  ArchitectureConfig cfg;
  std::shared_ptr<ParamRegistry> reg;
  std::function<Tensor(const Batch&)> forward;  // probabilities / reconstruction / embedding
  std::function<LossValue(const Batch&)> loss;
  std::function<Tensor(const Batch&)> encode;  // bottleneck output where one exists
  std::function<void(bool)> set_training;
  std::shared_ptr<DaParts> da;  // populated by da_model only
  std::int64_t expected_param_count = 0;
};

// Multiscale self-looping classifier: per scale a 1x1 entry projection feeds a
// self-looping block, the per-scale GAP vectors concatenate into one dense
// softmax head. Trained with cross-entropy.
ModelGraph build_hyperloopnet(const ArchitectureConfig& cfg);

// Dual-attention classifier: a 1D conv stack collapses the center-pixel
// spectrum to a band-weight vector, a conv/deconv stack produces a patch-shaped
// spatial mask, and a softmax over three logits blends the two attended patches
// with the raw one before a 3D conv classifier. Loss is CE minus a weighted
// Wasserstein score gap. With cfg.identity_combine the attention branches are
// skipped entirely and the classifier sees the raw patch.
ModelGraph build_hybatnet(const ArchitectureConfig& cfg);

// Six-module cross-attention fusion classifier: spectral and spatial masks
// derived from each modality multiply a shared feature extractor, the masked
// features re-enter a second extractor/attention pair, and a fully
// convolutional head classifies the product. Cross-entropy only.
ModelGraph build_fusatnet(const ArchitectureConfig& cfg);

// Coupled multiscale fusion classifier: per scale both modalities pass through
// ONE self-looping block (parameters shared across levels, rounds, and
// modalities), and per-modality GAP concatenations drive two transposed-conv
// decoders that reconstruct the opposite modality. Loss = CE + lambda1 * MSE
// (aux->HSI) + lambda2 * MSE (HSI->aux).
ModelGraph build_hyperfusenet(const ArchitectureConfig& cfg);

// Pixel-spectrum and patch autoencoders (kinds attae, bigruae, fbae, resae3d);
// forward returns the reconstruction, encode the bottleneck, loss the MSE.
ModelGraph build_autoencoder(const ArchitectureConfig& cfg);

// Fully connected encoder + multiclass softmax + binary domain classifier +
// feature decoder, wired for da_two_stage_step; forward/encode give the
// inference path (classifier on encoded features, domain parts ignored).
ModelGraph da_model(const ArchitectureConfig& cfg);

// Builds any ModelGraph-shaped kind (everything except hallucinator, whose
// training spans several nets with their own builders below).
ModelGraph build_model(const ArchitectureConfig& cfg);

// ---- checkpoints ------------------------------------------------------------

// Single file: config echo plus (name, shape, raw little-endian f64) records;
// round-trip restores every parameter buffer bit-exactly.
void save_checkpoint(const std::string& path, const ModelGraph& graph);
ArchitectureConfig checkpoint_config(const std::string& path);
void load_checkpoint(const std::string& path, ModelGraph& graph);

// ---- modality hallucination --------------------------------------------------

// Two dense featurenets plus a dense classifier over their concatenation.
struct TeacherModel {
  std::function<Tensor(const Tensor&)> features1, features2;  // [N,B_m] -> [N,d]
  std::function<Tensor(const Tensor&)> classifier_logits;     // [N,2d] -> [N,C]
  std::vector<ParamPtr> feature1_params, feature2_params, classifier_params;
  std::function<void(bool)> set_training;
  int feat_dim = 0;
  int classes = 0;
  bool frozen = false;
};

TeacherModel build_teacher(const ArchitectureConfig& cfg);
LossValue teacher_train_step(TeacherModel& teacher, const Batch& batch, Nadam& opt);
std::vector<int> teacher_predict(TeacherModel& teacher, const Tensor& x1, const Tensor& x2);

// Dense generator conditioned on [features | one-hot label]; hidden layers
// run batch norm and 10% dropout before ReLU. The label block is zeroed once
// adversarial training is over (student training and inference run
// label-free).
struct HalGenerator {
  std::function<Tensor(const Tensor&)> map;  // [N, d+C] -> [N, d]
  std::vector<ParamPtr> params;
  std::function<void(bool)> set_training;
  int cond_dim = 0;
  int out_dim = 0;
  bool frozen = false;
};

// Dense discriminator over feature vectors with 2C softmax slots
// (real class j -> slot 2j, fake class j -> slot 2j+1); hidden layers run
// batch norm and 10% dropout before ReLU.
struct HalDiscriminator {
  std::function<Tensor(const Tensor&)> logits;  // [N, d] -> [N, 2C]
  std::vector<ParamPtr> params;
  std::function<void(bool)> set_training;
};

HalGenerator build_hal_generator(const ArchitectureConfig& cfg);
HalDiscriminator build_hal_discriminator(const ArchitectureConfig& cfg);

// One adversarial round: perturbs the frozen teacher's modality-1 features
// with noise_std-scaled N(0,1) draws (modality-2 features untouched), updates
// the discriminator on real-vs-generated features, then the generator toward
// the matching real slots. Requires a frozen teacher.
LossValue hallucination_train_step(const TeacherModel& teacher, HalGenerator& gen,
                                   HalDiscriminator& disc, const Batch& batch, double noise_std,
                                   Nadam& gen_opt, Nadam& disc_opt, std::mt19937_64& rng);

// Dense classifier with the same stack shape as the teacher's.
struct StudentModel {
  std::function<Tensor(const Tensor&)> classifier_logits;  // [N, 2d] -> [N, C]
  std::vector<ParamPtr> params;
  std::function<void(bool)> set_training;
};

StudentModel build_student(const ArchitectureConfig& cfg);

// Trains the student classifier on [teacher features | generated features]
// with CE plus lambda-weighted distillation toward the teacher's softened
// probabilities at `temperature`. Featurenet-1 and generator must be frozen.
LossValue student_distill_step(const TeacherModel& teacher, const HalGenerator& gen,
                               StudentModel& student, const Batch& batch, double temperature,
                               double lambda, Nadam& opt);

// Inference from modality 1 alone (temperature back at 1).
std::vector<int> student_predict(const TeacherModel& teacher, const HalGenerator& gen,
                                 const StudentModel& student, const Tensor& x1);

// ---- semi-supervised pretraining ----------------------------------------------

// Patch encoder (initial 3D conv + three depthwise-separable conv layers +
// GAP) exposed through ModelGraph.encode: [N,p,p,B] -> [N,d].
ModelGraph build_paws_encoder(const ArchitectureConfig& cfg);

// One pretraining step: encodes both views and the labeled support set,
// pseudo-labels the views against the supports, and descends the sharpened
// cross-view consistency loss with its mean-entropy regularizer.
LossValue paws_pretrain_step(ModelGraph& encoder, const Tensor& support_x,
                             const Tensor& support_labels, const Tensor& anchor_x,
                             const Tensor& positive_x, double tau, double sharpen_temperature,
                             Nadam& opt);

enum class DownstreamMode { linear, finetune, snn };
DownstreamMode downstream_mode_from_string(const std::string& name);

struct DownstreamOptions {
  int steps = 100;
  double lr = 1e-2;
  int seed = 0;
  double tau = 0.25;
};

// linear: frozen encoder + trained softmax head; finetune: encoder and head
// trained jointly; snn: non-parametric cosine classifier over encoded
// supports. Returns zero-based predicted class ids for test_x.
std::vector<int> downstream_classify(DownstreamMode mode, ModelGraph& encoder,
                                     const Tensor& train_x, const std::vector<int>& train_labels,
                                     const Tensor& test_x, const DownstreamOptions& opt);

}  // namespace hsc
