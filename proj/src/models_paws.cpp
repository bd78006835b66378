#include <algorithm>
#include <memory>
#include <utility>

#include "hsc/models.hpp"
#include "model_parts.hpp"

// Semi-supervised pretraining: a small fully convolutional patch encoder
// trained by cross-view consistency against pseudo-labels from a labeled
// support set, plus the three downstream classification modes.

namespace hsc {

namespace {

using detail::ConvLayer;
using detail::DenseLayer;

struct PawsState {
  ArchitectureConfig cfg;
  std::shared_ptr<ParamRegistry> reg;
  ConvLayer entry3d;
  struct SepStage {
    ParamPtr dw_w, dw_b;  // depthwise 3x3, one filter per channel
    ConvLayer pw;         // pointwise 1x1 -> stage width, relu
  };
  std::vector<SepStage> stages;

  Tensor encode(const Tensor& x) {
    detail::require_patch_input(x, cfg.patch, cfg.bands[0], "patch");
    const int n = x.shape()[0];
    Tensor cube = detail::append_unit_channel(x);
    Tensor feat = detail::run_layer(entry3d, cube);
    Tensor h = reshape(feat, {n, cfg.patch, cfg.patch, cfg.bands[0] * cfg.depth_filters});
    for (SepStage& st : stages) {
      Tensor dw = depthwise_conv_nd(2, st.dw_w->tensor(), st.dw_b->tensor(), h, {1, 1},
                                    Padding::same);
      h = detail::run_layer(st.pw, dw);
    }
    return global_avg_pool(h);
  }
};

Tensor encode_batch(ModelGraph& encoder, const Tensor& x) {
  Batch batch;
  batch.inputs.push_back(x);
  return encoder.encode(batch);
}

// Softmax head over fixed-dimension embeddings, on its own registry.
DenseLayer make_head(std::shared_ptr<ParamRegistry>& reg, int in_dim, int classes, int seed) {
  reg = std::make_shared<ParamRegistry>();
  std::mt19937_64 rng(detail::component_seed(seed, "downstream_head"));
  return detail::make_dense_layer(*reg, "head", in_dim, classes, Act::softmax, false, rng);
}

Tensor one_hot_rows(const std::vector<int>& labels, int classes) {
  std::vector<double> rows(labels.size() * static_cast<std::size_t>(classes), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i)
    rows[i * classes + labels[i]] = 1.0;
  return Tensor::constant({static_cast<int>(labels.size()), classes}, std::move(rows));
}

}  // namespace

ModelGraph build_paws_encoder(const ArchitectureConfig& cfg) {
  if (cfg.kind != ModelKind::paws)
    throw ModelError("build_paws_encoder got kind " + model_kind_name(cfg.kind));
  validate(cfg);
  auto state = std::make_shared<PawsState>();
  state->cfg = cfg;
  state->reg = std::make_shared<ParamRegistry>();
  ParamRegistry& reg = *state->reg;

  std::mt19937_64 rng(detail::component_seed(cfg.seed, "encoder"));
  state->entry3d = detail::make_conv_layer(reg, "enc.entry", 3, {3, 3, 3}, 1, cfg.depth_filters,
                                           {1, 1, 1}, Padding::same, Act::relu, false, rng);
  const int stage_widths[3] = {cfg.width, cfg.width, cfg.code_dim};
  int ch = cfg.bands[0] * cfg.depth_filters;
  for (int i = 0; i < 3; ++i) {
    PawsState::SepStage st;
    const std::string prefix = "enc.s" + std::to_string(i + 1);
    const Shape dw_shape{3, 3, ch};
    st.dw_w = reg.create(prefix + ".dw.w", dw_shape, glorot_init(dw_shape, rng));
    st.dw_b = reg.create(prefix + ".dw.b", {ch}, zeros_init(ch));
    st.pw = detail::make_conv_layer(reg, prefix + ".pw", 2, {1, 1}, ch, stage_widths[i], {1, 1},
                                    Padding::same, Act::relu, false, rng);
    state->stages.push_back(std::move(st));
    ch = stage_widths[i];
  }

  ModelGraph graph;
  graph.cfg = cfg;
  graph.reg = state->reg;
  graph.expected_param_count = 14;
  graph.forward = [state](const Batch& batch) {
    return state->encode(detail::batch_input(batch, 0, "patch"));
  };
  graph.encode = graph.forward;
  graph.loss = [](const Batch&) -> LossValue {
    throw ModelError(
        "pretraining needs support and view batches; drive it with paws_pretrain_step");
  };
  graph.set_training = [](bool) {};
  detail::assert_param_count(graph);
  return graph;
}

LossValue paws_pretrain_step(ModelGraph& encoder, const Tensor& support_x,
                             const Tensor& support_labels, const Tensor& anchor_x,
                             const Tensor& positive_x, double tau, double sharpen_temperature,
                             Nadam& opt) {
  if (!support_x.defined() || support_x.shape().empty() || support_x.shape()[0] == 0)
    throw ModelError("pretraining needs a non-empty labeled support set");
  if (!support_labels.defined() || support_labels.shape().size() != 2 ||
      support_labels.shape()[0] != support_x.shape()[0])
    throw ModelError("support labels must be one-hot rows matching the support set");
  Tensor z_support = encode_batch(encoder, support_x);
  Tensor z_anchor = encode_batch(encoder, anchor_x);
  Tensor z_positive = encode_batch(encoder, positive_x);
  Tensor p_anchor = snn_classify(z_anchor, z_support, support_labels, tau);
  Tensor p_positive = snn_classify(z_positive, z_support, support_labels, tau);
  Tensor consistency = paws_loss(p_anchor, p_positive, sharpen_temperature);
  LossValue loss = combine_losses({{"paws", 1.0, consistency}});
  opt.zero_grad();
  backward(loss.total);
  opt.step();
  return loss;
}

DownstreamMode downstream_mode_from_string(const std::string& name) {
  if (name == "linear") return DownstreamMode::linear;
  if (name == "finetune") return DownstreamMode::finetune;
  if (name == "snn") return DownstreamMode::snn;
  throw ModelError("unknown downstream mode '" + name + "'");
}

std::vector<int> downstream_classify(DownstreamMode mode, ModelGraph& encoder,
                                     const Tensor& train_x, const std::vector<int>& train_labels,
                                     const Tensor& test_x, const DownstreamOptions& opt) {
  if (!train_x.defined() || train_x.shape().empty() ||
      train_x.shape()[0] != static_cast<int>(train_labels.size()))
    throw ModelError("training set and labels disagree in sample count");
  const int classes =
      train_labels.empty() ? 0 : 1 + *std::max_element(train_labels.begin(), train_labels.end());
  if (classes < 2) throw ModelError("downstream training needs at least two classes");
  std::vector<int> seen(classes, 0);
  for (int label : train_labels) {
    if (label < 0) throw ModelError("negative class id in the training set");
    ++seen[label];
  }
  for (int c = 0; c < classes; ++c)
    if (seen[c] == 0)
      throw ModelError("class " + std::to_string(c) + " absent from the training set");
  Tensor y = one_hot_rows(train_labels, classes);

  encoder.set_training(false);
  if (mode == DownstreamMode::snn) {
    Tensor z_train = detach(encode_batch(encoder, train_x));
    Tensor z_test = detach(encode_batch(encoder, test_x));
    Tensor probs = snn_classify(z_test, z_train, y, opt.tau);
    return batch_label_ids(probs);
  }

  const int feat_dim = encode_batch(encoder, train_x).shape()[1];
  std::shared_ptr<ParamRegistry> head_reg;
  DenseLayer head = make_head(head_reg, feat_dim, classes, opt.seed);

  if (mode == DownstreamMode::linear) {
    Tensor z_train = detach(encode_batch(encoder, train_x));
    Nadam head_opt(detail::collect_params(std::vector<DenseLayer>{head}), opt.lr);
    for (int step = 0; step < opt.steps; ++step) {
      Tensor probs = detail::run_dense(head, z_train);
      Tensor ce = cross_entropy(y, probs);
      head_opt.zero_grad();
      backward(ce);
      head_opt.step();
    }
    Tensor z_test = detach(encode_batch(encoder, test_x));
    return batch_label_ids(detail::run_dense(head, z_test));
  }

  // finetune: encoder and head descend jointly
  std::vector<ParamPtr> joint = encoder.reg->distinct();
  for (const ParamPtr& p : detail::collect_params(std::vector<DenseLayer>{head}))
    joint.push_back(p);
  Nadam joint_opt(std::move(joint), opt.lr);
  encoder.set_training(true);
  for (int step = 0; step < opt.steps; ++step) {
    Tensor z = encode_batch(encoder, train_x);
    Tensor probs = detail::run_dense(head, z);
    Tensor ce = cross_entropy(y, probs);
    joint_opt.zero_grad();
    backward(ce);
    joint_opt.step();
  }
  encoder.set_training(false);
  Tensor z_test = encode_batch(encoder, test_x);
  return batch_label_ids(detail::run_dense(head, z_test));
}

}  // namespace hsc
