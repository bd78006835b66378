#pragma once

// Construction helpers shared by the model builders. Internal to src/.

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hsc/models.hpp"

namespace hsc::detail {

// Per-component RNG streams so ablated builds initialize surviving components
// identically to the full build.
std::uint64_t component_seed(int seed, const std::string& tag);

struct ConvLayer {
  ConvSpec spec;
  ParamPtr w, b;
  std::shared_ptr<BatchNormState> bn;  // null = no batch norm
  Act act = Act::linear;
  bool act_before_bn = false;
  bool transposed = false;
};

ConvLayer make_conv_layer(ParamRegistry& reg, const std::string& name, int dims,
                          std::vector<int> kernel, int in_ch, int out_ch, std::vector<int> stride,
                          Padding pad, Act act, bool bn, std::mt19937_64& rng,
                          bool act_before_bn = false);

// Transposed layer mapping from_ch -> to_ch and growing each spatial extent by
// kernel-1 (stride 1, no padding).
ConvLayer make_deconv_layer(ParamRegistry& reg, const std::string& name, int dims,
                            std::vector<int> kernel, int from_ch, int to_ch, Act act, bool bn,
                            std::mt19937_64& rng, bool act_before_bn = false);

Tensor run_layer(ConvLayer& layer, const Tensor& x);

struct DenseLayer {
  ParamPtr w, b;
  Act act = Act::linear;
  std::shared_ptr<BatchNormState> bn;  // normalizes the pre-activation
};

DenseLayer make_dense_layer(ParamRegistry& reg, const std::string& name, int in, int out, Act act,
                            bool bn, std::mt19937_64& rng);

Tensor run_dense(DenseLayer& layer, const Tensor& x);

void set_training(std::vector<ConvLayer>& layers, bool training);
void set_training(std::vector<DenseLayer>& layers, bool training);

const Tensor& batch_input(const Batch& batch, std::size_t index, const std::string& what);
void require_patch_input(const Tensor& x, int patch, int bands, const std::string& what);
void require_vector_input(const Tensor& x, int bands, const std::string& what);
void require_labels(const Batch& batch, int classes);

// [N,p,p,B] -> [N,p,p,B,1] and back.
Tensor append_unit_channel(const Tensor& x);
Tensor drop_unit_channel(const Tensor& x);

// Center pixel spectra [N,B] of a [N,p,p,B] patch batch.
Tensor center_pixels(const Tensor& patches, int patch);

void assert_param_count(const ModelGraph& graph);

std::vector<ParamPtr> collect_params(const std::vector<ConvLayer>& layers);
std::vector<ParamPtr> collect_params(const std::vector<DenseLayer>& layers);

}  // namespace hsc::detail
