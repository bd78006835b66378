#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hsc/tensor.hpp"

namespace hsc {

// Layout conventions (used by every layer):
//   feature maps   [N, spatial..., C]   (channels last)
//   conv weights   [kernel..., Cin, Cout]
//   conv bias      [Cout]
//   dense weights  [in, out], bias [out]

enum class Padding { none, same };

struct ConvSpec {
  int dims = 1;  // 1|2|3 spatial dimensions
  std::vector<int> kernel;
  int in_channels = 1;
  int out_channels = 1;
  std::vector<int> stride;
  Padding padding = Padding::none;
};

ConvSpec make_conv_spec(int dims, std::vector<int> kernel, int in_ch, int out_ch,
                        std::vector<int> stride, Padding pad);

// Direct n-dimensional cross-correlation with stride and zero padding.
Tensor conv_nd(const ConvSpec& spec, const Tensor& weights, const Tensor& bias,
               const Tensor& input);

// Adjoint of conv_nd: maps [N, out-spatial..., Cout] back to [N, in-spatial..., Cin]
// using the same [kernel..., Cin, Cout] weights; bias has shape [Cin].
Tensor transposed_conv_nd(const ConvSpec& spec, const Tensor& weights, const Tensor& bias,
                          const Tensor& input);

// Channelwise convolution: weights [kernel..., C], bias [C]; one filter per channel.
Tensor depthwise_conv_nd(int dims, const Tensor& weights, const Tensor& bias, const Tensor& input,
                         const std::vector<int>& stride, Padding pad);

// Max pooling over spatial dims, padding none; gradient routed to the first
// (row-major) maximal element of each window.
Tensor max_pool(const Tensor& input, const std::vector<int>& window,
                const std::vector<int>& stride);

// [N, spatial..., C] -> [N, C] mean over all spatial positions.
Tensor global_avg_pool(const Tensor& input);

enum class Act { linear, relu, sigmoid, tanh, softmax };

Act act_from_string(const std::string& name);
std::string act_name(Act a);

// softmax acts over the trailing axis; `axis` must name it (or -1).
Tensor activation(Act kind, const Tensor& input, int axis = -1);

// activation(input·W + b)
Tensor dense(const Tensor& weights, const Tensor& bias, const Tensor& input,
             Act act = Act::linear);

// Running statistics of one batch-norm site. Shared across every use site of
// the owning layer (levels, unroll rounds, coupled branches).
struct BatchNormRunning {
  std::vector<double> mean;
  std::vector<double> var;
  double eps = 1e-5;
  double momentum = 0.9;
};

// Normalizes over all leading dims per channel (trailing axis). Train mode uses
// batch statistics (biased variance) and updates `running` outside the graph;
// eval mode normalizes with the stored running statistics.
Tensor batch_norm_affine(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         BatchNormRunning& running, bool training);

struct BatchNormState {
  ParamPtr gamma;
  ParamPtr beta;
  BatchNormRunning running;
  bool training = true;
};

BatchNormState make_batch_norm(ParamRegistry& reg, const std::string& name, int channels);
Tensor batch_norm(BatchNormState& state, const Tensor& input);

struct GruCellParams {
  ParamPtr W_r, W_u, W_c;  // [in, hidden]
  ParamPtr U_r, U_u, U_c;  // [hidden, hidden]
  ParamPtr v_r, v_u, v_c;  // [hidden]
  int input_size = 0;
  int hidden = 0;
};

GruCellParams make_gru_cell(ParamRegistry& reg, const std::string& name, int input_size,
                            int hidden, std::mt19937_64& rng);

// r = sig(xW_r + hU_r + v_r); u = sig(xW_u + hU_u + v_u);
// c = tanh(xW_c + (r*h)U_c + v_c); h' = u*h + (1-u)*c
Tensor gru_step(const GruCellParams& p, const Tensor& x, const Tensor& h_prev);

// sequence [N, B, in] -> [N, B, hidden]; initial state zero.
Tensor gru_forward(const GruCellParams& p, const Tensor& sequence);

// sequence [N, B, in] -> [N, B, 2*hidden]; per step [forward ; backward] states.
Tensor bigru_forward(const GruCellParams& fwd, const GruCellParams& bwd, const Tensor& sequence);

// Inverted dropout; identity when !training. Deterministic given rng state.
Tensor dropout(const Tensor& input, double rate, std::mt19937_64& rng, bool training);

}  // namespace hsc
