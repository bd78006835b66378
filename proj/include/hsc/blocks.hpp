#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hsc/layers.hpp"

namespace hsc {

// Self-looping convolution blocks: K conv layers whose weights are recycled
// across two feedback levels, optional extra unroll rounds r, and (when
// coupled) across two modality branches. Every use site resolves its layer
// parameters through a provider; the default provider hands out the single
// registered parameter set, so gradient accumulation yields the summed
// shared-weight gradient. Tests substitute a cloning provider to verify that
// law against independent copies.

struct BlockLayerUse {
  Tensor w;      // [kernel..., F, F]
  Tensor b;      // [F]
  Tensor gamma;  // [F], defined only when the block uses batch norm
  Tensor beta;   // [F]
};

using BlockLayerProvider = std::function<BlockLayerUse(int k)>;

struct SelfLoopBlockConfig {
  int K = 4;       // layers per block
  int F = 32;      // channel width
  int kernel = 3;  // uniform kernel extent
  int dims = 2;    // spatial dimensionality
  int r = 1;       // extra level-2 rounds
  Act act = Act::relu;
  bool use_bn = true;
};

class SelfLoopBlock {
 public:
  SelfLoopBlock(ParamRegistry& reg, const std::string& name, const SelfLoopBlockConfig& cfg,
                std::mt19937_64& rng);

  BlockLayerUse layer(int k) const;
  BlockLayerProvider provider() const;

  // z_k = c0 + sum_{j<k} c_j ; c_k = BN(act(w_k * z_k + b_k))
  std::vector<Tensor> level1(const Tensor& c0, const BlockLayerProvider& p);
  // sequentially k=1..K with z_k = sum_{j!=k} c_j (refined j<k), r rounds
  void level2(std::vector<Tensor>& c, const BlockLayerProvider& p);

  // level1 + level2, concat c_1..c_K along channels, GAP -> [N, K*F]
  Tensor run(const Tensor& c0);
  Tensor run(const Tensor& c0, const BlockLayerProvider& p);
  // level1 + level2, final refined c_K feature stream (FBAE path)
  Tensor run_final(const Tensor& c0);
  Tensor run_final(const Tensor& c0, const BlockLayerProvider& p);

  SelfLoopBlockConfig cfg;
  ConvSpec spec;
  std::vector<BatchNormRunning> running;
  bool training = true;

 private:
  std::vector<ParamPtr> w_, b_, gamma_, beta_;
};

// Runs both modality branches through the SAME block parameters.
std::pair<Tensor, Tensor> coupled_block(SelfLoopBlock& block, const Tensor& c0_hsi,
                                        const Tensor& c0_aux);

// 1x...x1 convolution + ReLU producing the block entry features c0.
Tensor entry_projection(const Tensor& input, const Tensor& w, const Tensor& b);

// Concatenation of per-scale GAP vectors in configuration order.
Tensor multiscale_concat(const std::vector<Tensor>& gap_vectors);

}  // namespace hsc
