#include "hsc/blocks.hpp"

#include <stdexcept>

namespace hsc {
namespace {

void check_config(const SelfLoopBlockConfig& cfg) {
  if (cfg.K < 1) throw TensorError("self-loop block needs K >= 1, got " + std::to_string(cfg.K));
  if (cfg.F < 1) throw TensorError("self-loop block needs F >= 1, got " + std::to_string(cfg.F));
  if (cfg.r < 1) throw TensorError("self-loop block needs r >= 1, got " + std::to_string(cfg.r));
  if (cfg.dims < 1 || cfg.kernel < 1)
    throw TensorError("self-loop block needs positive dims and kernel");
}

Tensor zeros_like(const Tensor& t) { return Tensor::fill(t.shape(), 0.0); }

}  // namespace

SelfLoopBlock::SelfLoopBlock(ParamRegistry& reg, const std::string& name,
                             const SelfLoopBlockConfig& cfg_in, std::mt19937_64& rng)
    : cfg(cfg_in) {
  check_config(cfg);
  spec = make_conv_spec(cfg.dims, std::vector<int>(cfg.dims, cfg.kernel), cfg.F, cfg.F,
                        std::vector<int>(cfg.dims, 1), Padding::same);
  Shape wshape(spec.kernel.begin(), spec.kernel.end());
  wshape.push_back(cfg.F);
  wshape.push_back(cfg.F);
  for (int k = 0; k < cfg.K; ++k) {
    const std::string lname = name + ".k" + std::to_string(k);
    w_.push_back(reg.create(lname + ".w", wshape, glorot_init(wshape, rng)));
    b_.push_back(reg.create(lname + ".b", {cfg.F}, zeros_init(cfg.F)));
    if (cfg.use_bn) {
      gamma_.push_back(reg.create(lname + ".gamma", {cfg.F}, ones_init(cfg.F)));
      beta_.push_back(reg.create(lname + ".beta", {cfg.F}, zeros_init(cfg.F)));
    }
  }
  running.resize(cfg.K);
}

BlockLayerUse SelfLoopBlock::layer(int k) const {
  if (k < 0 || k >= cfg.K)
    throw TensorError("block layer index " + std::to_string(k) + " outside K=" +
                      std::to_string(cfg.K));
  BlockLayerUse u;
  u.w = w_[k]->tensor();
  u.b = b_[k]->tensor();
  if (cfg.use_bn) {
    u.gamma = gamma_[k]->tensor();
    u.beta = beta_[k]->tensor();
  }
  return u;
}

BlockLayerProvider SelfLoopBlock::provider() const {
  return [this](int k) { return layer(k); };
}

std::vector<Tensor> SelfLoopBlock::level1(const Tensor& c0, const BlockLayerProvider& p) {
  if (c0.shape().size() != static_cast<std::size_t>(cfg.dims) + 2)
    throw TensorError("block input rank " + std::to_string(c0.shape().size()) + " does not match " +
                      std::to_string(cfg.dims) + " spatial dims");
  if (c0.shape().back() != cfg.F)
    throw TensorError("block input has " + std::to_string(c0.shape().back()) +
                      " channels, expected F=" + std::to_string(cfg.F));
  std::vector<Tensor> c;
  c.reserve(cfg.K);
  Tensor z = c0;
  for (int k = 0; k < cfg.K; ++k) {
    if (k > 0) z = add(z, c[k - 1]);
    BlockLayerUse u = p(k);
    Tensor a = activation(cfg.act, conv_nd(spec, u.w, u.b, z));
    c.push_back(cfg.use_bn ? batch_norm_affine(a, u.gamma, u.beta, running[k], training) : a);
  }
  return c;
}

void SelfLoopBlock::level2(std::vector<Tensor>& c, const BlockLayerProvider& p) {
  if (static_cast<int>(c.size()) != cfg.K)
    throw TensorError("level-2 refinement expects K=" + std::to_string(cfg.K) +
                      " feature maps, got " + std::to_string(c.size()));
  for (int round = 0; round < cfg.r; ++round) {
    for (int k = 0; k < cfg.K; ++k) {
      Tensor z = zeros_like(c[k]);
      bool any = false;
      for (int j = 0; j < cfg.K; ++j) {
        if (j == k) continue;
        z = any ? add(z, c[j]) : c[j];
        any = true;
      }
      BlockLayerUse u = p(k);
      Tensor a = activation(cfg.act, conv_nd(spec, u.w, u.b, z));
      c[k] = cfg.use_bn ? batch_norm_affine(a, u.gamma, u.beta, running[k], training) : a;
    }
  }
}

Tensor SelfLoopBlock::run(const Tensor& c0) { return run(c0, provider()); }

Tensor SelfLoopBlock::run(const Tensor& c0, const BlockLayerProvider& p) {
  std::vector<Tensor> c = level1(c0, p);
  level2(c, p);
  const int axis = static_cast<int>(c0.shape().size()) - 1;
  return global_avg_pool(cfg.K == 1 ? c[0] : concat(axis, c));
}

Tensor SelfLoopBlock::run_final(const Tensor& c0) { return run_final(c0, provider()); }

Tensor SelfLoopBlock::run_final(const Tensor& c0, const BlockLayerProvider& p) {
  std::vector<Tensor> c = level1(c0, p);
  level2(c, p);
  return c.back();
}

std::pair<Tensor, Tensor> coupled_block(SelfLoopBlock& block, const Tensor& c0_hsi,
                                        const Tensor& c0_aux) {
  Tensor h = block.run(c0_hsi);
  Tensor a = block.run(c0_aux);
  return {h, a};
}

Tensor entry_projection(const Tensor& input, const Tensor& w, const Tensor& b) {
  const Shape& ws = w.shape();
  const Shape& is = input.shape();
  if (is.size() < 3) throw TensorError("entry projection input must be [N, spatial..., C]");
  const int dims = static_cast<int>(is.size()) - 2;
  if (ws.size() != static_cast<std::size_t>(dims) + 2)
    throw TensorError("entry projection weight rank " + std::to_string(ws.size()) +
                      " does not match input rank " + std::to_string(is.size()));
  for (int d = 0; d < dims; ++d)
    if (ws[d] != 1)
      throw TensorError("entry projection kernel must be 1 in every spatial dim, got " +
                        shape_str(ws));
  ConvSpec spec = make_conv_spec(dims, std::vector<int>(dims, 1), ws[dims], ws[dims + 1],
                                 std::vector<int>(dims, 1), Padding::same);
  return relu(conv_nd(spec, w, b, input));
}

Tensor multiscale_concat(const std::vector<Tensor>& gap_vectors) {
  if (gap_vectors.empty()) throw TensorError("multiscale concat needs at least one vector");
  for (const Tensor& t : gap_vectors)
    if (t.shape().size() != 2)
      throw TensorError("multiscale concat expects [N, features] inputs, got " +
                        shape_str(t.shape()));
  if (gap_vectors.size() == 1) return gap_vectors[0];
  return concat(1, gap_vectors);
}

}  // namespace hsc
