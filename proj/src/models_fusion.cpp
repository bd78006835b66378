#include <cmath>
#include <memory>
#include <utility>

#include "hsc/models.hpp"
#include "model_parts.hpp"

// The three fusion/attention classifiers. Each builder wires a state struct
// into ModelGraph closures; forward rebuilds the graph from current parameter
// values on every call.

namespace hsc {

namespace {

using detail::ConvLayer;
using detail::DenseLayer;

int ceil_div(int a, int b) { return (a + b - 1) / b; }

// ---- dual-attention classifier ------------------------------------------------

// Output length of one valid-padding conv/pool step.
int stepped(int len, int kernel, int stride) { return (len - kernel) / stride + 1; }

struct HybatState {
  ArchitectureConfig cfg;
  std::shared_ptr<ParamRegistry> reg;

  std::vector<ConvLayer> spec_stack;           // center-spectrum -> band weights
  ConvLayer sa1, sa2, sa3, sd1, sd2, sd3;      // patch -> spatial mask
  ParamPtr combine_logits;                     // three blend logits
  ConvLayer c1, c2, c3, c4;                    // 3D classifier

  Tensor band_weights(const Tensor& vec) {
    const int n = vec.shape()[0];
    Tensor h = reshape(vec, {n, cfg.bands[0], 1});
    for (ConvLayer& l : spec_stack) h = detail::run_layer(l, h);
    return reshape(h, {n, cfg.bands[0]});
  }

  Tensor spatial_mask(const Tensor& x) {
    Tensor a1 = detail::run_layer(sa1, x);
    Tensor a2 = detail::run_layer(sa2, a1);
    Tensor a3 = detail::run_layer(sa3, a2);
    Tensor cat = concat(3, {a1, a3});
    Tensor pooled = max_pool(cat, {2, 2}, {2, 2});
    Tensor d1 = detail::run_layer(sd1, pooled);
    Tensor d2 = detail::run_layer(sd2, d1);
    return detail::run_layer(sd3, d2);
  }

  Tensor combined_patch(const Batch& batch) {
    const Tensor& x = detail::batch_input(batch, 0, "patch");
    detail::require_patch_input(x, cfg.patch, cfg.bands[0], "patch");
    if (cfg.identity_combine) return x;
    Tensor vec;
    if (batch.inputs.size() > 1 && batch.inputs[1].defined()) {
      const Shape& vs = batch.inputs[1].shape();
      if (vs.size() != 2 || vs[1] != cfg.bands[0])
        throw ModelError("patch/vector band mismatch: patches carry " +
                         std::to_string(cfg.bands[0]) + " bands but the spectra input is " +
                         shape_str(vs));
      if (vs[0] != x.shape()[0])
        throw ModelError("patch and spectra batches differ in sample count");
      vec = batch.inputs[1];
    } else {
      vec = detail::center_pixels(x, cfg.patch);
    }
    Tensor vb = band_weights(vec);
    Tensor ma = spatial_mask(x);
    Tensor f_b = spectral_attention(vb, x);
    Tensor f_a = spatial_attention(ma, x);
    return adaptive_combine(combine_logits->tensor(), f_b, f_a, x);
  }

  Tensor class_logits(const Tensor& ic) {
    Tensor v0 = detail::append_unit_channel(ic);
    Tensor v1 = detail::run_layer(c1, v0);
    Tensor p1 = max_pool(v1, {2, 2, 2}, {2, 2, 2});
    Tensor v2 = detail::run_layer(c2, p1);
    Tensor p2 = max_pool(v2, {2, 2, 2}, {2, 2, 2});
    Tensor v3 = detail::run_layer(c3, p2);
    Tensor v4 = detail::run_layer(c4, v3);
    return reshape(v4, {ic.shape()[0], cfg.classes});
  }
};

}  // namespace

ModelGraph build_hybatnet(const ArchitectureConfig& cfg) {
  if (cfg.kind != ModelKind::hybatnet)
    throw ModelError("build_hybatnet got kind " + model_kind_name(cfg.kind));
  validate(cfg);
  const int bands = cfg.bands[0];
  const int p = cfg.patch;
  if (p < 5)
    throw ModelError("dual-attention classifier needs a patch of at least 5, got " +
                     std::to_string(p));

  auto state = std::make_shared<HybatState>();
  state->cfg = cfg;
  state->reg = std::make_shared<ParamRegistry>();
  ParamRegistry& reg = *state->reg;
  std::int64_t count = 0;

  if (!cfg.identity_combine) {
    // Spectral stack: kernel scaled to the band count, strides 1,1,2,2, widths
    // climbing back to B so the output is one weight per band.
    std::mt19937_64 spec_rng(detail::component_seed(cfg.seed, "spectral"));
    const int k = std::max<int>(2, static_cast<int>(std::llround(bands * 20.0 / 144.0)));
    const int widths[5] = {ceil_div(bands, 8), ceil_div(bands, 4), ceil_div(bands, 2),
                           ceil_div(3 * bands, 4), bands};
    const int strides[4] = {1, 1, 2, 2};
    int len = bands;
    int in_ch = 1;
    for (int i = 0; i < 4; ++i) {
      if (len < k)
        throw ModelError("spectral stack needs at least 6 bands, got " + std::to_string(bands));
      state->spec_stack.push_back(detail::make_conv_layer(
          reg, "s_b.c" + std::to_string(i + 1), 1, {k}, in_ch, widths[i], {strides[i]},
          Padding::none, Act::relu, true, spec_rng));
      len = stepped(len, k, strides[i]);
      in_ch = widths[i];
    }
    if (len < 1)
      throw ModelError("spectral stack needs at least 6 bands, got " + std::to_string(bands));
    state->spec_stack.push_back(detail::make_conv_layer(reg, "s_b.c5", 1, {len}, in_ch,
                                                        widths[4], {1}, Padding::none, Act::relu,
                                                        false, spec_rng));
    count += 18;

    // Spatial stack: valid conv + two same convs, a concat shortcut, one pool,
    // then two growing transposed convs and a 1x1 back to the band count.
    std::mt19937_64 spat_rng(detail::component_seed(cfg.seed, "spatial"));
    const int wa = cfg.width;
    state->sa1 = detail::make_conv_layer(reg, "s_a.c1", 2, {3, 3}, bands, wa, {1, 1},
                                         Padding::none, Act::relu, true, spat_rng);
    state->sa2 = detail::make_conv_layer(reg, "s_a.c2", 2, {3, 3}, wa, wa, {1, 1}, Padding::same,
                                         Act::relu, true, spat_rng);
    state->sa3 = detail::make_conv_layer(reg, "s_a.c3", 2, {3, 3}, wa, 2 * wa, {1, 1},
                                         Padding::same, Act::relu, true, spat_rng);
    const int m = (p - 3) / 2;  // extent after the valid conv and the 2x2 pool
    const int k1 = (p - m + 2) / 2;
    const int k2 = p - m + 2 - k1;
    state->sd1 = detail::make_deconv_layer(reg, "s_a.d1", 2, {k1, k1}, 3 * wa, wa, Act::relu,
                                           true, spat_rng);
    state->sd2 = detail::make_deconv_layer(reg, "s_a.d2", 2, {k2, k2}, wa, wa, Act::relu, true,
                                           spat_rng);
    state->sd3 = detail::make_deconv_layer(reg, "s_a.d3", 2, {1, 1}, wa, bands, Act::relu, false,
                                           spat_rng);
    count += 22;

    state->combine_logits = reg.create("combine.logits", {3}, zeros_init(3));
    count += 1;
  }

  // 3D classifier over [N,p,p,B,1]: two conv+pool rounds, a third conv, and a
  // full-extent conv emitting one logit per class.
  std::mt19937_64 cls_rng(detail::component_seed(cfg.seed, "classifier"));
  const int wc = cfg.width;
  const int ks = std::min(bands, std::max(2, (bands + 3) / 4));
  int eb = bands;
  int ep = p;
  state->c1 = detail::make_conv_layer(reg, "cls.c1", 3, {3, 3, ks}, 1, wc, {1, 1, 1},
                                      Padding::same, Act::relu, false, cls_rng);
  if (ep < 2 || eb < 2) throw ModelError("classifier pool does not fit the input cube");
  ep = stepped(ep, 2, 2);
  eb = stepped(eb, 2, 2);
  state->c2 = detail::make_conv_layer(reg, "cls.c2", 3, {3, 3, ks}, wc, 2 * wc, {1, 1, 1},
                                      Padding::same, Act::relu, false, cls_rng);
  if (ep < 2 || eb < 2)
    throw ModelError("classifier needs at least 4 bands, got " + std::to_string(bands));
  ep = stepped(ep, 2, 2);
  eb = stepped(eb, 2, 2);
  state->c3 = detail::make_conv_layer(reg, "cls.c3", 3, {3, 3, ks}, 2 * wc, 4 * wc, {1, 1, 1},
                                      Padding::same, Act::relu, false, cls_rng);
  state->c4 = detail::make_conv_layer(reg, "cls.c4", 3, {ep, ep, eb}, 4 * wc, cfg.classes,
                                      {1, 1, 1}, Padding::none, Act::linear, false, cls_rng);
  count += 8;

  ModelGraph graph;
  graph.cfg = cfg;
  graph.reg = state->reg;
  graph.expected_param_count = count;
  graph.forward = [state](const Batch& batch) {
    Tensor logits = state->class_logits(state->combined_patch(batch));
    return softmax_lastdim(logits);
  };
  graph.loss = [state](const Batch& batch) {
    detail::require_labels(batch, state->cfg.classes);
    Tensor logits = state->class_logits(state->combined_patch(batch));
    Tensor probs = softmax_lastdim(logits);
    Tensor ce = cross_entropy(batch.labels, probs);
    if (state->cfg.wasserstein_weight == 0.0) return combine_losses({{"ce", 1.0, ce}});
    Tensor w = wasserstein_loss(batch.labels, logits);
    return combine_losses(
        {{"ce", 1.0, ce}, {"wasserstein", -state->cfg.wasserstein_weight, w}});
  };
  graph.set_training = [state](bool training) {
    detail::set_training(state->spec_stack, training);
    for (ConvLayer* l : {&state->sa1, &state->sa2, &state->sa3, &state->sd1, &state->sd2})
      if (l->bn) l->bn->training = training;
  };
  detail::assert_param_count(graph);
  return graph;
}

// ---- cross-attention fusion classifier -----------------------------------------

namespace {

struct FusatState {
  ArchitectureConfig cfg;
  std::shared_ptr<ParamRegistry> reg;

  std::vector<ConvLayer> f_hs, f_m;        // feature extractors (six convs)
  std::vector<ConvLayer> a_s;              // spectral-mask module
  std::vector<ConvLayer> a_t, a_m;         // spatial-mask modules
  std::vector<ConvLayer> cls_reps;         // shrinking valid convs
  ConvLayer cls_shrink, cls_out;

  Tensor run_stack(std::vector<ConvLayer>& stack, const Tensor& x) {
    Tensor h = x;
    for (ConvLayer& l : stack) h = detail::run_layer(l, h);
    return h;
  }

  // residual pairs (c1,c2) and (c3,c4), poolable after each pair and after c6,
  // collapsed to a channel vector
  Tensor run_spectral_mask(std::vector<ConvLayer>& stack, const Tensor& x) {
    Tensor y1 = detail::run_layer(stack[0], x);
    Tensor y2 = detail::run_layer(stack[1], y1);
    Tensor r1 = add(y2, y1);
    Tensor h1 = pool_if_possible(r1);
    Tensor y3 = detail::run_layer(stack[2], h1);
    Tensor y4 = detail::run_layer(stack[3], y3);
    Tensor r2 = add(y4, y3);
    Tensor h2 = pool_if_possible(r2);
    Tensor y5 = detail::run_layer(stack[4], h2);
    Tensor y6 = detail::run_layer(stack[5], y5);
    Tensor h3 = pool_if_possible(y6);
    return global_avg_pool(h3);
  }

  // same residual pairs, no pooling: a full-resolution mask map
  Tensor run_spatial_mask(std::vector<ConvLayer>& stack, const Tensor& x) {
    Tensor y1 = detail::run_layer(stack[0], x);
    Tensor y2 = detail::run_layer(stack[1], y1);
    Tensor r1 = add(y2, y1);
    Tensor y3 = detail::run_layer(stack[2], r1);
    Tensor y4 = detail::run_layer(stack[3], y3);
    Tensor r2 = add(y4, y3);
    Tensor y5 = detail::run_layer(stack[4], r2);
    return detail::run_layer(stack[5], y5);
  }

  static Tensor pool_if_possible(const Tensor& x) {
    const Shape& s = x.shape();
    if (s[1] < 2 || s[2] < 2) return x;
    return max_pool(x, {2, 2}, {2, 2});
  }

  Tensor class_logits(const Tensor& f_ss) {
    Tensor h = f_ss;
    for (ConvLayer& l : cls_reps) h = detail::run_layer(l, h);
    Tensor s = detail::run_layer(cls_shrink, h);
    Tensor o = detail::run_layer(cls_out, s);
    return reshape(o, {f_ss.shape()[0], cfg.classes});
  }

  Tensor logits(const Batch& batch) {
    const Tensor& x_h = detail::batch_input(batch, 0, "hyperspectral");
    const Tensor& x_l = detail::batch_input(batch, 1, "auxiliary");
    detail::require_patch_input(x_h, cfg.patch, cfg.bands[0], "hyperspectral");
    detail::require_patch_input(x_l, cfg.patch, cfg.bands[1], "auxiliary");
    if (x_h.shape()[0] != x_l.shape()[0])
      throw ModelError("modalities carry different sample counts");
    Tensor fhs = run_stack(f_hs, x_h);
    Tensor as_vec = run_spectral_mask(a_s, x_h);
    Tensor m_s = cross_attention_mask(fhs, as_vec);
    Tensor at_map = run_spatial_mask(a_t, x_l);
    Tensor m_t = cross_attention_mask(fhs, at_map);
    Tensor fused = modality_fusion_input(x_h, x_l, m_s, m_t);
    Tensor fm = run_stack(f_m, fused);
    Tensor am_map = run_spatial_mask(a_m, fused);
    Tensor f_ss = final_spectrospatial(fm, am_map);
    return class_logits(f_ss);
  }
};

std::vector<ConvLayer> make_six_convs(ParamRegistry& reg, const std::string& prefix, int in_ch,
                                      const int widths[6], std::mt19937_64& rng) {
  std::vector<ConvLayer> stack;
  int ch = in_ch;
  for (int i = 0; i < 6; ++i) {
    stack.push_back(detail::make_conv_layer(reg, prefix + ".c" + std::to_string(i + 1), 2, {3, 3},
                                            ch, widths[i], {1, 1}, Padding::same, Act::relu, true,
                                            rng));
    ch = widths[i];
  }
  return stack;
}

}  // namespace

ModelGraph build_fusatnet(const ArchitectureConfig& cfg) {
  if (cfg.kind != ModelKind::fusatnet)
    throw ModelError("build_fusatnet got kind " + model_kind_name(cfg.kind));
  validate(cfg);
  const int b1 = cfg.bands[0];
  const int b2 = cfg.bands[1];
  const int w = cfg.width;
  const int u = std::max(1, w / 2);

  auto state = std::make_shared<FusatState>();
  state->cfg = cfg;
  state->reg = std::make_shared<ParamRegistry>();
  ParamRegistry& reg = *state->reg;

  const int extract_widths[6] = {w, w, w, w, w, 4 * w};
  const int mask_widths[6] = {u, u, w, w, w, 4 * w};

  std::mt19937_64 fhs_rng(detail::component_seed(cfg.seed, "f_hs"));
  state->f_hs = make_six_convs(reg, "f_hs", b1, extract_widths, fhs_rng);
  std::mt19937_64 as_rng(detail::component_seed(cfg.seed, "a_s"));
  state->a_s = make_six_convs(reg, "a_s", b1, extract_widths, as_rng);
  std::mt19937_64 at_rng(detail::component_seed(cfg.seed, "a_t"));
  state->a_t = make_six_convs(reg, "a_t", b2, mask_widths, at_rng);
  const int fused_ch = b1 + b2 + 8 * w;
  std::mt19937_64 fm_rng(detail::component_seed(cfg.seed, "f_m"));
  state->f_m = make_six_convs(reg, "f_m", fused_ch, extract_widths, fm_rng);
  std::mt19937_64 am_rng(detail::component_seed(cfg.seed, "a_m"));
  state->a_m = make_six_convs(reg, "a_m", fused_ch, mask_widths, am_rng);

  // classifier: shrink by valid 3x3 convs (at most four) until the extent is
  // small, collapse with a full-extent conv, then 1x1 to the class logits
  std::mt19937_64 cls_rng(detail::component_seed(cfg.seed, "classifier"));
  int extent = cfg.patch;
  int ch = 4 * w;
  int n_rep = 0;
  while (n_rep < 4 && extent > 3) {
    state->cls_reps.push_back(detail::make_conv_layer(reg, "cls.rep" + std::to_string(n_rep + 1),
                                                      2, {3, 3}, ch, w, {1, 1}, Padding::none,
                                                      Act::relu, true, cls_rng));
    ch = w;
    extent -= 2;
    ++n_rep;
  }
  state->cls_shrink = detail::make_conv_layer(reg, "cls.shrink", 2, {extent, extent}, ch, 4 * w,
                                              {1, 1}, Padding::none, Act::relu, true, cls_rng);
  state->cls_out = detail::make_conv_layer(reg, "cls.out", 2, {1, 1}, 4 * w, cfg.classes, {1, 1},
                                           Padding::none, Act::linear, false, cls_rng);

  ModelGraph graph;
  graph.cfg = cfg;
  graph.reg = state->reg;
  graph.expected_param_count = 126 + 4 * n_rep;
  graph.forward = [state](const Batch& batch) { return softmax_lastdim(state->logits(batch)); };
  graph.loss = [state](const Batch& batch) {
    detail::require_labels(batch, state->cfg.classes);
    Tensor probs = softmax_lastdim(state->logits(batch));
    Tensor ce = cross_entropy(batch.labels, probs);
    return combine_losses({{"ce", 1.0, ce}});
  };
  graph.set_training = [state](bool training) {
    detail::set_training(state->f_hs, training);
    detail::set_training(state->a_s, training);
    detail::set_training(state->a_t, training);
    detail::set_training(state->f_m, training);
    detail::set_training(state->a_m, training);
    detail::set_training(state->cls_reps, training);
    if (state->cls_shrink.bn) state->cls_shrink.bn->training = training;
  };
  detail::assert_param_count(graph);
  return graph;
}

// ---- coupled multiscale fusion classifier ---------------------------------------

namespace {

struct CmrDecoder {
  DenseLayer fc;                  // GAP concat -> w channels
  std::vector<ConvLayer> blocks;  // eight transposed-conv blocks
  std::vector<bool> skip;         // residual (extent-preserving) positions
};

struct HyperFuseState {
  ArchitectureConfig cfg;
  std::shared_ptr<ParamRegistry> reg;

  struct ScalePath {
    ConvLayer depth;              // 3D conv over the HSI cube
    ParamPtr entry_h_w, entry_h_b;
    ParamPtr entry_a_w, entry_a_b;
    std::shared_ptr<SelfLoopBlock> block;
    DenseLayer fc1;
  };
  std::vector<ScalePath> paths;
  DenseLayer fc2;
  CmrDecoder r_h, r_l;  // r_h rebuilds the aux patch, r_l the HSI patch

  struct ForwardParts {
    Tensor probs;
    Tensor gaps_h, gaps_l;  // [N, S*K*F] per-modality concatenations
  };

  ForwardParts run(const Batch& batch) {
    const Tensor& x_h = detail::batch_input(batch, 0, "hyperspectral");
    const Tensor& x_l = detail::batch_input(batch, 1, "auxiliary");
    detail::require_patch_input(x_h, cfg.patch, cfg.bands[0], "hyperspectral");
    detail::require_patch_input(x_l, cfg.patch, cfg.bands[1], "auxiliary");
    if (x_h.shape()[0] != x_l.shape()[0])
      throw ModelError("modalities carry different sample counts");
    const int n = x_h.shape()[0];
    std::vector<Tensor> gaps_h, gaps_l, fc1_out;
    Tensor cube = detail::append_unit_channel(x_h);
    for (ScalePath& path : paths) {
      Tensor feat3d = detail::run_layer(path.depth, cube);
      Tensor flat = reshape(feat3d, {n, cfg.patch, cfg.patch,
                                     cfg.bands[0] * cfg.depth_filters});
      Tensor c0h = entry_projection(flat, path.entry_h_w->tensor(), path.entry_h_b->tensor());
      Tensor c0a = entry_projection(x_l, path.entry_a_w->tensor(), path.entry_a_b->tensor());
      auto [gap_h, gap_l] = coupled_block(*path.block, c0h, c0a);
      Tensor joint = concat(1, {gap_h, gap_l});
      Tensor f1 = detail::run_dense(path.fc1, joint);
      gaps_h.push_back(gap_h);
      gaps_l.push_back(gap_l);
      fc1_out.push_back(f1);
    }
    ForwardParts parts;
    Tensor merged = concat(1, fc1_out);
    parts.probs = detail::run_dense(fc2, merged);
    parts.gaps_h = gaps_h.size() == 1 ? gaps_h[0] : concat(1, gaps_h);
    parts.gaps_l = gaps_l.size() == 1 ? gaps_l[0] : concat(1, gaps_l);
    return parts;
  }

  Tensor decode(CmrDecoder& dec, const Tensor& gaps) {
    const int n = gaps.shape()[0];
    Tensor h = detail::run_dense(dec.fc, gaps);
    h = reshape(h, {n, 1, 1, cfg.width});
    for (std::size_t i = 0; i < dec.blocks.size(); ++i) {
      if (dec.skip[i]) {
        Tensor y = detail::run_layer(dec.blocks[i], h);
        h = add(y, h);
      } else {
        h = detail::run_layer(dec.blocks[i], h);
      }
    }
    return h;
  }
};

// Eight-block transposed-conv decoder growing 1x1 features back to a p x p
// patch: five growing blocks whose kernel extents sum to p-1+5, interleaved
// with extent-preserving residual blocks at positions 3, 5, and 7.
CmrDecoder make_cmr_decoder(ParamRegistry& reg, const std::string& prefix,
                            const ArchitectureConfig& cfg, int in_dim, int target_bands,
                            std::mt19937_64& rng) {
  CmrDecoder dec;
  dec.fc = detail::make_dense_layer(reg, prefix + ".fc", in_dim, cfg.width, Act::relu, false,
                                    rng);
  const int grow_total = cfg.patch - 1;
  const int base = grow_total / 5;
  const int rem = grow_total % 5;
  int grow_index = 0;
  for (int b = 1; b <= 8; ++b) {
    const bool skip = (b == 3 || b == 5 || b == 7);
    const std::string name = prefix + ".b" + std::to_string(b);
    int kernel = 1;
    if (!skip) {
      kernel = base + 1 + (grow_index < rem ? 1 : 0);
      ++grow_index;
    }
    const bool final_block = b == 8;
    const int out_ch = final_block ? target_bands : cfg.width;
    dec.blocks.push_back(detail::make_deconv_layer(reg, name, 2, {kernel, kernel}, cfg.width,
                                                   out_ch, final_block ? Act::sigmoid : Act::relu,
                                                   !final_block, rng,
                                                   /*act_before_bn=*/true));
    dec.skip.push_back(skip);
  }
  return dec;
}

}  // namespace

ModelGraph build_hyperfusenet(const ArchitectureConfig& cfg) {
  if (cfg.kind != ModelKind::hyperfusenet)
    throw ModelError("build_hyperfusenet got kind " + model_kind_name(cfg.kind));
  validate(cfg);
  const int b1 = cfg.bands[0];
  const int b2 = cfg.bands[1];
  const int f = cfg.block_width;
  const int k = cfg.block_layers;
  const int s_count = static_cast<int>(cfg.scales.size());

  auto state = std::make_shared<HyperFuseState>();
  state->cfg = cfg;
  state->reg = std::make_shared<ParamRegistry>();
  ParamRegistry& reg = *state->reg;

  for (int scale : cfg.scales) {
    std::mt19937_64 rng(detail::component_seed(cfg.seed, "scale" + std::to_string(scale)));
    HyperFuseState::ScalePath path;
    const std::string prefix = "s" + std::to_string(scale);
    path.depth = detail::make_conv_layer(reg, prefix + ".depth", 3, {scale, scale, scale}, 1,
                                         cfg.depth_filters, {1, 1, 1}, Padding::same, Act::relu,
                                         false, rng);
    const Shape eh{1, 1, b1 * cfg.depth_filters, f};
    path.entry_h_w = reg.create(prefix + ".entry_h.w", eh, glorot_init(eh, rng));
    path.entry_h_b = reg.create(prefix + ".entry_h.b", {f}, zeros_init(f));
    const Shape ea{1, 1, b2, f};
    path.entry_a_w = reg.create(prefix + ".entry_a.w", ea, glorot_init(ea, rng));
    path.entry_a_b = reg.create(prefix + ".entry_a.b", {f}, zeros_init(f));
    SelfLoopBlockConfig bcfg;
    bcfg.K = k;
    bcfg.F = f;
    bcfg.kernel = scale;
    bcfg.dims = 2;
    bcfg.r = cfg.block_rounds;
    path.block = std::make_shared<SelfLoopBlock>(reg, prefix + ".block", bcfg, rng);
    path.fc1 = detail::make_dense_layer(reg, prefix + ".fc1", 2 * k * f, 32, Act::relu, false,
                                        rng);
    state->paths.push_back(std::move(path));
  }
  std::mt19937_64 head_rng(detail::component_seed(cfg.seed, "head"));
  state->fc2 = detail::make_dense_layer(reg, "fc2", 32 * s_count, cfg.classes, Act::softmax,
                                        false, head_rng);
  const int gap_dim = s_count * k * f;
  std::mt19937_64 rh_rng(detail::component_seed(cfg.seed, "r_h"));
  state->r_h = make_cmr_decoder(reg, "r_h", cfg, gap_dim, b2, rh_rng);
  std::mt19937_64 rl_rng(detail::component_seed(cfg.seed, "r_l"));
  state->r_l = make_cmr_decoder(reg, "r_l", cfg, gap_dim, b1, rl_rng);

  ModelGraph graph;
  graph.cfg = cfg;
  graph.reg = state->reg;
  graph.expected_param_count =
      static_cast<std::int64_t>(s_count) * (8 + 4 * k) + 2 + 64;
  graph.forward = [state](const Batch& batch) { return state->run(batch).probs; };
  graph.loss = [state](const Batch& batch) {
    detail::require_labels(batch, state->cfg.classes);
    auto parts = state->run(batch);
    Tensor ce = cross_entropy(batch.labels, parts.probs);
    Tensor rec_hsi = state->decode(state->r_l, parts.gaps_l);
    Tensor rec_aux = state->decode(state->r_h, parts.gaps_h);
    Tensor mse_l2h = mse_reconstruction(batch.inputs[0], rec_hsi);
    Tensor mse_h2l = mse_reconstruction(batch.inputs[1], rec_aux);
    return combine_losses({{"ce", 1.0, ce},
                           {"recon_l2h", state->cfg.lambda1, mse_l2h},
                           {"recon_h2l", state->cfg.lambda2, mse_h2l}});
  };
  graph.set_training = [state](bool training) {
    for (auto& path : state->paths) path.block->training = training;
    detail::set_training(state->r_h.blocks, training);
    detail::set_training(state->r_l.blocks, training);
  };
  detail::assert_param_count(graph);
  return graph;
}

}  // namespace hsc
