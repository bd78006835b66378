#include <memory>
#include <utility>

#include "hsc/models.hpp"
#include "model_parts.hpp"

// The four reconstruction models. All share the ModelGraph contract: forward
// returns the reconstruction (same shape as the input), encode returns the
// bottleneck, loss is the plain MSE.

namespace hsc {

namespace {

using detail::ConvLayer;
using detail::DenseLayer;

Tensor ae_mse(const Tensor& input, const Tensor& recon) {
  return mse_reconstruction(input, recon);
}

// ---- spectral attention autoencoder ---------------------------------------------

struct AttAeState {
  ArchitectureConfig cfg;
  std::shared_ptr<ParamRegistry> reg;
  struct AttBlock {
    ConvLayer feat;  // k3 same, relu
    ConvLayer mask;  // k3 same, linear
  };
  std::vector<AttBlock> enc_blocks;
  DenseLayer enc_fc, dec_fc;
  std::vector<ConvLayer> dec_convs;

  Tensor encode(const Tensor& vec) {
    const int n = vec.shape()[0];
    Tensor h = reshape(vec, {n, cfg.bands[0], 1});
    for (AttBlock& blk : enc_blocks) {
      Tensor feat = detail::run_layer(blk.feat, h);
      Tensor mask = detail::run_layer(blk.mask, feat);
      Tensor gated = mul(feat, mask);
      h = add(gated, feat);  // residual keeps the block an identity at zero mask
    }
    Tensor flat = reshape(h, {n, cfg.bands[0] * cfg.width});
    return detail::run_dense(enc_fc, flat);
  }

  Tensor decode(const Tensor& code) {
    const int n = code.shape()[0];
    Tensor h = detail::run_dense(dec_fc, code);
    h = reshape(h, {n, cfg.bands[0], cfg.width});
    for (ConvLayer& l : dec_convs) h = detail::run_layer(l, h);
    return reshape(h, {n, cfg.bands[0]});
  }
};

ModelGraph build_attae(const ArchitectureConfig& cfg) {
  auto state = std::make_shared<AttAeState>();
  state->cfg = cfg;
  state->reg = std::make_shared<ParamRegistry>();
  ParamRegistry& reg = *state->reg;
  const int bands = cfg.bands[0];
  const int w = cfg.width;

  std::mt19937_64 enc_rng(detail::component_seed(cfg.seed, "encoder"));
  int ch = 1;
  for (int i = 1; i <= 5; ++i) {
    AttAeState::AttBlock blk;
    const std::string prefix = "enc.b" + std::to_string(i);
    blk.feat = detail::make_conv_layer(reg, prefix + ".f", 1, {3}, ch, w, {1}, Padding::same,
                                       Act::relu, false, enc_rng);
    blk.mask = detail::make_conv_layer(reg, prefix + ".m", 1, {3}, w, w, {1}, Padding::same,
                                       Act::linear, false, enc_rng);
    state->enc_blocks.push_back(std::move(blk));
    ch = w;
  }
  state->enc_fc = detail::make_dense_layer(reg, "enc.fc", bands * w, cfg.code_dim, Act::linear,
                                           false, enc_rng);
  std::mt19937_64 dec_rng(detail::component_seed(cfg.seed, "decoder"));
  state->dec_fc = detail::make_dense_layer(reg, "dec.fc", cfg.code_dim, bands * w, Act::relu,
                                           false, dec_rng);
  for (int i = 1; i <= 5; ++i) {
    const bool last = i == 5;
    state->dec_convs.push_back(detail::make_conv_layer(reg, "dec.c" + std::to_string(i), 1, {3},
                                                       w, last ? 1 : w, {1}, Padding::same,
                                                       last ? Act::linear : Act::relu, false,
                                                       dec_rng));
  }

  ModelGraph graph;
  graph.cfg = cfg;
  graph.reg = state->reg;
  graph.expected_param_count = 34;
  graph.forward = [state](const Batch& batch) {
    const Tensor& x = detail::batch_input(batch, 0, "spectrum");
    detail::require_vector_input(x, state->cfg.bands[0], "spectrum");
    return state->decode(state->encode(x));
  };
  graph.encode = [state](const Batch& batch) {
    const Tensor& x = detail::batch_input(batch, 0, "spectrum");
    detail::require_vector_input(x, state->cfg.bands[0], "spectrum");
    return state->encode(x);
  };
  graph.loss = [fwd = graph.forward](const Batch& batch) {
    Tensor recon = fwd(batch);
    return combine_losses({{"recon", 1.0, ae_mse(batch.inputs[0], recon)}});
  };
  graph.set_training = [](bool) {};
  detail::assert_param_count(graph);
  return graph;
}

// ---- bidirectional recurrent autoencoder ----------------------------------------

struct BiGruAeState {
  ArchitectureConfig cfg;
  std::shared_ptr<ParamRegistry> reg;
  GruCellParams f1, b1, f2, b2;  // two bidirectional layers
  DenseLayer enc_fc, dec_fc;
  GruCellParams g3, g4;  // unidirectional decoder layers

  Tensor encode(const Tensor& vec) {
    const int n = vec.shape()[0];
    Tensor seq = reshape(vec, {n, cfg.bands[0], 1});
    Tensor h1 = bigru_forward(f1, b1, seq);
    Tensor h2 = bigru_forward(f2, b2, h1);
    Tensor flat = reshape(h2, {n, cfg.bands[0] * 2 * cfg.width});
    return detail::run_dense(enc_fc, flat);
  }

  Tensor decode(const Tensor& code) {
    const int n = code.shape()[0];
    Tensor h = detail::run_dense(dec_fc, code);
    h = reshape(h, {n, cfg.bands[0], cfg.width});
    Tensor s3 = gru_forward(g3, h);
    Tensor s4 = gru_forward(g4, s3);
    return reshape(s4, {n, cfg.bands[0]});
  }
};

ModelGraph build_bigruae(const ArchitectureConfig& cfg) {
  auto state = std::make_shared<BiGruAeState>();
  state->cfg = cfg;
  state->reg = std::make_shared<ParamRegistry>();
  ParamRegistry& reg = *state->reg;
  const int bands = cfg.bands[0];
  const int w = cfg.width;

  std::mt19937_64 enc_rng(detail::component_seed(cfg.seed, "encoder"));
  state->f1 = make_gru_cell(reg, "enc.g1f", 1, w, enc_rng);
  state->b1 = make_gru_cell(reg, "enc.g1b", 1, w, enc_rng);
  state->f2 = make_gru_cell(reg, "enc.g2f", 2 * w, w, enc_rng);
  state->b2 = make_gru_cell(reg, "enc.g2b", 2 * w, w, enc_rng);
  state->enc_fc = detail::make_dense_layer(reg, "enc.fc", bands * 2 * w, cfg.code_dim, Act::relu,
                                           false, enc_rng);
  std::mt19937_64 dec_rng(detail::component_seed(cfg.seed, "decoder"));
  state->dec_fc = detail::make_dense_layer(reg, "dec.fc", cfg.code_dim, bands * w, Act::relu,
                                           false, dec_rng);
  state->g3 = make_gru_cell(reg, "dec.g3", w, w, dec_rng);
  state->g4 = make_gru_cell(reg, "dec.g4", w, 1, dec_rng);

  ModelGraph graph;
  graph.cfg = cfg;
  graph.reg = state->reg;
  graph.expected_param_count = 58;
  graph.forward = [state](const Batch& batch) {
    const Tensor& x = detail::batch_input(batch, 0, "spectrum");
    detail::require_vector_input(x, state->cfg.bands[0], "spectrum");
    return state->decode(state->encode(x));
  };
  graph.encode = [state](const Batch& batch) {
    const Tensor& x = detail::batch_input(batch, 0, "spectrum");
    detail::require_vector_input(x, state->cfg.bands[0], "spectrum");
    return state->encode(x);
  };
  graph.loss = [fwd = graph.forward](const Batch& batch) {
    Tensor recon = fwd(batch);
    return combine_losses({{"recon", 1.0, ae_mse(batch.inputs[0], recon)}});
  };
  graph.set_training = [](bool) {};
  detail::assert_param_count(graph);
  return graph;
}

// ---- feedback-block autoencoder -------------------------------------------------

struct FbAeState {
  ArchitectureConfig cfg;
  std::shared_ptr<ParamRegistry> reg;
  struct EncStage {
    ParamPtr entry_w, entry_b;
    std::shared_ptr<SelfLoopBlock> block;
  };
  struct DecStage {
    ConvLayer up;  // growing transposed conv
    std::shared_ptr<SelfLoopBlock> block;
  };
  std::vector<EncStage> enc_stages;
  DenseLayer enc_fc, dec_fc, out_fc;
  std::vector<DecStage> dec_stages;
  int bottleneck_len = 0;

  static Tensor upsample2x(const Tensor& x) {
    const Shape& s = x.shape();  // [N, L, C]
    Tensor col = reshape(x, {s[0], s[1], 1, s[2]});
    Tensor dup = concat(2, {col, col});
    return reshape(dup, {s[0], 2 * s[1], s[2]});
  }

  Tensor encode(const Tensor& vec) {
    const int n = vec.shape()[0];
    Tensor h = reshape(vec, {n, cfg.bands[0], 1});
    for (EncStage& st : enc_stages) {
      Tensor c0 = entry_projection(h, st.entry_w->tensor(), st.entry_b->tensor());
      Tensor refined = st.block->run_final(c0);
      h = max_pool(refined, {2}, {2});
    }
    Tensor flat = reshape(h, {n, bottleneck_len * cfg.width});
    return detail::run_dense(enc_fc, flat);
  }

  Tensor decode(const Tensor& code) {
    const int n = code.shape()[0];
    Tensor h = detail::run_dense(dec_fc, code);
    h = reshape(h, {n, bottleneck_len, cfg.width});
    for (DecStage& st : dec_stages) {
      Tensor grown = detail::run_layer(st.up, h);
      Tensor c = st.block->level1(grown, st.block->provider()).back();
      h = upsample2x(c);
    }
    const int len = h.shape()[1];
    Tensor flat = reshape(h, {n, len * cfg.width});
    return detail::run_dense(out_fc, flat);
  }
};

ModelGraph build_fbae(const ArchitectureConfig& cfg) {
  const int bands = cfg.bands[0];
  const int w = cfg.width;
  int len = bands;
  for (int i = 0; i < 3; ++i) {
    if (len < 2)
      throw ModelError("feedback autoencoder needs at least 8 bands, got " +
                       std::to_string(bands));
    len = (len - 2) / 2 + 1;
  }

  auto state = std::make_shared<FbAeState>();
  state->cfg = cfg;
  state->reg = std::make_shared<ParamRegistry>();
  state->bottleneck_len = len;
  ParamRegistry& reg = *state->reg;

  SelfLoopBlockConfig bcfg;
  bcfg.K = 3;
  bcfg.F = w;
  bcfg.kernel = 3;
  bcfg.dims = 1;
  bcfg.r = 1;
  bcfg.use_bn = false;

  std::mt19937_64 enc_rng(detail::component_seed(cfg.seed, "encoder"));
  int ch = 1;
  for (int i = 1; i <= 3; ++i) {
    FbAeState::EncStage st;
    const std::string prefix = "enc.s" + std::to_string(i);
    const Shape es{1, ch, w};
    st.entry_w = reg.create(prefix + ".entry.w", es, glorot_init(es, enc_rng));
    st.entry_b = reg.create(prefix + ".entry.b", {w}, zeros_init(w));
    st.block = std::make_shared<SelfLoopBlock>(reg, prefix + ".block", bcfg, enc_rng);
    state->enc_stages.push_back(std::move(st));
    ch = w;
  }
  state->enc_fc = detail::make_dense_layer(reg, "enc.fc", len * w, cfg.code_dim, Act::linear,
                                           false, enc_rng);
  std::mt19937_64 dec_rng(detail::component_seed(cfg.seed, "decoder"));
  state->dec_fc = detail::make_dense_layer(reg, "dec.fc", cfg.code_dim, len * w, Act::relu,
                                           false, dec_rng);
  int out_len = len;
  for (int i = 1; i <= 2; ++i) {
    FbAeState::DecStage st;
    const std::string prefix = "dec.s" + std::to_string(i);
    st.up = detail::make_deconv_layer(reg, prefix + ".up", 1, {3}, w, w, Act::relu, false,
                                      dec_rng);
    st.block = std::make_shared<SelfLoopBlock>(reg, prefix + ".block", bcfg, dec_rng);
    state->dec_stages.push_back(std::move(st));
    out_len = 2 * (out_len + 2);
  }
  state->out_fc = detail::make_dense_layer(reg, "dec.out", out_len * w, bands, Act::linear,
                                           false, dec_rng);

  ModelGraph graph;
  graph.cfg = cfg;
  graph.reg = state->reg;
  graph.expected_param_count = 46;
  graph.forward = [state](const Batch& batch) {
    const Tensor& x = detail::batch_input(batch, 0, "spectrum");
    detail::require_vector_input(x, state->cfg.bands[0], "spectrum");
    return state->decode(state->encode(x));
  };
  graph.encode = [state](const Batch& batch) {
    const Tensor& x = detail::batch_input(batch, 0, "spectrum");
    detail::require_vector_input(x, state->cfg.bands[0], "spectrum");
    return state->encode(x);
  };
  graph.loss = [fwd = graph.forward](const Batch& batch) {
    Tensor recon = fwd(batch);
    return combine_losses({{"recon", 1.0, ae_mse(batch.inputs[0], recon)}});
  };
  graph.set_training = [state](bool training) {
    for (auto& st : state->enc_stages) st.block->training = training;
    for (auto& st : state->dec_stages) st.block->training = training;
  };
  detail::assert_param_count(graph);
  return graph;
}

// ---- residual 3D patch autoencoder ----------------------------------------------

struct ResAe3dState {
  ArchitectureConfig cfg;
  std::shared_ptr<ParamRegistry> reg;
  ConvLayer e1, e2, e3, e4, e5, e6;
  ConvLayer d1, d2, d3, d4, d5;

  Tensor encode_cube(const Tensor& patches) {
    Tensor v0 = detail::append_unit_channel(patches);
    Tensor v1 = detail::run_layer(e1, v0);
    Tensor v2 = detail::run_layer(e2, v1);
    Tensor s1 = concat(4, {v1, v2});  // concatenation skip after layer 2
    Tensor v3 = detail::run_layer(e3, s1);
    Tensor v4 = detail::run_layer(e4, v3);
    Tensor s2 = concat(4, {v3, v4});  // concatenation skip after layer 4
    Tensor v5 = detail::run_layer(e5, s2);
    Tensor v6 = detail::run_layer(e6, v5);
    return reshape(v6, {patches.shape()[0], cfg.code_dim});
  }

  Tensor decode_cube(const Tensor& code) {
    const int n = code.shape()[0];
    Tensor h = reshape(code, {n, 1, 1, 1, cfg.code_dim});
    h = detail::run_layer(d1, h);
    h = detail::run_layer(d2, h);
    h = detail::run_layer(d3, h);
    h = detail::run_layer(d4, h);
    h = detail::run_layer(d5, h);
    return detail::drop_unit_channel(h);
  }
};

ModelGraph build_resae3d(const ArchitectureConfig& cfg) {
  const int bands = cfg.bands[0];
  const int p = cfg.patch;
  if (p < 7 || bands < 7)
    throw ModelError("residual 3D autoencoder needs patch and band extents of at least 7, got " +
                     std::to_string(p) + " and " + std::to_string(bands));
  const int w = cfg.width;
  const int ep = p - 6;  // spatial extent entering the bottleneck conv
  const int eb = bands - 6;

  auto state = std::make_shared<ResAe3dState>();
  state->cfg = cfg;
  state->reg = std::make_shared<ParamRegistry>();
  ParamRegistry& reg = *state->reg;

  std::mt19937_64 enc_rng(detail::component_seed(cfg.seed, "encoder"));
  state->e1 = detail::make_conv_layer(reg, "enc.c1", 3, {3, 3, 3}, 1, w, {1, 1, 1},
                                      Padding::none, Act::relu, true, enc_rng, true);
  state->e2 = detail::make_conv_layer(reg, "enc.c2", 3, {3, 3, 3}, w, w, {1, 1, 1},
                                      Padding::same, Act::relu, true, enc_rng, true);
  state->e3 = detail::make_conv_layer(reg, "enc.c3", 3, {3, 3, 3}, 2 * w, w, {1, 1, 1},
                                      Padding::none, Act::relu, true, enc_rng, true);
  state->e4 = detail::make_conv_layer(reg, "enc.c4", 3, {3, 3, 3}, w, w, {1, 1, 1},
                                      Padding::same, Act::relu, true, enc_rng, true);
  state->e5 = detail::make_conv_layer(reg, "enc.c5", 3, {3, 3, 3}, 2 * w, w, {1, 1, 1},
                                      Padding::none, Act::relu, true, enc_rng, true);
  state->e6 = detail::make_conv_layer(reg, "enc.c6", 3, {ep, ep, eb}, w, cfg.code_dim, {1, 1, 1},
                                      Padding::none, Act::relu, true, enc_rng, true);
  std::mt19937_64 dec_rng(detail::component_seed(cfg.seed, "decoder"));
  state->d1 = detail::make_deconv_layer(reg, "dec.d1", 3, {ep, ep, eb}, cfg.code_dim, w,
                                        Act::relu, true, dec_rng, true);
  state->d2 = detail::make_deconv_layer(reg, "dec.d2", 3, {3, 3, 3}, w, w, Act::relu, true,
                                        dec_rng, true);
  state->d3 = detail::make_deconv_layer(reg, "dec.d3", 3, {3, 3, 3}, w, w, Act::relu, true,
                                        dec_rng, true);
  state->d4 = detail::make_deconv_layer(reg, "dec.d4", 3, {3, 3, 3}, w, w, Act::relu, true,
                                        dec_rng, true);
  state->d5 = detail::make_deconv_layer(reg, "dec.d5", 3, {1, 1, 1}, w, 1, Act::linear, false,
                                        dec_rng);

  ModelGraph graph;
  graph.cfg = cfg;
  graph.reg = state->reg;
  graph.expected_param_count = 42;
  graph.forward = [state](const Batch& batch) {
    const Tensor& x = detail::batch_input(batch, 0, "patch");
    detail::require_patch_input(x, state->cfg.patch, state->cfg.bands[0], "patch");
    return state->decode_cube(state->encode_cube(x));
  };
  graph.encode = [state](const Batch& batch) {
    const Tensor& x = detail::batch_input(batch, 0, "patch");
    detail::require_patch_input(x, state->cfg.patch, state->cfg.bands[0], "patch");
    return state->encode_cube(x);
  };
  graph.loss = [fwd = graph.forward](const Batch& batch) {
    Tensor recon = fwd(batch);
    return combine_losses({{"recon", 1.0, ae_mse(batch.inputs[0], recon)}});
  };
  graph.set_training = [state](bool training) {
    for (ConvLayer* l : {&state->e1, &state->e2, &state->e3, &state->e4, &state->e5, &state->e6,
                         &state->d1, &state->d2, &state->d3, &state->d4})
      if (l->bn) l->bn->training = training;
  };
  detail::assert_param_count(graph);
  return graph;
}

}  // namespace

ModelGraph build_autoencoder(const ArchitectureConfig& cfg) {
  validate(cfg);
  switch (cfg.kind) {
    case ModelKind::attae:
      return build_attae(cfg);
    case ModelKind::bigruae:
      return build_bigruae(cfg);
    case ModelKind::fbae:
      return build_fbae(cfg);
    case ModelKind::resae3d:
      return build_resae3d(cfg);
    default:
      throw ModelError("build_autoencoder got kind " + model_kind_name(cfg.kind));
  }
}

}  // namespace hsc
