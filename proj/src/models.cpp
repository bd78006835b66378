#include "hsc/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <utility>

#include "model_parts.hpp"

namespace hsc {

namespace {

constexpr std::pair<ModelKind, const char*> kKindNames[] = {
    {ModelKind::hyperloopnet, "hyperloopnet"},
    {ModelKind::hybatnet, "hybatnet"},
    {ModelKind::fusatnet, "fusatnet"},
    {ModelKind::hyperfusenet, "hyperfusenet"},
    {ModelKind::attae, "attae"},
    {ModelKind::bigruae, "bigruae"},
    {ModelKind::fbae, "fbae"},
    {ModelKind::resae3d, "resae3d"},
    {ModelKind::da_net, "da_net"},
    {ModelKind::hallucinator, "hallucinator"},
    {ModelKind::paws, "paws"},
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

int parse_int(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  int parsed = 0;
  try {
    parsed = std::stoi(value, &used);
  } catch (const std::exception&) {
    throw ModelError("config field " + key + " is not an integer: '" + value + "'");
  }
  if (used != value.size())
    throw ModelError("config field " + key + " has trailing characters: '" + value + "'");
  return parsed;
}

double parse_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double parsed = 0.0;
  try {
    parsed = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ModelError("config field " + key + " is not a number: '" + value + "'");
  }
  if (used != value.size())
    throw ModelError("config field " + key + " has trailing characters: '" + value + "'");
  return parsed;
}

std::vector<int> parse_ints(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::string item;
  std::istringstream stream(value);
  while (std::getline(stream, item, ',')) out.push_back(parse_int(key, item));
  if (out.empty()) throw ModelError("config field " + key + " needs at least one value");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "0") return false;
  if (value == "1") return true;
  throw ModelError("config field " + key + " must be 0 or 1, got '" + value + "'");
}

void write_u32le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64le(std::ostream& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof(bits));
  write_u64le(out, bits);
}

std::uint32_t read_u32le(std::istream& in, const std::string& what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw ModelError("checkpoint truncated while reading " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t read_u64le(std::istream& in, const std::string& what) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw ModelError("checkpoint truncated while reading " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double read_f64le(std::istream& in, const std::string& what) {
  std::uint64_t bits = read_u64le(in, what);
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

constexpr char kCheckpointMagic[4] = {'H', 'S', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

ModelKind model_kind_from_string(const std::string& name) {
  for (const auto& [kind, text] : kKindNames)
    if (name == text) return kind;
  throw ModelError("unknown model kind '" + name + "'");
}

std::string model_kind_name(ModelKind kind) {
  for (const auto& [k, text] : kKindNames)
    if (k == kind) return text;
  throw ModelError("unnamed model kind");
}

void validate(const ArchitectureConfig& cfg) {
  if (cfg.bands.empty()) throw ModelError("config needs at least one modality band count");
  for (std::size_t m = 0; m < cfg.bands.size(); ++m)
    if (cfg.bands[m] < 1)
      throw ModelError("modality " + std::to_string(m) + " band count must be positive, got " +
                       std::to_string(cfg.bands[m]));
  if (cfg.classes < 2)
    throw ModelError("class count must be at least 2, got " + std::to_string(cfg.classes));
  if (cfg.patch < 1 || cfg.patch % 2 == 0)
    throw ModelError("patch size must be odd and positive, got " + std::to_string(cfg.patch));
  if (cfg.block_width < 1 || cfg.block_layers < 1 || cfg.block_rounds < 1)
    throw ModelError("block width, layers, and rounds must all be positive");
  if (cfg.width < 1) throw ModelError("width must be positive, got " + std::to_string(cfg.width));
  if (cfg.depth_filters < 1)
    throw ModelError("depth_filters must be positive, got " + std::to_string(cfg.depth_filters));
  if (cfg.code_dim < 1)
    throw ModelError("code dimension must be positive, got " + std::to_string(cfg.code_dim));
  if (!(cfg.tau > 0.0) || !(cfg.sharpen > 0.0) || !(cfg.kd_temperature > 0.0))
    throw ModelError("temperatures must be positive");
  if (cfg.scales.empty()) throw ModelError("invalid scales: none given");
  for (std::size_t i = 0; i < cfg.scales.size(); ++i) {
    if (cfg.scales[i] < 1 || cfg.scales[i] % 2 == 0)
      throw ModelError("invalid scales: kernel scale must be odd and positive, got " +
                       std::to_string(cfg.scales[i]));
    if (i > 0 && cfg.scales[i] <= cfg.scales[i - 1])
      throw ModelError("invalid scales: must be strictly increasing");
  }
  const bool two_modality = cfg.kind == ModelKind::fusatnet ||
                            cfg.kind == ModelKind::hyperfusenet ||
                            cfg.kind == ModelKind::hallucinator;
  if (two_modality && cfg.bands.size() < 2)
    throw ModelError(model_kind_name(cfg.kind) + " needs band counts for two modalities");
  const bool autoencoder = cfg.kind == ModelKind::attae || cfg.kind == ModelKind::bigruae ||
                           cfg.kind == ModelKind::fbae || cfg.kind == ModelKind::resae3d;
  if (autoencoder && cfg.code_dim >= cfg.bands[0])
    throw ModelError("code dimension " + std::to_string(cfg.code_dim) +
                     " must be smaller than the " + std::to_string(cfg.bands[0]) + " input bands");
}

std::string config_text(const ArchitectureConfig& cfg) {
  std::string out;
  out += "kind=" + model_kind_name(cfg.kind) + "\n";
  out += "bands=" + fmt_ints(cfg.bands) + "\n";
  out += "classes=" + std::to_string(cfg.classes) + "\n";
  out += "block_width=" + std::to_string(cfg.block_width) + "\n";
  out += "block_layers=" + std::to_string(cfg.block_layers) + "\n";
  out += "block_rounds=" + std::to_string(cfg.block_rounds) + "\n";
  out += "scales=" + fmt_ints(cfg.scales) + "\n";
  out += "patch=" + std::to_string(cfg.patch) + "\n";
  out += "width=" + std::to_string(cfg.width) + "\n";
  out += "depth_filters=" + std::to_string(cfg.depth_filters) + "\n";
  out += "code_dim=" + std::to_string(cfg.code_dim) + "\n";
  out += "tau=" + fmt_double(cfg.tau) + "\n";
  out += "sharpen=" + fmt_double(cfg.sharpen) + "\n";
  out += "kd_temperature=" + fmt_double(cfg.kd_temperature) + "\n";
  out += "lambda=" + fmt_double(cfg.lambda) + "\n";
  out += "lambda1=" + fmt_double(cfg.lambda1) + "\n";
  out += "lambda2=" + fmt_double(cfg.lambda2) + "\n";
  out += "wasserstein_weight=" + fmt_double(cfg.wasserstein_weight) + "\n";
  out += std::string("identity_combine=") + (cfg.identity_combine ? "1" : "0") + "\n";
  out += "seed=" + std::to_string(cfg.seed) + "\n";
  return out;
}

ArchitectureConfig config_from_text(const std::string& text) {
  ArchitectureConfig cfg;
  std::vector<std::string> seen;
  std::istringstream stream(text);
  std::string line;
  while (std::getline(stream, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ModelError("config line without '=': '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (std::find(seen.begin(), seen.end(), key) != seen.end())
      throw ModelError("config field " + key + " given twice");
    seen.push_back(key);
    if (key == "kind")
      cfg.kind = model_kind_from_string(value);
    else if (key == "bands")
      cfg.bands = parse_ints(key, value);
    else if (key == "classes")
      cfg.classes = parse_int(key, value);
    else if (key == "block_width")
      cfg.block_width = parse_int(key, value);
    else if (key == "block_layers")
      cfg.block_layers = parse_int(key, value);
    else if (key == "block_rounds")
      cfg.block_rounds = parse_int(key, value);
    else if (key == "scales")
      cfg.scales = parse_ints(key, value);
    else if (key == "patch")
      cfg.patch = parse_int(key, value);
    else if (key == "width")
      cfg.width = parse_int(key, value);
    else if (key == "depth_filters")
      cfg.depth_filters = parse_int(key, value);
    else if (key == "code_dim")
      cfg.code_dim = parse_int(key, value);
    else if (key == "tau")
      cfg.tau = parse_double(key, value);
    else if (key == "sharpen")
      cfg.sharpen = parse_double(key, value);
    else if (key == "kd_temperature")
      cfg.kd_temperature = parse_double(key, value);
    else if (key == "lambda")
      cfg.lambda = parse_double(key, value);
    else if (key == "lambda1")
      cfg.lambda1 = parse_double(key, value);
    else if (key == "lambda2")
      cfg.lambda2 = parse_double(key, value);
    else if (key == "wasserstein_weight")
      cfg.wasserstein_weight = parse_double(key, value);
    else if (key == "identity_combine")
      cfg.identity_combine = parse_bool(key, value);
    else if (key == "seed")
      cfg.seed = parse_int(key, value);
    else
      throw ModelError("unknown config field '" + key + "'");
  }
  if (seen.size() != 20)
    throw ModelError("config text has " + std::to_string(seen.size()) + " fields, expected 20");
  return cfg;
}

std::vector<int> batch_label_ids(const Tensor& one_hot) {
  if (!one_hot.defined() || one_hot.shape().size() != 2)
    throw ModelError("label ids need a defined [N, C] one-hot tensor");
  const int n = one_hot.shape()[0];
  const int c = one_hot.shape()[1];
  const std::vector<double>& v = one_hot.values();
  std::vector<int> ids(n, 0);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (v[i * c + j] > v[i * c + best]) best = j;
    ids[i] = best;
  }
  return ids;
}

namespace detail {

std::uint64_t component_seed(int seed, const std::string& tag) {
  std::uint64_t h = 1469598103934665603ull ^
                    (static_cast<std::uint64_t>(static_cast<std::int64_t>(seed)) *
                     0x9e3779b97f4a7c15ull);
  for (unsigned char ch : tag) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

ConvLayer make_conv_layer(ParamRegistry& reg, const std::string& name, int dims,
                          std::vector<int> kernel, int in_ch, int out_ch, std::vector<int> stride,
                          Padding pad, Act act, bool bn, std::mt19937_64& rng,
                          bool act_before_bn) {
  ConvLayer layer;
  layer.spec = make_conv_spec(dims, kernel, in_ch, out_ch, std::move(stride), pad);
  Shape wshape(kernel.begin(), kernel.end());
  wshape.push_back(in_ch);
  wshape.push_back(out_ch);
  layer.w = reg.create(name + ".w", wshape, glorot_init(wshape, rng));
  layer.b = reg.create(name + ".b", {out_ch}, zeros_init(out_ch));
  if (bn) layer.bn = std::make_shared<BatchNormState>(make_batch_norm(reg, name, out_ch));
  layer.act = act;
  layer.act_before_bn = act_before_bn;
  return layer;
}

ConvLayer make_deconv_layer(ParamRegistry& reg, const std::string& name, int dims,
                            std::vector<int> kernel, int from_ch, int to_ch, Act act, bool bn,
                            std::mt19937_64& rng, bool act_before_bn) {
  ConvLayer layer;
  layer.spec = make_conv_spec(dims, kernel, to_ch, from_ch, std::vector<int>(dims, 1),
                              Padding::none);
  Shape wshape(kernel.begin(), kernel.end());
  wshape.push_back(to_ch);
  wshape.push_back(from_ch);
  layer.w = reg.create(name + ".w", wshape, glorot_init(wshape, rng));
  layer.b = reg.create(name + ".b", {to_ch}, zeros_init(to_ch));
  if (bn) layer.bn = std::make_shared<BatchNormState>(make_batch_norm(reg, name, to_ch));
  layer.act = act;
  layer.act_before_bn = act_before_bn;
  layer.transposed = true;
  return layer;
}

Tensor run_layer(ConvLayer& layer, const Tensor& x) {
  Tensor z = layer.transposed
                 ? transposed_conv_nd(layer.spec, layer.w->tensor(), layer.b->tensor(), x)
                 : conv_nd(layer.spec, layer.w->tensor(), layer.b->tensor(), x);
  if (layer.act_before_bn) {
    z = activation(layer.act, z);
    if (layer.bn) z = batch_norm(*layer.bn, z);
    return z;
  }
  if (layer.bn) z = batch_norm(*layer.bn, z);
  return activation(layer.act, z);
}

DenseLayer make_dense_layer(ParamRegistry& reg, const std::string& name, int in, int out, Act act,
                            bool bn, std::mt19937_64& rng) {
  DenseLayer layer;
  const Shape wshape{in, out};
  layer.w = reg.create(name + ".w", wshape, glorot_init(wshape, rng));
  layer.b = reg.create(name + ".b", {out}, zeros_init(out));
  if (bn) layer.bn = std::make_shared<BatchNormState>(make_batch_norm(reg, name, out));
  layer.act = act;
  return layer;
}

Tensor run_dense(DenseLayer& layer, const Tensor& x) {
  Tensor z = dense(layer.w->tensor(), layer.b->tensor(), x);
  if (layer.bn) z = batch_norm(*layer.bn, z);
  return activation(layer.act, z);
}

void set_training(std::vector<ConvLayer>& layers, bool training) {
  for (ConvLayer& l : layers)
    if (l.bn) l.bn->training = training;
}

void set_training(std::vector<DenseLayer>& layers, bool training) {
  for (DenseLayer& l : layers)
    if (l.bn) l.bn->training = training;
}

const Tensor& batch_input(const Batch& batch, std::size_t index, const std::string& what) {
  if (index >= batch.inputs.size() || !batch.inputs[index].defined())
    throw ModelError("batch is missing the " + what + " input (slot " + std::to_string(index) +
                     ")");
  return batch.inputs[index];
}

void require_patch_input(const Tensor& x, int patch, int bands, const std::string& what) {
  const Shape& s = x.shape();
  if (s.size() != 4 || s[1] != patch || s[2] != patch || s[3] != bands)
    throw ModelError(what + " input must be [N, " + std::to_string(patch) + ", " +
                     std::to_string(patch) + ", " + std::to_string(bands) + "], got " +
                     shape_str(s));
}

void require_vector_input(const Tensor& x, int bands, const std::string& what) {
  const Shape& s = x.shape();
  if (s.size() != 2 || s[1] != bands)
    throw ModelError(what + " input must be [N, " + std::to_string(bands) + "], got " +
                     shape_str(s));
}

void require_labels(const Batch& batch, int classes) {
  if (!batch.labels.defined() || batch.labels.shape().size() != 2 ||
      batch.labels.shape()[1] != classes)
    throw ModelError("batch needs one-hot labels with " + std::to_string(classes) + " columns");
}

Tensor append_unit_channel(const Tensor& x) {
  Shape s = x.shape();
  s.push_back(1);
  return reshape(x, s);
}

Tensor drop_unit_channel(const Tensor& x) {
  Shape s = x.shape();
  if (s.empty() || s.back() != 1)
    throw ModelError("expected a trailing unit channel, got " + shape_str(s));
  s.pop_back();
  return reshape(x, s);
}

Tensor center_pixels(const Tensor& patches, int patch) {
  const Shape& s = patches.shape();
  const int mid = patch / 2;
  Tensor row = slice(patches, 1, mid, 1);
  Tensor cell = slice(row, 2, mid, 1);
  return reshape(cell, Shape{s[0], s[3]});
}

void assert_param_count(const ModelGraph& graph) {
  const auto names = static_cast<std::int64_t>(graph.reg->name_count());
  const auto buffers = static_cast<std::int64_t>(graph.reg->distinct_count());
  if (names != graph.expected_param_count || buffers != graph.expected_param_count)
    throw ModelError(model_kind_name(graph.cfg.kind) + " registered " + std::to_string(names) +
                     " names over " + std::to_string(buffers) + " buffers, expected " +
                     std::to_string(graph.expected_param_count));
}

std::vector<ParamPtr> collect_params(const std::vector<ConvLayer>& layers) {
  std::vector<ParamPtr> out;
  for (const ConvLayer& l : layers) {
    out.push_back(l.w);
    out.push_back(l.b);
    if (l.bn) {
      out.push_back(l.bn->gamma);
      out.push_back(l.bn->beta);
    }
  }
  return out;
}

std::vector<ParamPtr> collect_params(const std::vector<DenseLayer>& layers) {
  std::vector<ParamPtr> out;
  for (const DenseLayer& l : layers) {
    out.push_back(l.w);
    out.push_back(l.b);
    if (l.bn) {
      out.push_back(l.bn->gamma);
      out.push_back(l.bn->beta);
    }
  }
  return out;
}

}  // namespace detail

// ---- checkpoints ------------------------------------------------------------

void save_checkpoint(const std::string& path, const ModelGraph& graph) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelError("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, 4);
  write_u32le(out, kCheckpointVersion);
  const std::string cfg = config_text(graph.cfg);
  write_u64le(out, cfg.size());
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const auto& params = graph.reg->all();
  write_u64le(out, params.size());
  for (const ParamPtr& p : params) {
    write_u32le(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    const Shape& shape = p->shape();
    write_u32le(out, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) write_u32le(out, static_cast<std::uint32_t>(d));
    const std::vector<double>& data = p->data();
    write_u64le(out, data.size());
    for (double v : data) write_f64le(out, v);
  }
  if (!out) throw ModelError("failed while writing checkpoint: " + path);
}

namespace {

std::string read_checkpoint_header(std::istream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw ModelError("not a checkpoint file: " + path);
  const std::uint32_t version = read_u32le(in, "version");
  if (version != kCheckpointVersion)
    throw ModelError("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t len = read_u64le(in, "config length");
  std::string cfg(len, '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(len));
  if (!in) throw ModelError("checkpoint truncated while reading config echo");
  return cfg;
}

}  // namespace

ArchitectureConfig checkpoint_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint: " + path);
  return config_from_text(read_checkpoint_header(in, path));
}

void load_checkpoint(const std::string& path, ModelGraph& graph) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open checkpoint: " + path);
  const std::string cfg = read_checkpoint_header(in, path);
  if (cfg != config_text(graph.cfg))
    throw ModelError("checkpoint config does not match the model it is loaded into");
  const std::uint64_t count = read_u64le(in, "record count");
  if (count != graph.reg->name_count())
    throw ModelError("checkpoint holds " + std::to_string(count) + " records, model has " +
                     std::to_string(graph.reg->name_count()));
  for (std::uint64_t r = 0; r < count; ++r) {
    const std::uint32_t name_len = read_u32le(in, "record name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw ModelError("checkpoint truncated while reading a record name");
    ParamPtr p = graph.reg->find(name);
    if (!p) throw ModelError("checkpoint record '" + name + "' has no matching parameter");
    const std::uint32_t rank = read_u32le(in, name + " rank");
    Shape shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d)
      shape[d] = static_cast<int>(read_u32le(in, name + " extent"));
    if (shape != p->shape())
      throw ModelError("checkpoint record '" + name + "' has shape " + shape_str(shape) +
                       ", parameter expects " + shape_str(p->shape()));
    const std::uint64_t n = read_u64le(in, name + " value count");
    if (n != p->data().size())
      throw ModelError("checkpoint record '" + name + "' holds " + std::to_string(n) + " values");
    for (std::uint64_t i = 0; i < n; ++i) p->data()[i] = read_f64le(in, name + " values");
  }
}

// ---- multiscale self-looping classifier --------------------------------------

namespace {

struct HyperLoopState {
  ArchitectureConfig cfg;
  std::shared_ptr<ParamRegistry> reg;
  struct ScalePath {
    ParamPtr entry_w, entry_b;
    std::shared_ptr<SelfLoopBlock> block;
  };
  std::vector<ScalePath> paths;
  detail::DenseLayer head;

  Tensor forward(const Batch& batch) {
    const Tensor& x = detail::batch_input(batch, 0, "patch");
    detail::require_patch_input(x, cfg.patch, cfg.bands[0], "patch");
    std::vector<Tensor> gaps;
    for (ScalePath& path : paths) {
      Tensor c0 = entry_projection(x, path.entry_w->tensor(), path.entry_b->tensor());
      Tensor gap = path.block->run(c0);
      gaps.push_back(gap);
    }
    Tensor fused = multiscale_concat(gaps);
    return detail::run_dense(head, fused);
  }
};

}  // namespace

ModelGraph build_hyperloopnet(const ArchitectureConfig& cfg) {
  if (cfg.kind != ModelKind::hyperloopnet)
    throw ModelError("build_hyperloopnet got kind " + model_kind_name(cfg.kind));
  validate(cfg);
  auto state = std::make_shared<HyperLoopState>();
  state->cfg = cfg;
  state->reg = std::make_shared<ParamRegistry>();
  ParamRegistry& reg = *state->reg;
  const int bands = cfg.bands[0];
  const int fused_len = static_cast<int>(cfg.scales.size()) * cfg.block_layers * cfg.block_width;

  for (int scale : cfg.scales) {
    std::mt19937_64 rng(detail::component_seed(cfg.seed, "scale" + std::to_string(scale)));
    HyperLoopState::ScalePath path;
    const Shape wshape{1, 1, bands, cfg.block_width};
    const std::string prefix = "s" + std::to_string(scale);
    path.entry_w = reg.create(prefix + ".entry.w", wshape, glorot_init(wshape, rng));
    path.entry_b = reg.create(prefix + ".entry.b", {cfg.block_width},
                              zeros_init(cfg.block_width));
    SelfLoopBlockConfig bcfg;
    bcfg.K = cfg.block_layers;
    bcfg.F = cfg.block_width;
    bcfg.kernel = scale;
    bcfg.dims = 2;
    bcfg.r = cfg.block_rounds;
    path.block = std::make_shared<SelfLoopBlock>(reg, prefix + ".block", bcfg, rng);
    state->paths.push_back(std::move(path));
  }
  std::mt19937_64 head_rng(detail::component_seed(cfg.seed, "head"));
  state->head = detail::make_dense_layer(reg, "head", fused_len, cfg.classes, Act::softmax,
                                         false, head_rng);

  ModelGraph graph;
  graph.cfg = cfg;
  graph.reg = state->reg;
  graph.expected_param_count =
      static_cast<std::int64_t>(cfg.scales.size()) * (2 + 4 * cfg.block_layers) + 2;
  graph.forward = [state](const Batch& batch) { return state->forward(batch); };
  graph.loss = [state](const Batch& batch) {
    detail::require_labels(batch, state->cfg.classes);
    Tensor probs = state->forward(batch);
    Tensor ce = cross_entropy(batch.labels, probs);
    return combine_losses({{"ce", 1.0, ce}});
  };
  graph.set_training = [state](bool training) {
    for (auto& path : state->paths) path.block->training = training;
  };
  detail::assert_param_count(graph);
  return graph;
}

// ---- adversarial adaptation network -------------------------------------------

namespace {

struct DaState {
  ArchitectureConfig cfg;
  std::shared_ptr<ParamRegistry> reg;
  detail::DenseLayer enc1, enc2;
  detail::DenseLayer cls;
  detail::DenseLayer dom1, dom2;
  detail::DenseLayer dec1, dec2;

  Tensor encode(const Tensor& x) { return detail::run_dense(enc2, detail::run_dense(enc1, x)); }
  Tensor classify(const Tensor& z) { return detail::run_dense(cls, z); }
  Tensor discriminate(const Tensor& z) {
    return detail::run_dense(dom2, detail::run_dense(dom1, z));
  }
  Tensor decode(const Tensor& z) { return detail::run_dense(dec2, detail::run_dense(dec1, z)); }
};

}  // namespace

ModelGraph da_model(const ArchitectureConfig& cfg) {
  if (cfg.kind != ModelKind::da_net)
    throw ModelError("da_model got kind " + model_kind_name(cfg.kind));
  validate(cfg);
  auto state = std::make_shared<DaState>();
  state->cfg = cfg;
  state->reg = std::make_shared<ParamRegistry>();
  ParamRegistry& reg = *state->reg;
  const int in_dim = cfg.bands[0];

  std::mt19937_64 enc_rng(detail::component_seed(cfg.seed, "encoder"));
  state->enc1 = detail::make_dense_layer(reg, "enc.l1", in_dim, cfg.width, Act::relu, false,
                                        enc_rng);
  state->enc2 = detail::make_dense_layer(reg, "enc.l2", cfg.width, cfg.code_dim, Act::relu, false,
                                        enc_rng);
  std::mt19937_64 cls_rng(detail::component_seed(cfg.seed, "classifier"));
  state->cls = detail::make_dense_layer(reg, "cls", cfg.code_dim, cfg.classes, Act::softmax,
                                        false, cls_rng);
  std::mt19937_64 dom_rng(detail::component_seed(cfg.seed, "domain"));
  state->dom1 = detail::make_dense_layer(reg, "dom.l1", cfg.code_dim, cfg.width, Act::relu, false,
                                        dom_rng);
  state->dom2 = detail::make_dense_layer(reg, "dom.l2", cfg.width, 2, Act::softmax, false,
                                        dom_rng);
  std::mt19937_64 dec_rng(detail::component_seed(cfg.seed, "decoder"));
  state->dec1 = detail::make_dense_layer(reg, "dec.l1", cfg.code_dim, cfg.width, Act::relu, false,
                                        dec_rng);
  state->dec2 = detail::make_dense_layer(reg, "dec.l2", cfg.width, in_dim, Act::linear, false,
                                        dec_rng);

  auto parts = std::make_shared<DaParts>();
  parts->encode = [state](const Tensor& x) {
    detail::require_vector_input(x, state->cfg.bands[0], "feature");
    return state->encode(x);
  };
  parts->classify = [state](const Tensor& z) { return state->classify(z); };
  parts->decode = [state](const Tensor& z) { return state->decode(z); };
  parts->discriminate = [state](const Tensor& z) { return state->discriminate(z); };
  parts->encoder_params = {state->enc1.w, state->enc1.b, state->enc2.w, state->enc2.b};
  parts->classifier_params = {state->cls.w, state->cls.b};
  parts->decoder_params = {state->dec1.w, state->dec1.b, state->dec2.w, state->dec2.b};
  parts->domain_params = {state->dom1.w, state->dom1.b, state->dom2.w, state->dom2.b};

  ModelGraph graph;
  graph.cfg = cfg;
  graph.reg = state->reg;
  graph.da = parts;
  graph.expected_param_count = 14;
  graph.forward = [state, parts](const Batch& batch) {
    const Tensor& x = detail::batch_input(batch, 0, "feature");
    return state->classify(parts->encode(x));
  };
  graph.encode = [parts](const Batch& batch) {
    const Tensor& x = detail::batch_input(batch, 0, "feature");
    return parts->encode(x);
  };
  graph.loss = [state, parts](const Batch& batch) {
    detail::require_labels(batch, state->cfg.classes);
    const Tensor& x = detail::batch_input(batch, 0, "feature");
    Tensor probs = state->classify(parts->encode(x));
    Tensor ce = cross_entropy(batch.labels, probs);
    return combine_losses({{"ce", 1.0, ce}});
  };
  graph.set_training = [](bool) {};
  detail::assert_param_count(graph);
  return graph;
}

ModelGraph build_model(const ArchitectureConfig& cfg) {
  switch (cfg.kind) {
    case ModelKind::hyperloopnet:
      return build_hyperloopnet(cfg);
    case ModelKind::hybatnet:
      return build_hybatnet(cfg);
    case ModelKind::fusatnet:
      return build_fusatnet(cfg);
    case ModelKind::hyperfusenet:
      return build_hyperfusenet(cfg);
    case ModelKind::attae:
    case ModelKind::bigruae:
    case ModelKind::fbae:
    case ModelKind::resae3d:
      return build_autoencoder(cfg);
    case ModelKind::da_net:
      return da_model(cfg);
    case ModelKind::paws:
      return build_paws_encoder(cfg);
    case ModelKind::hallucinator:
      throw ModelError(
          "hallucinator training spans teacher, generator, discriminator, and student nets; "
          "use their dedicated builders");
  }
  throw ModelError("unhandled model kind");
}

}  // namespace hsc
