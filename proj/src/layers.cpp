#include <algorithm>
#include <cmath>

#include "hsc/layers.hpp"

namespace hsc {

Act act_from_string(const std::string& name) {
  if (name == "linear") return Act::linear;
  if (name == "relu") return Act::relu;
  if (name == "sigmoid") return Act::sigmoid;
  if (name == "tanh") return Act::tanh;
  if (name == "softmax") return Act::softmax;
  throw TensorError("unknown activation kind: " + name);
}

std::string act_name(Act a) {
  switch (a) {
    case Act::linear: return "linear";
    case Act::relu: return "relu";
    case Act::sigmoid: return "sigmoid";
    case Act::tanh: return "tanh";
    case Act::softmax: return "softmax";
  }
  return "?";
}

Tensor activation(Act kind, const Tensor& input, int axis) {
  switch (kind) {
    case Act::linear: return input;
    case Act::relu: return relu(input);
    case Act::sigmoid: return sigmoid(input);
    case Act::tanh: return tanh_op(input);
    case Act::softmax: {
      const int rank = static_cast<int>(input.shape().size());
      const int resolved = axis < 0 ? rank + axis : axis;
      if (resolved != rank - 1)
        throw TensorError("softmax: only the trailing axis is supported, got axis " +
                          std::to_string(axis) + " for rank " + std::to_string(rank));
      return softmax_lastdim(input);
    }
  }
  throw TensorError("unknown activation kind");
}

Tensor dense(const Tensor& weights, const Tensor& bias, const Tensor& input, Act act) {
  if (input.shape().size() != 2 || weights.shape().size() != 2 ||
      input.shape()[1] != weights.shape()[0])
    throw TensorError("dense: input " + shape_str(input.shape()) + " incompatible with weights " +
                      shape_str(weights.shape()));
  if (bias.shape() != Shape{weights.shape()[1]})
    throw TensorError("dense: bias shape " + shape_str(bias.shape()) + " must be [" +
                      std::to_string(weights.shape()[1]) + "]");
  return activation(act, add(matmul(input, weights), bias));
}

Tensor batch_norm_affine(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                         BatchNormRunning& running, bool training) {
  const int c = input.shape().back();
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    throw TensorError("batch_norm: scale/shift shape must be [" + std::to_string(c) + "]");
  if (static_cast<int>(running.mean.size()) != c) {
    running.mean.assign(c, 0.0);
    running.var.assign(c, 1.0);
  }
  if (training) {
    if (input.shape()[0] < 2)
      throw TensorError("batch_norm: train mode requires batch size >= 2, got " +
                        std::to_string(input.shape()[0]));
    Tensor mu = mean_channelwise(input);
    Tensor centered = sub(input, mu);
    Tensor var = mean_channelwise(mul(centered, centered));
    Tensor inv_std = pow_scalar(add_scalar(var, running.eps), -0.5);
    Tensor norm = mul(centered, inv_std);
    const auto& m = mu.values();
    const auto& v = var.values();
    for (int i = 0; i < c; ++i) {
      running.mean[i] = running.momentum * running.mean[i] + (1.0 - running.momentum) * m[i];
      running.var[i] = running.momentum * running.var[i] + (1.0 - running.momentum) * v[i];
    }
    return add(mul(norm, gamma), beta);
  }
  std::vector<double> inv(c);
  for (int i = 0; i < c; ++i) inv[i] = 1.0 / std::sqrt(running.var[i] + running.eps);
  Tensor mu = Tensor::constant({c}, running.mean);
  Tensor scale = Tensor::constant({c}, std::move(inv));
  return add(mul(mul(sub(input, mu), scale), gamma), beta);
}

BatchNormState make_batch_norm(ParamRegistry& reg, const std::string& name, int channels) {
  BatchNormState st;
  st.gamma = reg.create(name + ".gamma", {channels}, ones_init(channels));
  st.beta = reg.create(name + ".beta", {channels}, zeros_init(channels));
  return st;
}

Tensor batch_norm(BatchNormState& state, const Tensor& input) {
  return batch_norm_affine(input, state.gamma->tensor(), state.beta->tensor(), state.running,
                           state.training);
}

GruCellParams make_gru_cell(ParamRegistry& reg, const std::string& name, int input_size,
                            int hidden, std::mt19937_64& rng) {
  GruCellParams p;
  p.input_size = input_size;
  p.hidden = hidden;
  auto w = [&](const char* gate) {
    return reg.create(name + ".W_" + gate, {input_size, hidden}, glorot_init({input_size, hidden}, rng));
  };
  auto u = [&](const char* gate) {
    return reg.create(name + ".U_" + gate, {hidden, hidden}, glorot_init({hidden, hidden}, rng));
  };
  auto v = [&](const char* gate) {
    return reg.create(name + ".v_" + gate, {hidden}, zeros_init(hidden));
  };
  p.W_r = w("r"); p.W_u = w("u"); p.W_c = w("c");
  p.U_r = u("r"); p.U_u = u("u"); p.U_c = u("c");
  p.v_r = v("r"); p.v_u = v("u"); p.v_c = v("c");
  return p;
}

Tensor gru_step(const GruCellParams& p, const Tensor& x, const Tensor& h_prev) {
  if (x.shape().size() != 2 || x.shape()[1] != p.input_size)
    throw TensorError("gru_step: input " + shape_str(x.shape()) + " must be [N," +
                      std::to_string(p.input_size) + "]");
  if (h_prev.shape() != Shape{x.shape()[0], p.hidden})
    throw TensorError("gru_step: state " + shape_str(h_prev.shape()) + " must be [N," +
                      std::to_string(p.hidden) + "]");
  Tensor r = sigmoid(add(add(matmul(x, p.W_r->tensor()), matmul(h_prev, p.U_r->tensor())),
                         p.v_r->tensor()));
  Tensor u = sigmoid(add(add(matmul(x, p.W_u->tensor()), matmul(h_prev, p.U_u->tensor())),
                         p.v_u->tensor()));
  Tensor c = tanh_op(add(add(matmul(x, p.W_c->tensor()), matmul(mul(r, h_prev), p.U_c->tensor())),
                         p.v_c->tensor()));
  return add(mul(u, h_prev), mul(add_scalar(neg(u), 1.0), c));
}

namespace {

Tensor step_of(const Tensor& seq, int b) {
  const int n = seq.shape()[0];
  const int f = seq.shape()[2];
  return reshape(slice(seq, 1, b, 1), {n, f});
}

Tensor stack_steps(const std::vector<Tensor>& states) {
  std::vector<Tensor> rows;
  rows.reserve(states.size());
  for (const auto& h : states)
    rows.push_back(reshape(h, {h.shape()[0], 1, h.shape()[1]}));
  return concat(1, rows);
}

}  // namespace

Tensor gru_forward(const GruCellParams& p, const Tensor& sequence) {
  if (sequence.shape().size() != 3)
    throw TensorError("gru_forward: sequence must be [N,B,features], got " +
                      shape_str(sequence.shape()));
  const int n = sequence.shape()[0];
  const int len = sequence.shape()[1];
  if (len < 1) throw TensorError("gru_forward: empty sequence");
  Tensor h = Tensor::fill({n, p.hidden}, 0.0);
  std::vector<Tensor> states;
  states.reserve(len);
  for (int b = 0; b < len; ++b) {
    h = gru_step(p, step_of(sequence, b), h);
    states.push_back(h);
  }
  return stack_steps(states);
}

Tensor bigru_forward(const GruCellParams& fwd, const GruCellParams& bwd, const Tensor& sequence) {
  if (sequence.shape().size() != 3)
    throw TensorError("bigru_forward: sequence must be [N,B,features], got " +
                      shape_str(sequence.shape()));
  const int n = sequence.shape()[0];
  const int len = sequence.shape()[1];
  if (len < 1) throw TensorError("bigru_forward: empty sequence");

  Tensor h = Tensor::fill({n, fwd.hidden}, 0.0);
  std::vector<Tensor> forward(len, h), backward(len, h);
  for (int b = 0; b < len; ++b) {
    h = gru_step(fwd, step_of(sequence, b), h);
    forward[b] = h;
  }
  h = Tensor::fill({n, bwd.hidden}, 0.0);
  for (int b = len - 1; b >= 0; --b) {
    h = gru_step(bwd, step_of(sequence, b), h);
    backward[b] = h;
  }
  std::vector<Tensor> joined(len, h);
  for (int b = 0; b < len; ++b) joined[b] = concat(1, {forward[b], backward[b]});
  return stack_steps(joined);
}

Tensor dropout(const Tensor& input, double rate, std::mt19937_64& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0)
    throw TensorError("dropout: rate must lie in [0,1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return input;
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(input.size());
  const double inv = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = keep(rng) ? inv : 0.0;
  return mul(input, Tensor::constant(input.shape(), std::move(mask)));
}

}  // namespace hsc
