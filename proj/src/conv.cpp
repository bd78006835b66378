#include <algorithm>
#include <array>
#include <cmath>
#include <memory>

#include "hsc/kernels.hpp"
#include "hsc/layers.hpp"

namespace hsc {

ConvSpec make_conv_spec(int dims, std::vector<int> kernel, int in_ch, int out_ch,
                        std::vector<int> stride, Padding pad) {
  ConvSpec s;
  s.dims = dims;
  s.kernel = std::move(kernel);
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.stride = std::move(stride);
  s.padding = pad;
  if (dims < 1 || dims > 3) throw TensorError("conv spec: dims must be 1, 2 or 3");
  if (static_cast<int>(s.kernel.size()) != dims || static_cast<int>(s.stride.size()) != dims)
    throw TensorError("conv spec: kernel/stride arity must equal dims");
  for (int k : s.kernel)
    if (k <= 0) throw TensorError("conv spec: kernel extents must be positive");
  for (int st : s.stride)
    if (st <= 0) throw TensorError("conv spec: strides must be positive");
  if (in_ch <= 0 || out_ch <= 0) throw TensorError("conv spec: channel counts must be positive");
  return s;
}

namespace {

// Geometry of one convolution: every (output position, input position,
// kernel position) triple with the input position inside bounds. Spatial
// only — channels are handled by the inner axpy/dot loops.
struct ConvPlan {
  std::vector<int> in_extent, out_extent;
  std::int64_t in_size = 1, out_size = 1, kernel_size = 1;
  // flat triples: out spatial index, in spatial index, kernel spatial index
  std::vector<std::array<std::int64_t, 3>> links;
};

std::vector<int> conv_out_extents(const std::vector<int>& in, const ConvSpec& spec,
                                  std::vector<int>& pad_lo) {
  const int d = spec.dims;
  std::vector<int> out(d);
  pad_lo.assign(d, 0);
  for (int i = 0; i < d; ++i) {
    if (spec.padding == Padding::same) {
      out[i] = (in[i] + spec.stride[i] - 1) / spec.stride[i];
      const int total = std::max(0, (out[i] - 1) * spec.stride[i] + spec.kernel[i] - in[i]);
      pad_lo[i] = total / 2;
    } else {
      if (in[i] < spec.kernel[i])
        throw TensorError("conv: spatial extent " + std::to_string(in[i]) +
                          " smaller than kernel " + std::to_string(spec.kernel[i]) +
                          " with padding=none");
      out[i] = (in[i] - spec.kernel[i]) / spec.stride[i] + 1;
    }
  }
  return out;
}

std::shared_ptr<ConvPlan> make_conv_plan(const std::vector<int>& in_extent, const ConvSpec& spec) {
  auto plan = std::make_shared<ConvPlan>();
  std::vector<int> pad_lo;
  plan->in_extent = in_extent;
  plan->out_extent = conv_out_extents(in_extent, spec, pad_lo);
  const int d = spec.dims;
  for (int i = 0; i < d; ++i) {
    plan->in_size *= in_extent[i];
    plan->out_size *= plan->out_extent[i];
    plan->kernel_size *= spec.kernel[i];
  }
  std::vector<int> oc(d, 0), kc(d, 0);
  std::vector<std::int64_t> in_stride(d, 1), k_stride(d, 1);
  for (int i = d - 2; i >= 0; --i) {
    in_stride[i] = in_stride[i + 1] * in_extent[i + 1];
    k_stride[i] = k_stride[i + 1] * spec.kernel[i + 1];
  }
  for (std::int64_t o = 0; o < plan->out_size; ++o) {
    for (std::int64_t t = 0; t < plan->kernel_size; ++t) {
      std::int64_t in_flat = 0;
      bool ok = true;
      for (int i = 0; i < d; ++i) {
        const int pos = oc[i] * spec.stride[i] - pad_lo[i] + kc[i];
        if (pos < 0 || pos >= in_extent[i]) {
          ok = false;
          break;
        }
        in_flat += pos * in_stride[i];
      }
      if (ok) plan->links.push_back({o, in_flat, t});
      for (int i = d - 1; i >= 0; --i) {
        if (++kc[i] < spec.kernel[i]) break;
        kc[i] = 0;
      }
    }
    for (int i = d - 1; i >= 0; --i) {
      if (++oc[i] < plan->out_extent[i]) break;
      oc[i] = 0;
    }
  }
  return plan;
}

std::vector<int> spatial_of(const Tensor& input, int dims, const char* opname) {
  const Shape& s = input.shape();
  if (static_cast<int>(s.size()) != dims + 2)
    throw TensorError(std::string(opname) + ": input rank " + std::to_string(s.size()) +
                      " does not match " + std::to_string(dims) + " spatial dims (+batch/channels)");
  return std::vector<int>(s.begin() + 1, s.end() - 1);
}

void check_weights(const ConvSpec& spec, const Tensor& w, const Tensor& b, int bias_channels,
                   const char* opname) {
  Shape expect(spec.kernel.begin(), spec.kernel.end());
  expect.push_back(spec.in_channels);
  expect.push_back(spec.out_channels);
  if (w.shape() != expect)
    throw TensorError(std::string(opname) + ": weight shape " + shape_str(w.shape()) +
                      " does not match spec " + shape_str(expect));
  if (b.shape() != Shape{bias_channels})
    throw TensorError(std::string(opname) + ": bias shape " + shape_str(b.shape()) +
                      " must be [" + std::to_string(bias_channels) + "]");
}

}  // namespace

Tensor conv_nd(const ConvSpec& spec, const Tensor& weights, const Tensor& bias,
               const Tensor& input) {
  const auto in_sp = spatial_of(input, spec.dims, "conv_nd");
  if (input.shape().back() != spec.in_channels)
    throw TensorError("conv_nd: input channels " + std::to_string(input.shape().back()) +
                      " != spec in-channels " + std::to_string(spec.in_channels));
  check_weights(spec, weights, bias, spec.out_channels, "conv_nd");

  auto plan = make_conv_plan(in_sp, spec);
  const int n = input.shape()[0];
  const int ci = spec.in_channels, co = spec.out_channels;

  Shape os{n};
  os.insert(os.end(), plan->out_extent.begin(), plan->out_extent.end());
  os.push_back(co);

  const bool grad = input.needs_grad() || weights.needs_grad() || bias.needs_grad();
  Tensor out = grad ? Tensor::leaf(os, std::vector<double>(numel(os), 0.0))
                    : Tensor::fill(os, 0.0);
  auto node = out.node();
  const double* xv = input.values().data();
  const double* wv = weights.values().data();
  const double* bv = bias.values().data();
  double* yv = node->value->data();

  for (int s = 0; s < n; ++s) {
    double* ybase = yv + s * plan->out_size * co;
    const double* xbase = xv + s * plan->in_size * ci;
    for (std::int64_t o = 0; o < plan->out_size; ++o)
      kernels::axpy(1.0, bv, ybase + o * co, co);
    for (const auto& l : plan->links) {
      double* yrow = ybase + l[0] * co;
      const double* xrow = xbase + l[1] * ci;
      const double* wrow = wv + l[2] * ci * co;
      for (int c = 0; c < ci; ++c) kernels::axpy(xrow[c], wrow + c * co, yrow, co);
    }
  }

  node->parents = {input.node(), weights.node(), bias.node()};
  if (grad) {
    node->backprop = [plan, n, ci, co](Node& self) {
      const auto& px = self.parents[0];
      const auto& pw = self.parents[1];
      const auto& pb = self.parents[2];
      const double* g = self.grad->data();
      const double* xv2 = px->value->data();
      const double* wv2 = pw->value->data();
      double* dx = px->needs_grad ? px->grad->data() : nullptr;
      double* dw = pw->needs_grad ? pw->grad->data() : nullptr;
      double* db = pb->needs_grad ? pb->grad->data() : nullptr;
      for (int s = 0; s < n; ++s) {
        const double* gbase = g + s * plan->out_size * co;
        const double* xbase = xv2 + s * plan->in_size * ci;
        double* dxbase = dx ? dx + s * plan->in_size * ci : nullptr;
        if (db)
          for (std::int64_t o = 0; o < plan->out_size; ++o)
            kernels::axpy(1.0, gbase + o * co, db, co);
        for (const auto& l : plan->links) {
          const double* grow = gbase + l[0] * co;
          const double* xrow = xbase + l[1] * ci;
          const double* wrow = wv2 + l[2] * ci * co;
          if (dw) {
            double* dwrow = dw + l[2] * ci * co;
            for (int c = 0; c < ci; ++c) kernels::axpy(xrow[c], grow, dwrow + c * co, co);
          }
          if (dx) {
            double* dxrow = dxbase + l[1] * ci;
            for (int c = 0; c < ci; ++c) dxrow[c] += kernels::dot(wrow + c * co, grow, co);
          }
        }
      }
    };
  }
  return out;
}

Tensor transposed_conv_nd(const ConvSpec& spec, const Tensor& weights, const Tensor& bias,
                          const Tensor& input) {
  const auto in_sp = spatial_of(input, spec.dims, "transposed_conv_nd");
  if (input.shape().back() != spec.out_channels)
    throw TensorError("transposed_conv_nd: input channels " +
                      std::to_string(input.shape().back()) + " != spec out-channels " +
                      std::to_string(spec.out_channels));
  check_weights(spec, weights, bias, spec.in_channels, "transposed_conv_nd");

  // Output extents invert the conv size law; the plan is built over the
  // *output* as if it were a conv input, so the links read (tconv-out,
  // tconv-in, kernel) straight off the adjoint.
  std::vector<int> out_sp(spec.dims);
  for (int i = 0; i < spec.dims; ++i)
    out_sp[i] = spec.padding == Padding::same
                    ? in_sp[i] * spec.stride[i]
                    : (in_sp[i] - 1) * spec.stride[i] + spec.kernel[i];
  auto plan = make_conv_plan(out_sp, spec);
  for (int i = 0; i < spec.dims; ++i)
    if (plan->out_extent[i] != in_sp[i])
      throw TensorError("transposed_conv_nd: input spatial " + std::to_string(in_sp[i]) +
                        " inconsistent with stride/kernel at dim " + std::to_string(i));

  const int n = input.shape()[0];
  const int ci = spec.in_channels, co = spec.out_channels;
  Shape os{n};
  os.insert(os.end(), out_sp.begin(), out_sp.end());
  os.push_back(ci);

  const bool grad = input.needs_grad() || weights.needs_grad() || bias.needs_grad();
  Tensor out = grad ? Tensor::leaf(os, std::vector<double>(numel(os), 0.0))
                    : Tensor::fill(os, 0.0);
  auto node = out.node();
  const double* xv = input.values().data();
  const double* wv = weights.values().data();
  const double* bv = bias.values().data();
  double* yv = node->value->data();

  for (int s = 0; s < n; ++s) {
    double* ybase = yv + s * plan->in_size * ci;
    const double* xbase = xv + s * plan->out_size * co;
    for (std::int64_t i = 0; i < plan->in_size; ++i)
      kernels::axpy(1.0, bv, ybase + i * ci, ci);
    for (const auto& l : plan->links) {
      const double* xrow = xbase + l[0] * co;
      double* yrow = ybase + l[1] * ci;
      const double* wrow = wv + l[2] * ci * co;
      for (int c = 0; c < ci; ++c) yrow[c] += kernels::dot(wrow + c * co, xrow, co);
    }
  }

  node->parents = {input.node(), weights.node(), bias.node()};
  if (grad) {
    node->backprop = [plan, n, ci, co](Node& self) {
      const auto& px = self.parents[0];
      const auto& pw = self.parents[1];
      const auto& pb = self.parents[2];
      const double* g = self.grad->data();
      const double* xv2 = px->value->data();
      const double* wv2 = pw->value->data();
      double* dx = px->needs_grad ? px->grad->data() : nullptr;
      double* dw = pw->needs_grad ? pw->grad->data() : nullptr;
      double* db = pb->needs_grad ? pb->grad->data() : nullptr;
      for (int s = 0; s < n; ++s) {
        const double* gbase = g + s * plan->in_size * ci;
        const double* xbase = xv2 + s * plan->out_size * co;
        double* dxbase = dx ? dx + s * plan->out_size * co : nullptr;
        if (db)
          for (std::int64_t i = 0; i < plan->in_size; ++i)
            kernels::axpy(1.0, gbase + i * ci, db, ci);
        for (const auto& l : plan->links) {
          const double* grow = gbase + l[1] * ci;
          const double* xrow = xbase + l[0] * co;
          const double* wrow = wv2 + l[2] * ci * co;
          if (dw) {
            double* dwrow = dw + l[2] * ci * co;
            for (int c = 0; c < ci; ++c) kernels::axpy(grow[c], xrow, dwrow + c * co, co);
          }
          if (dx) {
            double* dxrow = dxbase + l[0] * co;
            for (int c = 0; c < ci; ++c) kernels::axpy(grow[c], wrow + c * co, dxrow, co);
          }
        }
      }
    };
  }
  return out;
}

Tensor depthwise_conv_nd(int dims, const Tensor& weights, const Tensor& bias, const Tensor& input,
                         const std::vector<int>& stride, Padding pad) {
  const auto in_sp = spatial_of(input, dims, "depthwise_conv_nd");
  const int ch = input.shape().back();
  if (static_cast<int>(weights.shape().size()) != dims + 1 || weights.shape().back() != ch)
    throw TensorError("depthwise_conv_nd: weight shape " + shape_str(weights.shape()) +
                      " must be [kernel...," + std::to_string(ch) + "]");
  if (bias.shape() != Shape{ch})
    throw TensorError("depthwise_conv_nd: bias shape " + shape_str(bias.shape()) + " must be [" +
                      std::to_string(ch) + "]");
  ConvSpec spec = make_conv_spec(dims,
                                 std::vector<int>(weights.shape().begin(),
                                                  weights.shape().end() - 1),
                                 ch, ch, stride, pad);
  auto plan = make_conv_plan(in_sp, spec);
  const int n = input.shape()[0];

  Shape os{n};
  os.insert(os.end(), plan->out_extent.begin(), plan->out_extent.end());
  os.push_back(ch);

  const bool grad = input.needs_grad() || weights.needs_grad() || bias.needs_grad();
  Tensor out = grad ? Tensor::leaf(os, std::vector<double>(numel(os), 0.0))
                    : Tensor::fill(os, 0.0);
  auto node = out.node();
  const double* xv = input.values().data();
  const double* wv = weights.values().data();
  const double* bv = bias.values().data();
  double* yv = node->value->data();

  for (int s = 0; s < n; ++s) {
    double* ybase = yv + s * plan->out_size * ch;
    const double* xbase = xv + s * plan->in_size * ch;
    for (std::int64_t o = 0; o < plan->out_size; ++o)
      kernels::axpy(1.0, bv, ybase + o * ch, ch);
    for (const auto& l : plan->links) {
      double* yrow = ybase + l[0] * ch;
      const double* xrow = xbase + l[1] * ch;
      const double* wrow = wv + l[2] * ch;
      for (int c = 0; c < ch; ++c) yrow[c] += wrow[c] * xrow[c];
    }
  }

  node->parents = {input.node(), weights.node(), bias.node()};
  if (grad) {
    node->backprop = [plan, n, ch](Node& self) {
      const auto& px = self.parents[0];
      const auto& pw = self.parents[1];
      const auto& pb = self.parents[2];
      const double* g = self.grad->data();
      const double* xv2 = px->value->data();
      const double* wv2 = pw->value->data();
      double* dx = px->needs_grad ? px->grad->data() : nullptr;
      double* dw = pw->needs_grad ? pw->grad->data() : nullptr;
      double* db = pb->needs_grad ? pb->grad->data() : nullptr;
      for (int s = 0; s < n; ++s) {
        const double* gbase = g + s * plan->out_size * ch;
        const double* xbase = xv2 + s * plan->in_size * ch;
        double* dxbase = dx ? dx + s * plan->in_size * ch : nullptr;
        if (db)
          for (std::int64_t o = 0; o < plan->out_size; ++o)
            kernels::axpy(1.0, gbase + o * ch, db, ch);
        for (const auto& l : plan->links) {
          const double* grow = gbase + l[0] * ch;
          const double* xrow = xbase + l[1] * ch;
          const double* wrow = wv2 + l[2] * ch;
          for (int c = 0; c < ch; ++c) {
            if (dw) dw[l[2] * ch + c] += grow[c] * xrow[c];
            if (dx) dxbase[l[1] * ch + c] += grow[c] * wrow[c];
          }
        }
      }
    };
  }
  return out;
}

Tensor max_pool(const Tensor& input, const std::vector<int>& window,
                const std::vector<int>& stride) {
  const int dims = static_cast<int>(window.size());
  const auto in_sp = spatial_of(input, dims, "max_pool");
  if (static_cast<int>(stride.size()) != dims)
    throw TensorError("max_pool: stride arity must match window arity");
  for (int i = 0; i < dims; ++i)
    if (window[i] > in_sp[i])
      throw TensorError("max_pool: window " + std::to_string(window[i]) +
                        " exceeds spatial extent " + std::to_string(in_sp[i]));
  ConvSpec spec = make_conv_spec(dims, window, 1, 1, stride, Padding::none);
  auto plan = make_conv_plan(in_sp, spec);
  const int n = input.shape()[0];
  const int ch = input.shape().back();

  Shape os{n};
  os.insert(os.end(), plan->out_extent.begin(), plan->out_extent.end());
  os.push_back(ch);

  const bool grad = input.needs_grad();
  Tensor out = grad ? Tensor::leaf(os, std::vector<double>(numel(os), 0.0))
                    : Tensor::fill(os, 0.0);
  auto node = out.node();
  const double* xv = input.values().data();
  double* yv = node->value->data();

  // argmax input-spatial index per (sample, out position, channel)
  auto argmax = std::make_shared<std::vector<std::int64_t>>(n * plan->out_size * ch, -1);
  for (int s = 0; s < n; ++s) {
    const double* xbase = xv + s * plan->in_size * ch;
    double* ybase = yv + s * plan->out_size * ch;
    std::int64_t* abase = argmax->data() + s * plan->out_size * ch;
    for (const auto& l : plan->links) {
      for (int c = 0; c < ch; ++c) {
        const double v = xbase[l[1] * ch + c];
        const std::int64_t slot = l[0] * ch + c;
        if (abase[slot] < 0 || v > ybase[slot]) {
          ybase[slot] = v;
          abase[slot] = l[1];
        }
      }
    }
  }

  node->parents = {input.node()};
  if (grad) {
    node->backprop = [plan, n, ch, argmax](Node& self) {
      double* dx = self.parents[0]->needs_grad ? self.parents[0]->grad->data() : nullptr;
      if (!dx) return;
      const double* g = self.grad->data();
      for (int s = 0; s < n; ++s) {
        const double* gbase = g + s * plan->out_size * ch;
        double* dxbase = dx + s * plan->in_size * ch;
        const std::int64_t* abase = argmax->data() + s * plan->out_size * ch;
        for (std::int64_t o = 0; o < plan->out_size; ++o)
          for (int c = 0; c < ch; ++c) dxbase[abase[o * ch + c] * ch + c] += gbase[o * ch + c];
      }
    };
  }
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  const Shape& s = input.shape();
  if (s.size() < 3)
    throw TensorError("global_avg_pool: need [N, spatial..., C], got " + shape_str(s));
  const int n = s[0];
  const int ch = s.back();
  std::int64_t sp = 1;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) sp *= s[i];

  const bool grad = input.needs_grad();
  Tensor out = grad ? Tensor::leaf({n, ch}, std::vector<double>(static_cast<std::size_t>(n) * ch, 0.0))
                    : Tensor::fill({n, ch}, 0.0);
  auto node = out.node();
  const double* xv = input.values().data();
  double* yv = node->value->data();
  const double inv = 1.0 / static_cast<double>(sp);
  for (int b = 0; b < n; ++b) {
    for (std::int64_t p = 0; p < sp; ++p)
      kernels::axpy(1.0, xv + (b * sp + p) * ch, yv + b * ch, ch);
    kernels::scale(inv, yv + b * ch, yv + b * ch, ch);
  }

  node->parents = {input.node()};
  if (grad) {
    node->backprop = [n, ch, sp, inv](Node& self) {
      double* dx = self.parents[0]->needs_grad ? self.parents[0]->grad->data() : nullptr;
      if (!dx) return;
      const double* g = self.grad->data();
      for (int b = 0; b < n; ++b)
        for (std::int64_t p = 0; p < sp; ++p)
          kernels::axpy(inv, g + b * ch, dx + (b * sp + p) * ch, ch);
    };
  }
  return out;
}

}  // namespace hsc
