#include "hsc/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "hsc/kernels.hpp"

namespace hsc {

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

std::uint64_t next_id() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

std::shared_ptr<Node> make_node(Shape shape, bool needs_grad) {
  auto n = std::make_shared<Node>();
  const std::int64_t count = numel(shape);
  if (count <= 0) throw TensorError("tensor shape " + shape_str(shape) + " has no elements");
  n->shape = std::move(shape);
  n->value = std::make_shared<std::vector<double>>(count, 0.0);
  if (needs_grad) n->grad = std::make_shared<std::vector<double>>(count, 0.0);
  n->needs_grad = needs_grad;
  n->id = next_id();
  return n;
}

double* grad_ptr(const std::shared_ptr<Node>& n) {
  return n->needs_grad ? n->grad->data() : nullptr;
}

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  auto n = make_node(std::move(shape), false);
  if (static_cast<std::int64_t>(values.size()) != numel(n->shape))
    throw TensorError("constant: " + std::to_string(values.size()) + " values for shape " +
                      shape_str(n->shape));
  *n->value = std::move(values);
  return Tensor(n);
}

Tensor Tensor::fill(Shape shape, double v) {
  auto n = make_node(std::move(shape), false);
  std::fill(n->value->begin(), n->value->end(), v);
  return Tensor(n);
}

Tensor Tensor::scalar(double v) { return fill({1}, v); }

Tensor Tensor::leaf(Shape shape, std::vector<double> values) {
  auto n = make_node(std::move(shape), true);
  if (static_cast<std::int64_t>(values.size()) != numel(n->shape))
    throw TensorError("leaf: " + std::to_string(values.size()) + " values for shape " +
                      shape_str(n->shape));
  *n->value = std::move(values);
  return Tensor(n);
}

const std::vector<double>& Tensor::grad() const {
  if (!node_->grad) throw TensorError("tensor has no gradient buffer");
  return *node_->grad;
}

void Tensor::zero_grad() {
  if (node_->grad) std::fill(node_->grad->begin(), node_->grad->end(), 0.0);
}

double Tensor::item() const {
  if (size() != 1) throw TensorError("item() on non-scalar tensor " + shape_str(shape()));
  return (*node_->value)[0];
}

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw TensorError("backward requires a scalar loss, got " + shape_str(loss.shape()));
  Node* root = loss.node().get();
  if (!root->needs_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    order.push_back(n);
    for (const auto& p : n->parents)
      if (p->needs_grad) stack.push_back(p.get());
  }
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });

  // Interior grads are scratch space for this pass; only leaves accumulate
  // across calls (so a second backward without reset doubles leaf grads).
  for (Node* n : order)
    if (n->backprop) std::fill(n->grad->begin(), n->grad->end(), 0.0);

  (*root->grad)[0] += 1.0;
  for (Node* n : order)
    if (n->backprop) n->backprop(*n);
}

// ---- broadcasting ----------------------------------------------------------

namespace {

// Row-major strides of b aligned to a's trailing dimensions; 0 where b
// broadcasts. Throws when shapes are incompatible.
std::vector<std::int64_t> bcast_strides(const Shape& as, const Shape& bs, const char* opname) {
  if (bs.size() > as.size())
    throw TensorError(std::string(opname) + ": shape mismatch " + shape_str(as) + " vs " +
                      shape_str(bs));
  std::vector<std::int64_t> bstr(bs.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(bs.size()) - 1; i >= 0; --i) {
    bstr[i] = acc;
    acc *= bs[i];
  }
  std::vector<std::int64_t> out(as.size(), 0);
  const int off = static_cast<int>(as.size() - bs.size());
  for (int i = 0; i < static_cast<int>(as.size()); ++i) {
    const int bi = i - off;
    if (bi < 0) continue;
    if (bs[bi] == as[i]) {
      out[i] = bstr[bi];
    } else if (bs[bi] == 1) {
      out[i] = 0;
    } else {
      throw TensorError(std::string(opname) + ": shape mismatch " + shape_str(as) + " vs " +
                        shape_str(bs));
    }
  }
  return out;
}

bool same_extents(const Shape& a, const Shape& b) {
  return numel(a) == numel(b) && [&] {
    const int off = static_cast<int>(a.size() - b.size());
    if (off < 0) return false;
    for (std::size_t i = 0; i < b.size(); ++i)
      if (b[i] != a[i + off]) return false;
    for (int i = 0; i < off; ++i)
      if (a[i] != 1) return false;
    return true;
  }();
}

template <class F>
void for_each_bcast(const Shape& as, const std::vector<std::int64_t>& bstride, F&& f) {
  const int d = static_cast<int>(as.size());
  std::vector<int> idx(d, 0);
  const std::int64_t an = numel(as);
  std::int64_t bi = 0;
  for (std::int64_t ai = 0; ai < an; ++ai) {
    f(ai, bi);
    for (int k = d - 1; k >= 0; --k) {
      ++idx[k];
      bi += bstride[k];
      if (idx[k] < as[k]) break;
      bi -= static_cast<std::int64_t>(as[k]) * bstride[k];
      idx[k] = 0;
    }
  }
}

}  // namespace

Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b) {
  const char* opname = kind == EwKind::add   ? "elementwise add"
                       : kind == EwKind::sub ? "elementwise sub"
                       : kind == EwKind::mul ? "elementwise mul"
                                             : "elementwise div";
  const auto bstride = bcast_strides(a.shape(), b.shape(), opname);
  const bool fullsize = same_extents(a.shape(), b.shape());

  auto out = make_node(a.shape(), a.needs_grad() || b.needs_grad());
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out->value->data();
  const std::int64_t n = numel(a.shape());

  if (fullsize) {
    switch (kind) {
      case EwKind::add: kernels::add(av, bv, ov, n); break;
      case EwKind::sub: kernels::sub(av, bv, ov, n); break;
      case EwKind::mul: kernels::mul(av, bv, ov, n); break;
      case EwKind::div: kernels::div(av, bv, ov, n); break;
    }
  } else {
    switch (kind) {
      case EwKind::add:
        for_each_bcast(a.shape(), bstride, [&](std::int64_t i, std::int64_t j) { ov[i] = av[i] + bv[j]; });
        break;
      case EwKind::sub:
        for_each_bcast(a.shape(), bstride, [&](std::int64_t i, std::int64_t j) { ov[i] = av[i] - bv[j]; });
        break;
      case EwKind::mul:
        for_each_bcast(a.shape(), bstride, [&](std::int64_t i, std::int64_t j) { ov[i] = av[i] * bv[j]; });
        break;
      case EwKind::div:
        for_each_bcast(a.shape(), bstride, [&](std::int64_t i, std::int64_t j) { ov[i] = av[i] / bv[j]; });
        break;
    }
  }

  out->parents = {a.node(), b.node()};
  if (out->needs_grad) {
    out->backprop = [kind, bstride, fullsize](Node& self) {
      const auto& pa = self.parents[0];
      const auto& pb = self.parents[1];
      const double* g = self.grad->data();
      const double* av2 = pa->value->data();
      const double* bv2 = pb->value->data();
      double* da = grad_ptr(pa);
      double* db = grad_ptr(pb);
      const std::int64_t n2 = numel(self.shape);
      switch (kind) {
        case EwKind::add:
          if (da) kernels::axpy(1.0, g, da, n2);
          if (db) {
            if (fullsize) kernels::axpy(1.0, g, db, n2);
            else for_each_bcast(self.shape, bstride, [&](std::int64_t i, std::int64_t j) { db[j] += g[i]; });
          }
          break;
        case EwKind::sub:
          if (da) kernels::axpy(1.0, g, da, n2);
          if (db) {
            if (fullsize) kernels::axpy(-1.0, g, db, n2);
            else for_each_bcast(self.shape, bstride, [&](std::int64_t i, std::int64_t j) { db[j] -= g[i]; });
          }
          break;
        case EwKind::mul:
          for_each_bcast(self.shape, bstride, [&](std::int64_t i, std::int64_t j) {
            if (da) da[i] += g[i] * bv2[j];
            if (db) db[j] += g[i] * av2[i];
          });
          break;
        case EwKind::div:
          for_each_bcast(self.shape, bstride, [&](std::int64_t i, std::int64_t j) {
            if (da) da[i] += g[i] / bv2[j];
            if (db) db[j] -= g[i] * av2[i] / (bv2[j] * bv2[j]);
          });
          break;
      }
    };
  }
  return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(EwKind::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(EwKind::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(EwKind::mul, a, b); }
Tensor divide(const Tensor& a, const Tensor& b) { return elementwise(EwKind::div, a, b); }

// ---- scalar and unary ops ---------------------------------------------------

namespace {

template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& a, Fwd&& fwd, Bwd&& bwd) {
  auto out = make_node(a.shape(), a.needs_grad());
  const double* av = a.values().data();
  double* ov = out->value->data();
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i) ov[i] = fwd(av[i]);
  out->parents = {a.node()};
  if (out->needs_grad) {
    out->backprop = [bwd](Node& self) {
      const auto& pa = self.parents[0];
      double* da = grad_ptr(pa);
      if (!da) return;
      const double* g = self.grad->data();
      const double* av2 = pa->value->data();
      const double* ov2 = self.value->data();
      const std::int64_t n2 = numel(self.shape);
      for (std::int64_t i = 0; i < n2; ++i) da[i] += g[i] * bwd(av2[i], ov2[i]);
    };
  }
  return Tensor(out);
}

}  // namespace

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary_op(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_op(const Tensor& a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_op(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log_op(const Tensor& a) {
  return unary_op(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor pow_scalar(const Tensor& a, double p) {
  return unary_op(a, [p](double x) { return std::pow(x, p); },
                  [p](double x, double) { return p * std::pow(x, p - 1.0); });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary_op(a, [lo](double x) { return x < lo ? lo : x; },
                  [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

// ---- matmul ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    throw TensorError("matmul: shape mismatch " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  auto out = make_node({m, n}, a.needs_grad() || b.needs_grad());
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out->value->data();
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) kernels::axpy(av[i * k + p], bv + p * n, ov + i * n, n);

  out->parents = {a.node(), b.node()};
  if (out->needs_grad) {
    out->backprop = [m, k, n](Node& self) {
      const auto& pa = self.parents[0];
      const auto& pb = self.parents[1];
      const double* g = self.grad->data();
      const double* av2 = pa->value->data();
      const double* bv2 = pb->value->data();
      if (double* da = grad_ptr(pa)) {
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) da[i * k + p] += kernels::dot(g + i * n, bv2 + p * n, n);
      }
      if (double* db = grad_ptr(pb)) {
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) kernels::axpy(av2[i * k + p], g + i * n, db + p * n, n);
      }
    };
  }
  return Tensor(out);
}

Tensor transpose2d(const Tensor& a) {
  if (a.shape().size() != 2)
    throw TensorError("transpose2d expects rank 2, got " + shape_str(a.shape()));
  const int m = a.shape()[0], n = a.shape()[1];
  auto out = make_node({n, m}, a.needs_grad());
  const double* av = a.values().data();
  double* ov = out->value->data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) ov[j * m + i] = av[i * n + j];
  out->parents = {a.node()};
  if (out->needs_grad) {
    out->backprop = [m, n](Node& self) {
      double* da = grad_ptr(self.parents[0]);
      if (!da) return;
      const double* g = self.grad->data();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) da[i * n + j] += g[j * m + i];
    };
  }
  return Tensor(out);
}

// ---- softmax -----------------------------------------------------------------

Tensor softmax_lastdim(const Tensor& a) {
  if (a.shape().empty()) throw TensorError("softmax on empty shape");
  const int c = a.shape().back();
  const std::int64_t rows = a.size() / c;
  auto out = make_node(a.shape(), a.needs_grad());
  const double* av = a.values().data();
  double* ov = out->value->data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* x = av + r * c;
    double* y = ov + r * c;
    double mx = x[0];
    for (int i = 1; i < c; ++i) mx = std::max(mx, x[i]);
    double z = 0.0;
    for (int i = 0; i < c; ++i) {
      y[i] = std::exp(x[i] - mx);
      z += y[i];
    }
    for (int i = 0; i < c; ++i) y[i] /= z;
  }
  out->parents = {a.node()};
  if (out->needs_grad) {
    out->backprop = [c, rows](Node& self) {
      double* da = grad_ptr(self.parents[0]);
      if (!da) return;
      const double* g = self.grad->data();
      const double* y = self.value->data();
      for (std::int64_t r = 0; r < rows; ++r) {
        const double s = kernels::dot(g + r * c, y + r * c, c);
        for (int i = 0; i < c; ++i) da[r * c + i] += (g[r * c + i] - s) * y[r * c + i];
      }
    };
  }
  return Tensor(out);
}

// ---- reductions ----------------------------------------------------------------

Tensor sum_all(const Tensor& a) {
  auto out = make_node({1}, a.needs_grad());
  (*out->value)[0] = kernels::sum(a.values().data(), a.size());
  out->parents = {a.node()};
  if (out->needs_grad) {
    out->backprop = [](Node& self) {
      double* da = grad_ptr(self.parents[0]);
      if (!da) return;
      const double g = (*self.grad)[0];
      const std::int64_t n = numel(self.parents[0]->shape);
      for (std::int64_t i = 0; i < n; ++i) da[i] += g;
    };
  }
  return Tensor(out);
}

Tensor mean_all(const Tensor& a) { return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.size())); }

Tensor sum_lastdim(const Tensor& a) {
  if (a.shape().empty()) throw TensorError("sum_lastdim on empty shape");
  const int c = a.shape().back();
  const std::int64_t rows = a.size() / c;
  Shape os(a.shape().begin(), a.shape().end() - 1);
  if (os.empty()) os = {1};
  auto out = make_node(os, a.needs_grad());
  const double* av = a.values().data();
  double* ov = out->value->data();
  for (std::int64_t r = 0; r < rows; ++r) ov[r] = kernels::sum(av + r * c, c);
  out->parents = {a.node()};
  if (out->needs_grad) {
    out->backprop = [c, rows](Node& self) {
      double* da = grad_ptr(self.parents[0]);
      if (!da) return;
      const double* g = self.grad->data();
      for (std::int64_t r = 0; r < rows; ++r)
        for (int i = 0; i < c; ++i) da[r * c + i] += g[r];
    };
  }
  return Tensor(out);
}

Tensor mean_channelwise(const Tensor& a) {
  if (a.shape().empty()) throw TensorError("mean_channelwise on empty shape");
  const int c = a.shape().back();
  const std::int64_t rows = a.size() / c;
  auto out = make_node({c}, a.needs_grad());
  const double* av = a.values().data();
  double* ov = out->value->data();
  for (std::int64_t r = 0; r < rows; ++r) kernels::axpy(1.0, av + r * c, ov, c);
  kernels::scale(1.0 / static_cast<double>(rows), ov, ov, c);
  out->parents = {a.node()};
  if (out->needs_grad) {
    out->backprop = [c, rows](Node& self) {
      double* da = grad_ptr(self.parents[0]);
      if (!da) return;
      const double* g = self.grad->data();
      const double inv = 1.0 / static_cast<double>(rows);
      for (std::int64_t r = 0; r < rows; ++r)
        for (int i = 0; i < c; ++i) da[r * c + i] += g[i] * inv;
    };
  }
  return Tensor(out);
}

// ---- shape ops -------------------------------------------------------------------

Tensor concat(int axis, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw TensorError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  const int rank = static_cast<int>(first.size());
  if (axis < 0 || axis >= rank) throw TensorError("concat: axis out of range");
  int axis_total = 0;
  bool grad = false;
  for (const auto& p : parts) {
    if (static_cast<int>(p.shape().size()) != rank)
      throw TensorError("concat: rank mismatch " + shape_str(first) + " vs " + shape_str(p.shape()));
    for (int i = 0; i < rank; ++i)
      if (i != axis && p.shape()[i] != first[i])
        throw TensorError("concat: shape mismatch " + shape_str(first) + " vs " +
                          shape_str(p.shape()));
    axis_total += p.shape()[axis];
    grad = grad || p.needs_grad();
  }
  Shape os = first;
  os[axis] = axis_total;

  std::int64_t outer = 1, trail = 1;
  for (int i = 0; i < axis; ++i) outer *= first[i];
  for (int i = axis + 1; i < rank; ++i) trail *= first[i];

  auto out = make_node(os, grad);
  double* ov = out->value->data();
  const std::int64_t out_block = static_cast<std::int64_t>(axis_total) * trail;
  std::int64_t off = 0;
  std::vector<std::int64_t> part_off(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) {
    part_off[p] = off;
    const std::int64_t blk = static_cast<std::int64_t>(parts[p].shape()[axis]) * trail;
    const double* pv = parts[p].values().data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy(pv + o * blk, pv + (o + 1) * blk, ov + o * out_block + off);
    off += blk;
  }

  out->parents.reserve(parts.size());
  for (const auto& p : parts) out->parents.push_back(p.node());
  if (out->needs_grad) {
    out->backprop = [outer, out_block, part_off](Node& self) {
      const double* g = self.grad->data();
      for (std::size_t p = 0; p < self.parents.size(); ++p) {
        double* dp = grad_ptr(self.parents[p]);
        if (!dp) continue;
        const std::int64_t blk = numel(self.parents[p]->shape) / outer;
        for (std::int64_t o = 0; o < outer; ++o)
          kernels::axpy(1.0, g + o * out_block + part_off[p], dp + o * blk, blk);
      }
    };
  }
  return Tensor(out);
}

Tensor slice(const Tensor& a, int axis, int start, int len) {
  const Shape& as = a.shape();
  const int rank = static_cast<int>(as.size());
  if (axis < 0 || axis >= rank) throw TensorError("slice: axis out of range");
  if (start < 0 || len <= 0 || start + len > as[axis])
    throw TensorError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                      ") out of bounds for extent " + std::to_string(as[axis]));
  Shape os = as;
  os[axis] = len;
  std::int64_t outer = 1, trail = 1;
  for (int i = 0; i < axis; ++i) outer *= as[i];
  for (int i = axis + 1; i < rank; ++i) trail *= as[i];
  const std::int64_t in_block = static_cast<std::int64_t>(as[axis]) * trail;
  const std::int64_t out_block = static_cast<std::int64_t>(len) * trail;
  const std::int64_t off = static_cast<std::int64_t>(start) * trail;

  auto out = make_node(os, a.needs_grad());
  const double* av = a.values().data();
  double* ov = out->value->data();
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy(av + o * in_block + off, av + o * in_block + off + out_block, ov + o * out_block);

  out->parents = {a.node()};
  if (out->needs_grad) {
    out->backprop = [outer, in_block, out_block, off](Node& self) {
      double* da = grad_ptr(self.parents[0]);
      if (!da) return;
      const double* g = self.grad->data();
      for (std::int64_t o = 0; o < outer; ++o)
        kernels::axpy(1.0, g + o * out_block, da + o * in_block + off, out_block);
    };
  }
  return Tensor(out);
}

Tensor reshape(const Tensor& a, Shape to) {
  if (numel(to) != a.size())
    throw TensorError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(to));
  auto n = std::make_shared<Node>();
  n->shape = std::move(to);
  n->value = a.node()->value;  // shared view
  n->needs_grad = a.needs_grad();
  if (n->needs_grad) n->grad = std::make_shared<std::vector<double>>(a.size(), 0.0);
  n->id = next_id();
  n->parents = {a.node()};
  if (n->needs_grad) {
    n->backprop = [](Node& self) {
      double* da = grad_ptr(self.parents[0]);
      if (!da) return;
      kernels::axpy(1.0, self.grad->data(), da, numel(self.shape));
    };
  }
  return Tensor(n);
}

Tensor detach(const Tensor& a) {
  auto n = std::make_shared<Node>();
  n->shape = a.shape();
  n->value = a.node()->value;
  n->needs_grad = false;
  n->id = next_id();
  return Tensor(n);
}

// ---- parameters ------------------------------------------------------------------

ParamPtr ParamRegistry::create(const std::string& name, Shape shape, std::vector<double> init,
                               const std::string& share_group) {
  if (find(name)) throw TensorError("parameter name already registered: " + name);
  auto p = std::make_shared<Parameter>();
  p->name = name;
  p->share_group = share_group;

  ParamPtr head;
  if (!share_group.empty()) {
    for (const auto& q : params_)
      if (q->share_group == share_group) {
        head = q;
        break;
      }
  }
  auto leaf = std::make_shared<Node>();
  leaf->shape = std::move(shape);
  leaf->needs_grad = true;
  leaf->id = next_id();
  if (head) {
    if (head->shape() != leaf->shape)
      throw TensorError("share-group " + share_group + ": shape " + shape_str(leaf->shape) +
                        " conflicts with " + shape_str(head->shape()));
    leaf->value = head->leaf->value;
    leaf->grad = head->leaf->grad;
  } else {
    const std::int64_t n = numel(leaf->shape);
    if (static_cast<std::int64_t>(init.size()) != n)
      throw TensorError("parameter " + name + ": " + std::to_string(init.size()) +
                        " init values for shape " + shape_str(leaf->shape));
    leaf->value = std::make_shared<std::vector<double>>(std::move(init));
    leaf->grad = std::make_shared<std::vector<double>>(n, 0.0);
  }
  p->leaf = leaf;
  params_.push_back(p);
  return p;
}

ParamPtr ParamRegistry::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p;
  return nullptr;
}

std::vector<ParamPtr> ParamRegistry::distinct() const {
  std::vector<ParamPtr> out;
  std::unordered_set<const void*> seen;
  for (const auto& p : params_)
    if (seen.insert(p->leaf->value.get()).second) out.push_back(p);
  return out;
}

std::size_t ParamRegistry::distinct_count() const { return distinct().size(); }

void ParamRegistry::zero_grad() {
  for (const auto& p : distinct()) std::fill(p->grad().begin(), p->grad().end(), 0.0);
}

std::int64_t ParamRegistry::total_weights() const {
  std::int64_t n = 0;
  for (const auto& p : distinct()) n += numel(p->shape());
  return n;
}

// ---- initializers -------------------------------------------------------------------

std::vector<double> zeros_init(std::int64_t n) { return std::vector<double>(n, 0.0); }
std::vector<double> ones_init(std::int64_t n) { return std::vector<double>(n, 1.0); }

std::vector<double> uniform_init(std::int64_t n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

std::vector<double> glorot_init(const Shape& shape, std::mt19937_64& rng) {
  double fan_in = 1, fan_out = 1;
  if (shape.size() >= 2) {
    double receptive = 1;
    for (std::size_t i = 0; i + 2 < shape.size(); ++i) receptive *= shape[i];
    fan_in = receptive * shape[shape.size() - 2];
    fan_out = receptive * shape[shape.size() - 1];
  } else {
    fan_in = fan_out = shape.empty() ? 1 : shape[0];
  }
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  return uniform_init(numel(shape), rng, -limit, limit);
}

// ---- finite differences -----------------------------------------------------------------

FdResult finite_diff_check(const std::function<Tensor()>& f, const Tensor& at, double eps) {
  if (eps <= 0.0) throw TensorError("finite_diff_check: eps must be positive");
  if (!at.has_grad()) throw TensorError("finite_diff_check: probe tensor is not differentiable");
  auto node = at.node();
  auto& data = *node->value;
  auto& grad = *node->grad;

  std::fill(grad.begin(), grad.end(), 0.0);
  backward(f());
  const std::vector<double> analytic = grad;

  FdResult res;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double v0 = data[i];
    data[i] = v0 + eps;
    const double f1 = f().item();
    data[i] = v0 - eps;
    const double f2 = f().item();
    data[i] = v0;
    const double num = (f1 - f2) / (2.0 * eps);
    if (!std::isfinite(num) || !std::isfinite(analytic[i]))
      throw TensorError("finite_diff_check: non-finite value at coordinate " + std::to_string(i));
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(num), 1e-8});
    const double rel = std::fabs(analytic[i] - num) / denom;
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_coord = static_cast<std::int64_t>(i);
      res.analytic = analytic[i];
      res.numeric = num;
    }
  }
  return res;
}

}  // namespace hsc
