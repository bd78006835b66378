#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

// Dense n-dimensional double tensors with reverse-mode automatic
// differentiation. Graphs are built eagerly: every operation appends a node
// holding its inputs and a local backward rule; backward() replays the
// record in reverse topological order. Gradients accumulate (+=), so a
// parameter used at many sites (levels, time steps, modality branches)
// receives the sum of all per-site contributions. Reset via zero_grad.

namespace hsc {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Node {
  Shape shape;
  std::shared_ptr<std::vector<double>> value;
  std::shared_ptr<std::vector<double>> grad;  // allocated only when needs_grad
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // empty for leaves
  bool needs_grad = false;
  std::uint64_t id = 0;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor fill(Shape shape, double v);
  static Tensor scalar(double v);
  // Differentiable leaf (owns a grad buffer); used for inputs under test.
  static Tensor leaf(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t size() const { return numel(node_->shape); }
  const std::vector<double>& values() const { return *node_->value; }
  std::vector<double>& mutable_values() { return *node_->value; }
  bool has_grad() const { return node_->grad != nullptr; }
  const std::vector<double>& grad() const;
  void zero_grad();
  double item() const;
  bool needs_grad() const { return node_->needs_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Seeds d(loss)/d(loss)=1 and accumulates gradients into every reachable
// differentiable node. Errors if loss is not a scalar.
void backward(const Tensor& loss);

// ---- primitive operations -------------------------------------------------

enum class EwKind { add, sub, mul, div };

// b broadcasts onto a by the trailing-dimension rule (right-aligned, each b
// extent equal to a's or 1); the result always has a's shape.
Tensor elementwise(EwKind kind, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor divide(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k]x[k,n] -> [m,n]
Tensor transpose2d(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor pow_scalar(const Tensor& a, double p);
Tensor clamp_min(const Tensor& a, double lo);

Tensor softmax_lastdim(const Tensor& a);

Tensor sum_all(const Tensor& a);       // -> [1]
Tensor mean_all(const Tensor& a);      // -> [1]
Tensor sum_lastdim(const Tensor& a);   // [..,C] -> [..]
Tensor mean_channelwise(const Tensor& a);  // [..,C] -> [C], mean over leading dims

Tensor concat(int axis, const std::vector<Tensor>& parts);
Tensor slice(const Tensor& a, int axis, int start, int len);
Tensor reshape(const Tensor& a, Shape to);  // shares the value buffer
Tensor detach(const Tensor& a);             // constant view of the same values

// ---- parameters -----------------------------------------------------------

struct Parameter {
  std::string name;
  std::string share_group;  // empty = unshared
  std::shared_ptr<Node> leaf;

  const Shape& shape() const { return leaf->shape; }
  std::vector<double>& data() { return *leaf->value; }
  const std::vector<double>& data() const { return *leaf->value; }
  std::vector<double>& grad() { return *leaf->grad; }
  const std::vector<double>& grad() const { return *leaf->grad; }
  Tensor tensor() const { return Tensor(leaf); }
};

using ParamPtr = std::shared_ptr<Parameter>;

// Named parameter collection. Parameters created with the same share-group
// alias one value buffer and one grad buffer; distinct_count() counts unique
// buffers (the trainable parameter count).
class ParamRegistry {
 public:
  ParamPtr create(const std::string& name, Shape shape, std::vector<double> init,
                  const std::string& share_group = "");
  ParamPtr find(const std::string& name) const;
  const std::vector<ParamPtr>& all() const { return params_; }
  std::vector<ParamPtr> distinct() const;  // one per buffer, creation order
  std::size_t name_count() const { return params_.size(); }
  std::size_t distinct_count() const;
  void zero_grad();
  std::int64_t total_weights() const;  // doubles across distinct buffers

 private:
  std::vector<ParamPtr> params_;
};

// ---- initializers ----------------------------------------------------------

std::vector<double> zeros_init(std::int64_t n);
std::vector<double> ones_init(std::int64_t n);
std::vector<double> uniform_init(std::int64_t n, std::mt19937_64& rng, double lo, double hi);
std::vector<double> glorot_init(const Shape& shape, std::mt19937_64& rng);

// ---- finite differences ----------------------------------------------------

struct FdResult {
  double max_rel_err = 0.0;
  std::int64_t worst_coord = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central differences on every coordinate of `at` (a differentiable leaf or
// parameter tensor), compared against the analytic gradient of f(). f must
// rebuild its graph on each call and be deterministic. Non-finite values
// raise TensorError naming the coordinate.
FdResult finite_diff_check(const std::function<Tensor()>& f, const Tensor& at, double eps);

}  // namespace hsc
