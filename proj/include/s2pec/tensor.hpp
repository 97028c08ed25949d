#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace s2pec {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Propagates this node's grad into its parents' grads.
  std::function<void(TensorNode&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

using NodePtr = std::shared_ptr<TensorNode>;

}  // namespace detail

// Graph recording is enabled per thread; disabled inside NoGradGuard scopes.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Dense float64 array with reverse-mode autodiff. Copies share storage
// (handle semantics); use clone() or detach() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int64_t rank() const { return static_cast<int64_t>(shape().size()); }
  // Negative axes count from the end.
  int64_t dim(int64_t axis) const;
  int64_t numel() const;

  // Views into shared storage; not available on temporaries, whose storage
  // may die at the end of the full expression.
  std::span<const double> values() const&;
  std::span<const double> values() const&& = delete;
  std::span<double> mutable_values() &;
  std::span<const double> grad() const&;
  std::span<const double> grad() const&& = delete;
  bool has_grad() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  double item() const;
  double at(std::initializer_list<int64_t> index) const;

  Tensor detach() const;
  Tensor clone() const { return detach(); }

  // Seeds d(this)/d(this) = 1 and accumulates grads through the graph.
  void backward() const;
  void zero_grad();

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Builds an op result. Parents and the backward closure are recorded only
  // when grad mode is on and at least one parent requires grad.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents,
                            std::function<void(detail::TensorNode&)> backward);

  const detail::NodePtr& node() const { return node_; }

 private:
  explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}
  detail::NodePtr node_;
};

// ---- elementwise (numpy broadcasting, equal or 1 per aligned axis) ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator*(const Tensor& a, double s);
Tensor operator*(double s, const Tensor& a);
Tensor operator+(const Tensor& a, double s);

Tensor abs(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
// Gradient is zero where the input lies outside [lo, hi].
Tensor clamp(const Tensor& x, double lo, double hi);

// ---- reductions / shape ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum(const Tensor& x, std::vector<int64_t> axes, bool keepdim = true);
Tensor mean(const Tensor& x, std::vector<int64_t> axes, bool keepdim = true);
// Max along one axis; the gradient routes to the first maximal element.
Tensor max(const Tensor& x, int64_t axis, bool keepdim = true);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat(const std::vector<Tensor>& xs, int64_t axis);
Tensor softmax(const Tensor& x, int64_t axis);

// ---- neural network primitives (NCHW) ----
using Pair = std::array<int64_t, 2>;

// x: (N, Cin, H, W), w: (Cout, Cin, KH, KW), b: (Cout) or undefined.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, Pair stride = {1, 1},
              Pair pad = {0, 0});
// x: (N, Cin, H, W), w: (Cin, Cout, KH, KW), b: (Cout) or undefined.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, Pair stride = {1, 1},
                        Pair pad = {0, 0}, Pair output_pad = {0, 0});
// x: (N, D), w: (O, D), b: (O) or undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Normalises axis 1 of an (N, C, ...) tensor. In training mode batch
// statistics are used and the running buffers are updated in place.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum = 0.1, double eps = 1e-5);

Tensor max_pool2d(const Tensor& x, Pair kernel, Pair stride);
// Bin edges follow floor(i*in/out) .. ceil((i+1)*in/out); works for
// both shrinking and growing.
Tensor adaptive_avg_pool2d(const Tensor& x, int64_t out_h, int64_t out_w);
// Half-pixel-centre bilinear resampling of the last two axes.
Tensor resize_bilinear(const Tensor& x, int64_t out_h, int64_t out_w);

}  // namespace s2pec
