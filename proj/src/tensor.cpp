#include "s2pec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "s2pec/error.hpp"

namespace s2pec {

using detail::NodePtr;
using detail::TensorNode;

namespace {

thread_local bool t_grad_enabled = true;

int64_t normalize_axis(int64_t axis, int64_t rank) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw ContractError("axis " + std::to_string(axis) + " out of range for rank " +
                        std::to_string(rank));
  }
  return axis;
}

void accumulate(const NodePtr& p, size_t i, double g) {
  p->grad[i] += g;
}

}  // namespace

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor::Tensor(Shape shape, double fill, bool requires_grad) : node_(std::make_shared<TensorNode>()) {
  for (int64_t d : shape) {
    if (d < 0) throw ContractError("negative dimension in shape " + shape_str(shape));
  }
  node_->value.assign(static_cast<size_t>(shape_numel(shape)), fill);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<TensorNode>()) {
  if (static_cast<int64_t>(values.size()) != shape_numel(shape)) {
    throw ContractError("value count " + std::to_string(values.size()) + " does not match shape " +
                        shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

const Shape& Tensor::shape() const {
  static const Shape kEmpty;
  return node_ ? node_->shape : kEmpty;
}

int64_t Tensor::dim(int64_t axis) const { return shape()[normalize_axis(axis, rank())]; }

int64_t Tensor::numel() const { return node_ ? static_cast<int64_t>(node_->value.size()) : 0; }

std::span<const double> Tensor::values() const& { return node_->value; }
std::span<double> Tensor::mutable_values() & { return node_->value; }
std::span<const double> Tensor::grad() const& { return node_->grad; }
bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<int64_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw ContractError("index rank mismatch");
  int64_t off = 0;
  size_t k = 0;
  for (int64_t i : index) {
    if (i < 0 || i >= s[k]) throw ContractError("index out of range");
    off = off * s[k] + i;
    ++k;
  }
  return node_->value[static_cast<size_t>(off)];
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->value, false); }

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                           std::function<void(TensorNode&)> backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!t_grad_enabled) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (auto& p : parents) {
    if (p.defined()) out.node_->parents.push_back(p.node_);
  }
  out.node_->backward = std::move(backward);
  return out;
}

void Tensor::backward() const {
  if (numel() != 1) throw ContractError("backward() requires a single-element tensor");
  if (!requires_grad()) throw ContractError("backward() on a tensor that does not require grad");

  // Iterative post-order DFS gives a topological order.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      TensorNode* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (TensorNode* n : order) n->ensure_grad();
  node_->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

// ---------------------------------------------------------------------------
// Broadcasting elementwise ops
// ---------------------------------------------------------------------------

namespace {

struct Broadcast {
  Shape out;
  std::vector<int64_t> ia, ib;  // empty when shapes are identical
};

Broadcast broadcast(const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    return bc;
  }
  const size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + (rank - b.size()));
  bc.out.resize(rank);
  for (size_t i = 0; i < rank; ++i) {
    if (pa[i] == pb[i] || pb[i] == 1) {
      bc.out[i] = pa[i];
    } else if (pa[i] == 1) {
      bc.out[i] = pb[i];
    } else {
      throw ContractError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
  }
  // Strides with zero on broadcast axes.
  std::vector<int64_t> sa(rank), sb(rank);
  int64_t ra = 1, rb = 1;
  for (size_t i = rank; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : ra;
    sb[i] = pb[i] == 1 ? 0 : rb;
    ra *= pa[i];
    rb *= pb[i];
  }
  const int64_t n = shape_numel(bc.out);
  bc.ia.resize(static_cast<size_t>(n));
  bc.ib.resize(static_cast<size_t>(n));
  std::vector<int64_t> idx(rank, 0);
  int64_t oa = 0, ob = 0;
  for (int64_t k = 0; k < n; ++k) {
    bc.ia[k] = oa;
    bc.ib[k] = ob;
    for (size_t d = rank; d-- > 0;) {
      ++idx[d];
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < bc.out[d]) break;
      oa -= sa[d] * idx[d];
      ob -= sb[d] * idx[d];
      idx[d] = 0;
    }
  }
  return bc;
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  auto bc = std::make_shared<Broadcast>(broadcast(a.shape(), b.shape()));
  const int64_t n = shape_numel(bc->out);
  const bool same = bc->ia.empty();
  auto va = a.values();
  auto vb = b.values();
  std::vector<double> out(static_cast<size_t>(n));
  for (int64_t k = 0; k < n; ++k) {
    const double x = va[same ? k : bc->ia[k]];
    const double y = vb[same ? k : bc->ib[k]];
    switch (op) {
      case BinOp::kAdd: out[k] = x + y; break;
      case BinOp::kSub: out[k] = x - y; break;
      case BinOp::kMul: out[k] = x * y; break;
      case BinOp::kDiv: out[k] = x / y; break;
    }
  }
  NodePtr na = a.node(), nb = b.node();
  return Tensor::make_result(bc->out, std::move(out), {a, b}, [na, nb, bc, op, same](TensorNode& self) {
    const int64_t n = static_cast<int64_t>(self.grad.size());
    const bool ga = na->requires_grad, gb = nb->requires_grad;
    for (int64_t k = 0; k < n; ++k) {
      const size_t i = static_cast<size_t>(same ? k : bc->ia[k]);
      const size_t j = static_cast<size_t>(same ? k : bc->ib[k]);
      const double g = self.grad[k];
      switch (op) {
        case BinOp::kAdd:
          if (ga) accumulate(na, i, g);
          if (gb) accumulate(nb, j, g);
          break;
        case BinOp::kSub:
          if (ga) accumulate(na, i, g);
          if (gb) accumulate(nb, j, -g);
          break;
        case BinOp::kMul:
          if (ga) accumulate(na, i, g * nb->value[j]);
          if (gb) accumulate(nb, j, g * na->value[i]);
          break;
        case BinOp::kDiv: {
          const double y = nb->value[j];
          if (ga) accumulate(na, i, g / y);
          if (gb) accumulate(nb, j, -g * na->value[i] / (y * y));
          break;
        }
      }
    }
  });
}

// Unary op with derivative expressed via (input, output).
template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D df) {
  auto vx = x.values();
  std::vector<double> out(vx.size());
  for (size_t i = 0; i < vx.size(); ++i) out[i] = f(vx[i]);
  NodePtr nx = x.node();
  return Tensor::make_result(x.shape(), std::move(out), {x}, [nx, df](TensorNode& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) {
      nx->grad[i] += self.grad[i] * df(nx->value[i], self.value[i]);
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kDiv); }

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& a) {
  return unary(a, [](double v) { return -v; }, [](double, double) { return -1.0; });
}
Tensor operator*(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v * s; }, [s](double, double) { return s; });
}
Tensor operator*(double s, const Tensor& a) { return a * s; }
Tensor operator+(const Tensor& a, double s) {
  return unary(a, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Tensor abs(const Tensor& x) {
  return unary(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions and reshaping
// ---------------------------------------------------------------------------

namespace {

// Splits a shape around one axis into (outer, extent, inner).
std::array<int64_t, 3> split_axis(const Shape& s, int64_t axis) {
  int64_t outer = 1, inner = 1;
  for (int64_t i = 0; i < axis; ++i) outer *= s[i];
  for (size_t i = static_cast<size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, s[axis], inner};
}

Tensor sum_axis(const Tensor& x, int64_t axis) {
  const auto [outer, extent, inner] = split_axis(x.shape(), axis);
  Shape os = x.shape();
  os[axis] = 1;
  auto v = x.values();
  std::vector<double> out(static_cast<size_t>(outer * inner), 0.0);
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t e = 0; e < extent; ++e)
      for (int64_t i = 0; i < inner; ++i) out[o * inner + i] += v[(o * extent + e) * inner + i];
  NodePtr nx = x.node();
  return Tensor::make_result(os, std::move(out), {x}, [nx, outer, extent, inner](TensorNode& self) {
    for (int64_t o = 0; o < outer; ++o)
      for (int64_t e = 0; e < extent; ++e)
        for (int64_t i = 0; i < inner; ++i) nx->grad[(o * extent + e) * inner + i] += self.grad[o * inner + i];
  });
}

Shape squeeze_axes(Shape s, std::vector<int64_t> axes) {
  std::sort(axes.begin(), axes.end());
  for (auto it = axes.rbegin(); it != axes.rend(); ++it) s.erase(s.begin() + *it);
  return s;
}

}  // namespace

Tensor sum(const Tensor& x) {
  auto v = x.values();
  const double total = std::accumulate(v.begin(), v.end(), 0.0);
  NodePtr nx = x.node();
  return Tensor::make_result(Shape{}, {total}, {x}, [nx](TensorNode& self) {
    const double g = self.grad[0];
    for (double& gi : nx->grad) gi += g;
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ContractError("mean of empty tensor");
  return sum(x) * (1.0 / static_cast<double>(x.numel()));
}

Tensor sum(const Tensor& x, std::vector<int64_t> axes, bool keepdim) {
  for (auto& a : axes) a = normalize_axis(a, x.rank());
  Tensor out = x;
  for (int64_t a : axes) out = sum_axis(out, a);
  if (!keepdim) out = reshape(out, squeeze_axes(out.shape(), axes));
  return out;
}

Tensor mean(const Tensor& x, std::vector<int64_t> axes, bool keepdim) {
  int64_t count = 1;
  for (auto& a : axes) {
    a = normalize_axis(a, x.rank());
    count *= x.shape()[a];
  }
  return sum(x, axes, keepdim) * (1.0 / static_cast<double>(count));
}

Tensor max(const Tensor& x, int64_t axis, bool keepdim) {
  axis = normalize_axis(axis, x.rank());
  const auto [outer, extent, inner] = split_axis(x.shape(), axis);
  if (extent == 0) throw ContractError("max over empty axis");
  Shape os = x.shape();
  os[axis] = 1;
  auto v = x.values();
  std::vector<double> out(static_cast<size_t>(outer * inner));
  auto arg = std::make_shared<std::vector<int64_t>>(out.size());
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      int64_t best = o * extent * inner + i;
      for (int64_t e = 1; e < extent; ++e) {
        const int64_t k = (o * extent + e) * inner + i;
        if (v[k] > v[best]) best = k;
      }
      out[o * inner + i] = v[best];
      (*arg)[o * inner + i] = best;
    }
  }
  NodePtr nx = x.node();
  Tensor r = Tensor::make_result(os, std::move(out), {x}, [nx, arg](TensorNode& self) {
    for (size_t k = 0; k < self.grad.size(); ++k) nx->grad[(*arg)[k]] += self.grad[k];
  });
  if (!keepdim) r = reshape(r, squeeze_axes(r.shape(), {axis}));
  return r;
}

Tensor reshape(const Tensor& x, Shape shape) {
  int64_t infer = -1, known = 1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ContractError("reshape: more than one inferred axis");
      infer = static_cast<int64_t>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) shape[infer] = known == 0 ? 0 : x.numel() / known;
  if (shape_numel(shape) != x.numel()) {
    throw ContractError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  NodePtr nx = x.node();
  std::vector<double> v(x.values().begin(), x.values().end());
  return Tensor::make_result(std::move(shape), std::move(v), {x}, [nx](TensorNode& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) nx->grad[i] += self.grad[i];
  });
}

Tensor concat(const std::vector<Tensor>& xs, int64_t axis) {
  if (xs.empty()) throw ContractError("concat of zero tensors");
  axis = normalize_axis(axis, xs[0].rank());
  Shape os = xs[0].shape();
  os[axis] = 0;
  for (const auto& t : xs) {
    Shape s = t.shape();
    if (s.size() != os.size()) throw ContractError("concat rank mismatch");
    for (size_t d = 0; d < s.size(); ++d) {
      if (static_cast<int64_t>(d) != axis && s[d] != os[d]) {
        throw ContractError("concat shape mismatch: " + shape_str(s) + " vs " + shape_str(xs[0].shape()));
      }
    }
    os[axis] += s[axis];
  }
  const auto [outer, total, inner] = split_axis(os, axis);
  std::vector<double> out(static_cast<size_t>(shape_numel(os)));
  std::vector<int64_t> offsets;
  int64_t off = 0;
  for (const auto& t : xs) {
    offsets.push_back(off);
    const int64_t ext = t.shape()[axis];
    auto v = t.values();
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(v.begin() + o * ext * inner, ext * inner, out.begin() + (o * total + off) * inner);
    off += ext;
  }
  std::vector<NodePtr> nodes;
  for (const auto& t : xs) nodes.push_back(t.node());
  return Tensor::make_result(os, std::move(out), xs,
                             [nodes, offsets, outer = outer, total = total, inner = inner, axis](TensorNode& self) {
                               for (size_t k = 0; k < nodes.size(); ++k) {
                                 const auto& n = nodes[k];
                                 if (!n->requires_grad) continue;
                                 const int64_t ext = n->shape[axis];
                                 for (int64_t o = 0; o < outer; ++o)
                                   for (int64_t e = 0; e < ext * inner; ++e)
                                     n->grad[o * ext * inner + e] += self.grad[(o * total + offsets[k]) * inner + e];
                               }
                             });
}

Tensor softmax(const Tensor& x, int64_t axis) {
  axis = normalize_axis(axis, x.rank());
  const auto [outer, extent, inner] = split_axis(x.shape(), axis);
  auto v = x.values();
  std::vector<double> out(v.size());
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (int64_t e = 0; e < extent; ++e) m = std::max(m, v[(o * extent + e) * inner + i]);
      double z = 0.0;
      for (int64_t e = 0; e < extent; ++e) {
        const int64_t k = (o * extent + e) * inner + i;
        out[k] = std::exp(v[k] - m);
        z += out[k];
      }
      for (int64_t e = 0; e < extent; ++e) out[(o * extent + e) * inner + i] /= z;
    }
  }
  NodePtr nx = x.node();
  return Tensor::make_result(x.shape(), std::move(out), {x}, [nx, outer = outer, extent = extent, inner = inner](TensorNode& self) {
    for (int64_t o = 0; o < outer; ++o) {
      for (int64_t i = 0; i < inner; ++i) {
        double dot = 0.0;
        for (int64_t e = 0; e < extent; ++e) {
          const int64_t k = (o * extent + e) * inner + i;
          dot += self.grad[k] * self.value[k];
        }
        for (int64_t e = 0; e < extent; ++e) {
          const int64_t k = (o * extent + e) * inner + i;
          nx->grad[k] += self.value[k] * (self.grad[k] - dot);
        }
      }
    }
  });
}

}  // namespace s2pec
