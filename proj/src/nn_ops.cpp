#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "s2pec/error.hpp"
#include "s2pec/tensor.hpp"

namespace s2pec {

using detail::NodePtr;
using detail::TensorNode;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct ConvGeom {
  int64_t channels, height, width;  // image side
  int64_t kh, kw, sh, sw, ph, pw;
  int64_t out_h, out_w;             // column grid
  int64_t rows() const { return channels * kh * kw; }
  int64_t cols() const { return out_h * out_w; }
};

void im2col(const double* img, const ConvGeom& g, double* col) {
  for (int64_t c = 0; c < g.channels; ++c) {
    for (int64_t ki = 0; ki < g.kh; ++ki) {
      for (int64_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * g.cols();
        for (int64_t oy = 0; oy < g.out_h; ++oy) {
          const int64_t y = oy * g.sh - g.ph + ki;
          double* dst = row + oy * g.out_w;
          if (y < 0 || y >= g.height) {
            std::fill_n(dst, g.out_w, 0.0);
            continue;
          }
          const double* src = img + (c * g.height + y) * g.width;
          for (int64_t ox = 0; ox < g.out_w; ++ox) {
            const int64_t x = ox * g.sw - g.pw + kj;
            dst[ox] = (x >= 0 && x < g.width) ? src[x] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, const ConvGeom& g, double* img) {
  for (int64_t c = 0; c < g.channels; ++c) {
    for (int64_t ki = 0; ki < g.kh; ++ki) {
      for (int64_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * g.cols();
        for (int64_t oy = 0; oy < g.out_h; ++oy) {
          const int64_t y = oy * g.sh - g.ph + ki;
          if (y < 0 || y >= g.height) continue;
          double* dst = img + (c * g.height + y) * g.width;
          const double* src = row + oy * g.out_w;
          for (int64_t ox = 0; ox < g.out_w; ++ox) {
            const int64_t x = ox * g.sw - g.pw + kj;
            if (x >= 0 && x < g.width) dst[x] += src[ox];
          }
        }
      }
    }
  }
}

void require_rank(const Tensor& t, int64_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ContractError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                        shape_str(t.shape()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, Pair stride, Pair pad) {
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int64_t cout = w.dim(0);
  if (w.dim(1) != cin) {
    throw ContractError("conv2d: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  }
  if (b.defined() && b.numel() != cout) throw ContractError("conv2d: bias size mismatch");
  ConvGeom g{cin, h, wd, w.dim(2), w.dim(3), stride[0], stride[1], pad[0], pad[1], 0, 0};
  g.out_h = (h + 2 * g.ph - g.kh) / g.sh + 1;
  g.out_w = (wd + 2 * g.pw - g.kw) / g.sw + 1;
  if (h + 2 * g.ph < g.kh || wd + 2 * g.pw < g.kw) {
    throw ContractError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  }
  const int64_t p = g.cols();
  std::vector<double> out(static_cast<size_t>(n * cout * p));
  std::vector<double> col(static_cast<size_t>(g.rows() * p));
  ConstMapMat wm(w.values().data(), cout, g.rows());
  for (int64_t i = 0; i < n; ++i) {
    im2col(x.values().data() + i * cin * h * wd, g, col.data());
    MapMat om(out.data() + i * cout * p, cout, p);
    om.noalias() = wm * ConstMapMat(col.data(), g.rows(), p);
    if (b.defined()) {
      for (int64_t c = 0; c < cout; ++c) om.row(c).array() += b.values()[c];
    }
  }
  NodePtr nx = x.node(), nw = w.node(), nb = b.defined() ? b.node() : nullptr;
  return Tensor::make_result(
      {n, cout, g.out_h, g.out_w}, std::move(out), {x, w, b}, [nx, nw, nb, g, n, cout](TensorNode& self) {
        const int64_t p = g.cols();
        const int64_t img = g.channels * g.height * g.width;
        std::vector<double> col(static_cast<size_t>(g.rows() * p));
        ConstMapMat wm(nw->value.data(), cout, g.rows());
        for (int64_t i = 0; i < n; ++i) {
          ConstMapMat gm(self.grad.data() + i * cout * p, cout, p);
          if (nb && nb->requires_grad) {
            for (int64_t c = 0; c < cout; ++c) nb->grad[c] += gm.row(c).sum();
          }
          if (nw->requires_grad) {
            im2col(nx->value.data() + i * img, g, col.data());
            MapMat(nw->grad.data(), cout, g.rows()).noalias() +=
                gm * ConstMapMat(col.data(), g.rows(), p).transpose();
          }
          if (nx->requires_grad) {
            MapMat(col.data(), g.rows(), p).noalias() = wm.transpose() * gm;
            col2im(col.data(), g, nx->grad.data() + i * img);
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, Pair stride, Pair pad,
                        Pair output_pad) {
  require_rank(x, 4, "conv_transpose2d input");
  require_rank(w, 4, "conv_transpose2d weight");
  const int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  if (w.dim(0) != cin) {
    throw ContractError("conv_transpose2d: input " + shape_str(x.shape()) + " vs weight " +
                        shape_str(w.shape()));
  }
  const int64_t cout = w.dim(1);
  if (b.defined() && b.numel() != cout) throw ContractError("conv_transpose2d: bias size mismatch");
  const int64_t oh = (h - 1) * stride[0] - 2 * pad[0] + w.dim(2) + output_pad[0];
  const int64_t ow = (wd - 1) * stride[1] - 2 * pad[1] + w.dim(3) + output_pad[1];
  if (oh <= 0 || ow <= 0) throw ContractError("conv_transpose2d: empty output");
  // The output image plays the role of a conv input whose column grid is x.
  ConvGeom g{cout, oh, ow, w.dim(2), w.dim(3), stride[0], stride[1], pad[0], pad[1], h, wd};
  const int64_t p = h * wd;
  const int64_t img = cout * oh * ow;
  std::vector<double> out(static_cast<size_t>(n * img), 0.0);
  std::vector<double> col(static_cast<size_t>(g.rows() * p));
  ConstMapMat wm(w.values().data(), cin, g.rows());
  for (int64_t i = 0; i < n; ++i) {
    MapMat(col.data(), g.rows(), p).noalias() =
        wm.transpose() * ConstMapMat(x.values().data() + i * cin * p, cin, p);
    col2im(col.data(), g, out.data() + i * img);
    if (b.defined()) {
      for (int64_t c = 0; c < cout; ++c) {
        double* dst = out.data() + i * img + c * oh * ow;
        for (int64_t k = 0; k < oh * ow; ++k) dst[k] += b.values()[c];
      }
    }
  }
  NodePtr nx = x.node(), nw = w.node(), nb = b.defined() ? b.node() : nullptr;
  return Tensor::make_result(
      {n, cout, oh, ow}, std::move(out), {x, w, b}, [nx, nw, nb, g, n, cin](TensorNode& self) {
        const int64_t p = g.cols();
        const int64_t img = g.channels * g.height * g.width;
        std::vector<double> col(static_cast<size_t>(g.rows() * p));
        ConstMapMat wm(nw->value.data(), cin, g.rows());
        for (int64_t i = 0; i < n; ++i) {
          const double* gi = self.grad.data() + i * img;
          if (nb && nb->requires_grad) {
            const int64_t plane = g.height * g.width;
            for (int64_t c = 0; c < g.channels; ++c) {
              double s = 0.0;
              for (int64_t k = 0; k < plane; ++k) s += gi[c * plane + k];
              nb->grad[c] += s;
            }
          }
          if (!nx->requires_grad && !nw->requires_grad) continue;
          im2col(gi, g, col.data());
          ConstMapMat cm(col.data(), g.rows(), p);
          if (nx->requires_grad) MapMat(nx->grad.data() + i * cin * p, cin, p).noalias() += wm * cm;
          if (nw->requires_grad) {
            MapMat(nw->grad.data(), cin, g.rows()).noalias() +=
                ConstMapMat(nx->value.data() + i * cin * p, cin, p) * cm.transpose();
          }
        }
      });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  const int64_t n = x.dim(0), d = x.dim(1), o = w.dim(0);
  if (w.dim(1) != d) throw ContractError("linear: " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  if (b.defined() && b.numel() != o) throw ContractError("linear: bias size mismatch");
  std::vector<double> out(static_cast<size_t>(n * o));
  MapMat om(out.data(), n, o);
  om.noalias() = ConstMapMat(x.values().data(), n, d) * ConstMapMat(w.values().data(), o, d).transpose();
  if (b.defined()) {
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < o; ++j) om(i, j) += b.values()[j];
  }
  NodePtr nx = x.node(), nw = w.node(), nb = b.defined() ? b.node() : nullptr;
  return Tensor::make_result({n, o}, std::move(out), {x, w, b}, [nx, nw, nb, n, d, o](TensorNode& self) {
    ConstMapMat gm(self.grad.data(), n, o);
    if (nx->requires_grad)
      MapMat(nx->grad.data(), n, d).noalias() += gm * ConstMapMat(nw->value.data(), o, d);
    if (nw->requires_grad)
      MapMat(nw->grad.data(), o, d).noalias() += gm.transpose() * ConstMapMat(nx->value.data(), n, d);
    if (nb && nb->requires_grad) {
      for (int64_t j = 0; j < o; ++j) nb->grad[j] += gm.col(j).sum();
    }
  });
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, bool training, double momentum, double eps) {
  if (x.rank() < 2) throw ContractError("batch_norm: need (N, C, ...) input, got " + shape_str(x.shape()));
  const int64_t n = x.dim(0), c = x.dim(1);
  const int64_t inner = x.numel() / std::max<int64_t>(n * c, 1);
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c || running_var.numel() != c) {
    throw ContractError("batch_norm: parameter size mismatch for " + shape_str(x.shape()));
  }
  const int64_t m = n * inner;
  auto v = x.values();
  auto mean = std::make_shared<std::vector<double>>(c);
  auto inv_std = std::make_shared<std::vector<double>>(c);
  if (training) {
    for (int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int64_t i = 0; i < n; ++i)
        for (int64_t k = 0; k < inner; ++k) s += v[(i * c + ch) * inner + k];
      const double mu = s / static_cast<double>(m);
      double ss = 0.0;
      for (int64_t i = 0; i < n; ++i)
        for (int64_t k = 0; k < inner; ++k) {
          const double d = v[(i * c + ch) * inner + k] - mu;
          ss += d * d;
        }
      const double var = ss / static_cast<double>(m);
      (*mean)[ch] = mu;
      (*inv_std)[ch] = 1.0 / std::sqrt(var + eps);
      auto rm = running_mean.mutable_values();
      auto rv = running_var.mutable_values();
      const double unbiased = m > 1 ? ss / static_cast<double>(m - 1) : var;
      rm[ch] = (1.0 - momentum) * rm[ch] + momentum * mu;
      rv[ch] = (1.0 - momentum) * rv[ch] + momentum * unbiased;
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      (*mean)[ch] = running_mean.values()[ch];
      (*inv_std)[ch] = 1.0 / std::sqrt(running_var.values()[ch] + eps);
    }
  }
  std::vector<double> out(v.size());
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const double a = gamma.values()[ch] * (*inv_std)[ch];
      const double bb = beta.values()[ch] - a * (*mean)[ch];
      for (int64_t k = 0; k < inner; ++k) {
        const int64_t idx = (i * c + ch) * inner + k;
        out[idx] = a * v[idx] + bb;
      }
    }
  NodePtr nx = x.node(), ng = gamma.node(), nbeta = beta.node();
  return Tensor::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [nx, ng, nbeta, mean, inv_std, training, n, c, inner, m](TensorNode& self) {
        for (int64_t ch = 0; ch < c; ++ch) {
          const double mu = (*mean)[ch], is = (*inv_std)[ch];
          double sum_g = 0.0, sum_gx = 0.0;
          for (int64_t i = 0; i < n; ++i)
            for (int64_t k = 0; k < inner; ++k) {
              const int64_t idx = (i * c + ch) * inner + k;
              const double xhat = (nx->value[idx] - mu) * is;
              sum_g += self.grad[idx];
              sum_gx += self.grad[idx] * xhat;
            }
          if (ng->requires_grad) ng->grad[ch] += sum_gx;
          if (nbeta->requires_grad) nbeta->grad[ch] += sum_g;
          if (!nx->requires_grad) continue;
          const double gam = ng->value[ch];
          for (int64_t i = 0; i < n; ++i)
            for (int64_t k = 0; k < inner; ++k) {
              const int64_t idx = (i * c + ch) * inner + k;
              if (training) {
                const double xhat = (nx->value[idx] - mu) * is;
                nx->grad[idx] += gam * is / static_cast<double>(m) *
                                 (static_cast<double>(m) * self.grad[idx] - sum_g - xhat * sum_gx);
              } else {
                nx->grad[idx] += gam * is * self.grad[idx];
              }
            }
        }
      });
}

Tensor max_pool2d(const Tensor& x, Pair kernel, Pair stride) {
  require_rank(x, 4, "max_pool2d input");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = (h - kernel[0]) / stride[0] + 1;
  const int64_t ow = (w - kernel[1]) / stride[1] + 1;
  if (h < kernel[0] || w < kernel[1]) throw ContractError("max_pool2d: kernel larger than input");
  auto v = x.values();
  std::vector<double> out(static_cast<size_t>(n * c * oh * ow));
  auto arg = std::make_shared<std::vector<int64_t>>(out.size());
  for (int64_t plane = 0; plane < n * c; ++plane) {
    const int64_t base = plane * h * w;
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        int64_t best = base + oy * stride[0] * w + ox * stride[1];
        for (int64_t ky = 0; ky < kernel[0]; ++ky)
          for (int64_t kx = 0; kx < kernel[1]; ++kx) {
            const int64_t k = base + (oy * stride[0] + ky) * w + ox * stride[1] + kx;
            if (v[k] > v[best]) best = k;
          }
        const int64_t o = (plane * oh + oy) * ow + ox;
        out[o] = v[best];
        (*arg)[o] = best;
      }
  }
  NodePtr nx = x.node();
  return Tensor::make_result({n, c, oh, ow}, std::move(out), {x}, [nx, arg](TensorNode& self) {
    for (size_t k = 0; k < self.grad.size(); ++k) nx->grad[(*arg)[k]] += self.grad[k];
  });
}

namespace {

// Sparse row-stochastic resampling matrix along one axis.
struct AxisMap {
  std::vector<std::vector<std::pair<int64_t, double>>> taps;  // per output index
};

AxisMap adaptive_avg_map(int64_t in, int64_t out) {
  AxisMap m;
  m.taps.resize(static_cast<size_t>(out));
  for (int64_t i = 0; i < out; ++i) {
    const int64_t start = (i * in) / out;
    const int64_t end = ((i + 1) * in + out - 1) / out;
    const double wgt = 1.0 / static_cast<double>(end - start);
    for (int64_t k = start; k < end; ++k) m.taps[i].emplace_back(k, wgt);
  }
  return m;
}

AxisMap bilinear_map(int64_t in, int64_t out) {
  AxisMap m;
  m.taps.resize(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t i = 0; i < out; ++i) {
    const double src = std::max(scale * (static_cast<double>(i) + 0.5) - 0.5, 0.0);
    const int64_t i0 = std::min(static_cast<int64_t>(src), in - 1);
    const int64_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    if (i1 == i0) {
      m.taps[i].emplace_back(i0, 1.0);
    } else {
      m.taps[i].emplace_back(i0, 1.0 - frac);
      m.taps[i].emplace_back(i1, frac);
    }
  }
  return m;
}

Tensor separable_resample(const Tensor& x, AxisMap rows, AxisMap cols) {
  if (x.rank() < 2) throw ContractError("resample: need at least rank 2");
  const int64_t h = x.dim(-2), w = x.dim(-1);
  const int64_t oh = static_cast<int64_t>(rows.taps.size()), ow = static_cast<int64_t>(cols.taps.size());
  const int64_t planes = x.numel() / std::max<int64_t>(h * w, 1);
  Shape os = x.shape();
  os[os.size() - 2] = oh;
  os[os.size() - 1] = ow;
  auto v = x.values();
  std::vector<double> out(static_cast<size_t>(planes * oh * ow), 0.0);
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (const auto& [iy, wy] : rows.taps[oy])
        for (int64_t ox = 0; ox < ow; ++ox) {
          double acc = 0.0;
          for (const auto& [ix, wx] : cols.taps[ox]) acc += wx * v[(p * h + iy) * w + ix];
          out[(p * oh + oy) * ow + ox] += wy * acc;
        }
  NodePtr nx = x.node();
  auto maps = std::make_shared<std::pair<AxisMap, AxisMap>>(std::move(rows), std::move(cols));
  return Tensor::make_result(os, std::move(out), {x}, [nx, maps, planes, h, w, oh, ow](TensorNode& self) {
    for (int64_t p = 0; p < planes; ++p)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (const auto& [iy, wy] : maps->first.taps[oy])
          for (int64_t ox = 0; ox < ow; ++ox) {
            const double g = wy * self.grad[(p * oh + oy) * ow + ox];
            for (const auto& [ix, wx] : maps->second.taps[ox]) nx->grad[(p * h + iy) * w + ix] += wx * g;
          }
  });
}

}  // namespace

Tensor adaptive_avg_pool2d(const Tensor& x, int64_t out_h, int64_t out_w) {
  if (out_h <= 0 || out_w <= 0) throw ContractError("adaptive_avg_pool2d: output must be positive");
  return separable_resample(x, adaptive_avg_map(x.dim(-2), out_h), adaptive_avg_map(x.dim(-1), out_w));
}

Tensor resize_bilinear(const Tensor& x, int64_t out_h, int64_t out_w) {
  if (out_h <= 0 || out_w <= 0) throw ContractError("resize_bilinear: output must be positive");
  return separable_resample(x, bilinear_map(x.dim(-2), out_h), bilinear_map(x.dim(-1), out_w));
}

}  // namespace s2pec
