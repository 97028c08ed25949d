#include "s2pec/losses.hpp"

#include <algorithm>
#include <cmath>

#include "s2pec/error.hpp"

namespace s2pec {

ReconNorm recon_norm_from_string(const std::string& s) {
  if (s == "l1") return ReconNorm::kL1;
  if (s == "l2" || s == "mse") return ReconNorm::kL2;
  throw ConfigError("unknown reconstruction norm '" + s + "' (l1, l2)");
}

std::string to_string(ReconNorm n) { return n == ReconNorm::kL1 ? "l1" : "l2"; }

ClassWeights inverse_frequency_weights(double n_bonafide, double n_spoof) {
  if (!(n_bonafide > 0.0) || !(n_spoof > 0.0)) throw ConfigError("class counts must be positive");
  const double a = 1.0 / n_bonafide, b = 1.0 / n_spoof;
  return {a / (a + b), b / (a + b)};
}

double recon_loss(std::span<const double> x_hat, std::span<const double> x, ReconNorm norm) {
  if (x_hat.size() != x.size()) throw ContractError("recon_loss: size mismatch");
  if (x.empty()) throw ContractError("recon_loss: empty input");
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x_hat[i] - x[i];
    acc += norm == ReconNorm::kL1 ? std::abs(d) : d * d;
  }
  return acc / static_cast<double>(x.size());
}

Tensor recon_loss(const Tensor& x_hat, const Tensor& x, ReconNorm norm) {
  if (x_hat.shape() != x.shape()) {
    throw ContractError("recon_loss: " + shape_str(x_hat.shape()) + " vs " + shape_str(x.shape()));
  }
  Tensor d = x_hat - x;
  return mean(norm == ReconNorm::kL1 ? abs(d) : square(d));
}

namespace {

void check_labels(size_t n, std::span<const double> y) {
  if (n != y.size()) throw ContractError("wbce: prediction/label count mismatch");
  if (n == 0) throw ContractError("wbce: empty batch");
}

}  // namespace

double wbce(std::span<const double> y_hat, std::span<const double> y, double w_pos, double w_neg) {
  check_labels(y_hat.size(), y);
  double acc = 0.0;
  for (size_t i = 0; i < y.size(); ++i) {
    const double p = std::clamp(y_hat[i], kWbceEps, 1.0 - kWbceEps);
    acc -= w_pos * y[i] * std::log(p) + w_neg * (1.0 - y[i]) * std::log(1.0 - p);
  }
  return acc / static_cast<double>(y.size());
}

Tensor wbce(const Tensor& y_hat, std::span<const double> y, double w_pos, double w_neg) {
  check_labels(static_cast<size_t>(y_hat.numel()), y);
  const auto p = y_hat.values();
  const size_t n = y.size();
  std::vector<double> yv(y.begin(), y.end());
  const double loss = wbce(p, y, w_pos, w_neg);
  return Tensor::make_result({}, {loss}, {y_hat}, [yv, w_pos, w_neg, n](detail::TensorNode& self) {
    auto& parent = *self.parents[0];
    if (!parent.requires_grad) return;
    parent.ensure_grad();
    const double g = self.grad[0] / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) {
      const double raw = parent.value[i];
      // Clipping is flat outside [eps, 1 - eps].
      if (raw < kWbceEps || raw > 1.0 - kWbceEps) continue;
      parent.grad[i] += g * (-w_pos * yv[i] / raw + w_neg * (1.0 - yv[i]) / (1.0 - raw));
    }
  });
}

Tensor wbce_logits(const Tensor& logits, std::span<const double> y, double w_pos, double w_neg) {
  check_labels(static_cast<size_t>(logits.numel()), y);
  const size_t n = y.size();
  const auto z = logits.values();
  std::vector<double> p(n), yv(y.begin(), y.end());
  for (size_t i = 0; i < n; ++i) p[i] = 1.0 / (1.0 + std::exp(-z[i]));
  const double loss = wbce(p, y, w_pos, w_neg);
  return Tensor::make_result({}, {loss}, {logits}, [p, yv, w_pos, w_neg, n](detail::TensorNode& self) {
    auto& parent = *self.parents[0];
    if (!parent.requires_grad) return;
    parent.ensure_grad();
    const double g = self.grad[0] / static_cast<double>(n);
    for (size_t i = 0; i < n; ++i) {
      if (p[i] < kWbceEps || p[i] > 1.0 - kWbceEps) continue;
      // d/dz of -[a y log p + b (1-y) log(1-p)] with dp/dz = p (1 - p)
      parent.grad[i] += g * (-w_pos * yv[i] * (1.0 - p[i]) + w_neg * (1.0 - yv[i]) * p[i]);
    }
  });
}

LossBreakdown total_loss(double l1, double l2, double lcls, double alpha) {
  if (!std::isfinite(l1) || !std::isfinite(l2) || !std::isfinite(lcls) || !std::isfinite(alpha)) {
    throw TrainingAbort("non-finite loss component (l_recon_raw=" + std::to_string(l1) +
                        ", l_recon_power=" + std::to_string(l2) + ", l_cls=" + std::to_string(lcls) +
                        ", alpha=" + std::to_string(alpha) + ")");
  }
  if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
  LossBreakdown b;
  b.l_recon_raw = l1;
  b.l_recon_power = l2;
  b.l_cls = lcls;
  b.alpha = alpha;
  b.total = alpha * (l1 + l2) + lcls;
  return b;
}

}  // namespace s2pec
