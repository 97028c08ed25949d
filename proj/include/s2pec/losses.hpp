#pragma once

#include <span>
#include <string>

#include "s2pec/tensor.hpp"

namespace s2pec {

enum class ReconNorm { kL1, kL2 };

ReconNorm recon_norm_from_string(const std::string& s);
std::string to_string(ReconNorm n);

inline constexpr double kWbceEps = 1e-7;

// Bona fide / spoof trial counts of the ASVspoof2019 LA training partition.
inline constexpr double kTrainBonafide = 2580.0;
inline constexpr double kTrainSpoof = 22800.0;

struct ClassWeights {
  double bonafide;  // weight on y == 1 terms
  double spoof;     // weight on y == 0 terms
};

// Inverse class frequency normalised to sum to one.
ClassWeights inverse_frequency_weights(double n_bonafide, double n_spoof);
inline ClassWeights default_class_weights() { return inverse_frequency_weights(kTrainBonafide, kTrainSpoof); }

struct LossBreakdown {
  double l_recon_raw = 0.0;
  double l_recon_power = 0.0;
  double l_cls = 0.0;
  double alpha = 0.1;
  double total = 0.0;
};

// Mean |x_hat - x| (kL1) or mean (x_hat - x)^2 (kL2).
double recon_loss(std::span<const double> x_hat, std::span<const double> x, ReconNorm norm = ReconNorm::kL1);
Tensor recon_loss(const Tensor& x_hat, const Tensor& x, ReconNorm norm = ReconNorm::kL1);

// Batch mean of -[w_pos y log p + w_neg (1 - y) log(1 - p)], p clipped to
// [eps, 1 - eps].
double wbce(std::span<const double> y_hat, std::span<const double> y, double w_pos, double w_neg);
// Same loss from logits, p = sigmoid(logit); differentiable w.r.t. logits.
Tensor wbce_logits(const Tensor& logits, std::span<const double> y, double w_pos, double w_neg);
// Differentiable w.r.t. probabilities.
Tensor wbce(const Tensor& y_hat, std::span<const double> y, double w_pos, double w_neg);

// total = alpha (l1 + l2) + lcls. Throws TrainingAbort on non-finite inputs
// and ConfigError on negative alpha.
LossBreakdown total_loss(double l1, double l2, double lcls, double alpha);

}  // namespace s2pec
