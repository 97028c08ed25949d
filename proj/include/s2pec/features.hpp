#pragma once

#include <string>
#include <vector>

#include "s2pec/audio.hpp"
#include "s2pec/nn.hpp"
#include "s2pec/tensor.hpp"

namespace s2pec {

// First-order representation: band-pass filterbank magnitudes, (bins, frames).
struct RawSpectrogram {
  Tensor values;
  int64_t bins() const { return values.dim(0); }
  int64_t frames() const { return values.dim(1); }
};

// Second-order representation: LFCC (+ deltas), (coefficients, frames).
struct PowerSpectrogram {
  Tensor values;
  double frame_ms = 20.0;
  double hop_ms = 10.0;
  int64_t bins() const { return values.dim(0); }
  int64_t frames() const { return values.dim(1); }
};

enum class SincPost {
  kAbsMax,  // |conv| -> max-pool -> divide by the utterance maximum
  kAbs,     // |conv| -> max-pool
};

struct SincFrontendConfig {
  int n_filters = 70;
  int kernel_length = 129;  // odd
  int sample_rate = kSampleRate;
  double min_hz = 30.0;     // lowest cutoff of the mel-spaced initialisation
  double max_hz = 7900.0;   // highest initial cutoff, < sample_rate / 2
  int stride = 4;           // conv evaluated every `stride` samples
  int pool = 40;            // max-pool width over strided positions
  bool learnable = true;
  SincPost post = SincPost::kAbsMax;

  // Throws ConfigError when kernel_length is even, cutoffs are out of order
  // or exceed Nyquist, or sizes are non-positive.
  void validate() const;
  int64_t conv_positions(int64_t samples) const;
  int64_t frames(int64_t samples) const;
};

// Learnable band-pass windowed-sinc filterbank. Cutoffs are parameterised as
// f_low = |low|, f_high = min(f_low + |band|, sample_rate / 2).
class SincFrontend : public nn::Module {
 public:
  explicit SincFrontend(SincFrontendConfig cfg);

  const SincFrontendConfig& config() const { return cfg_; }

  // (n_filters, 1, 1, kernel_length) kernels, differentiable w.r.t. cutoffs.
  Tensor kernels() const;
  // Realised (f_low, f_high) per filter in Hz.
  std::vector<std::pair<double, double>> cutoffs() const;

  // Linear stage: wave (N, 1, 1, L) -> (N, n_filters, 1, positions).
  Tensor conv(const Tensor& wave) const;
  // Full front-end: wave (N, 1, 1, L) -> (N, 1, n_filters, frames).
  Tensor forward(const Tensor& wave) const;

 private:
  SincFrontendConfig cfg_;
  Tensor low_hz_, band_hz_;
};

Tensor waveform_batch(const std::vector<const Waveform*>& waves);

RawSpectrogram sinc_frontend(const Waveform& w, const SincFrontend& frontend);

struct LfccConfig {
  int sample_rate = kSampleRate;
  double frame_ms = 20.0;
  double hop_ms = 10.0;
  int n_fft = 512;
  int n_filters = 20;
  int n_ceps = 20;
  bool deltas = true;     // append delta and delta-delta rows
  int delta_window = 2;

  void validate() const;
  int frame_samples() const;
  int hop_samples() const;
  int dims() const { return deltas ? 3 * n_ceps : n_ceps; }
  // floor((L - frame) / hop) + 1
  int64_t frames(int64_t samples) const;
};

PowerSpectrogram lfcc(const Waveform& w, const LfccConfig& cfg = {});

// Regression deltas over time with edge replication; x is (rows, frames).
std::vector<double> deltas(const std::vector<double>& x, int64_t rows, int64_t frames, int window);

// Linear-spaced triangular filterbank, (n_filters, n_fft/2 + 1) row-major.
std::vector<double> linear_filterbank(int n_filters, int n_fft, int sample_rate);

}  // namespace s2pec
