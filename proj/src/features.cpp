#include "s2pec/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "s2pec/dsp.hpp"
#include "s2pec/error.hpp"

namespace s2pec {

using detail::NodePtr;
using detail::TensorNode;

namespace {

constexpr double kMinBandHz = 1.0;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

// ---------------------------------------------------------------------------
// Sinc front-end
// ---------------------------------------------------------------------------

void SincFrontendConfig::validate() const {
  if (n_filters <= 0) throw ConfigError("sinc: n_filters must be positive");
  if (kernel_length <= 0 || kernel_length % 2 == 0) throw ConfigError("sinc: kernel_length must be odd");
  if (sample_rate <= 0) throw ConfigError("sinc: sample_rate must be positive");
  // max_hz strictly below Nyquist keeps the top filter off the clip point
  if (!(min_hz > 0.0) || !(min_hz < max_hz) || !(max_hz < sample_rate / 2.0)) {
    throw ConfigError("sinc: need 0 < min_hz < max_hz < sample_rate/2");
  }
  if (stride <= 0 || pool <= 0) throw ConfigError("sinc: stride and pool must be positive");
}

int64_t SincFrontendConfig::conv_positions(int64_t samples) const {
  if (samples < kernel_length) return 0;
  return (samples - kernel_length) / stride + 1;
}

int64_t SincFrontendConfig::frames(int64_t samples) const { return conv_positions(samples) / pool; }

SincFrontend::SincFrontend(SincFrontendConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const double mel_lo = hz_to_mel(cfg_.min_hz), mel_hi = hz_to_mel(cfg_.max_hz);
  std::vector<double> edges(static_cast<size_t>(cfg_.n_filters) + 1);
  for (size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / cfg_.n_filters);
  }
  Tensor low({cfg_.n_filters}), band({cfg_.n_filters});
  for (int i = 0; i < cfg_.n_filters; ++i) {
    low.mutable_values()[i] = edges[i];
    band.mutable_values()[i] = std::max(edges[i + 1] - edges[i] - kMinBandHz, 0.0);
  }
  if (cfg_.learnable) {
    low_hz_ = register_parameter("low_hz", low);
    band_hz_ = register_parameter("band_hz", band);
  } else {
    low_hz_ = register_buffer("low_hz", low);
    band_hz_ = register_buffer("band_hz", band);
  }
}

std::vector<std::pair<double, double>> SincFrontend::cutoffs() const {
  const double nyq = cfg_.sample_rate / 2.0;
  std::vector<std::pair<double, double>> out;
  for (int i = 0; i < cfg_.n_filters; ++i) {
    const double f1 = std::min(std::fabs(low_hz_.values()[i]), nyq - kMinBandHz);
    const double f2 = std::min(f1 + kMinBandHz + std::fabs(band_hz_.values()[i]), nyq);
    out.emplace_back(f1, f2);
  }
  return out;
}

Tensor SincFrontend::kernels() const {
  const int nf = cfg_.n_filters, k = cfg_.kernel_length;
  const double nyq = cfg_.sample_rate / 2.0;
  const auto win = dsp::hamming(k);
  const int half = (k - 1) / 2;
  std::vector<double> out(static_cast<size_t>(nf * k));
  // Per-filter partials dh/df1, dh/df2 and the chain factors into low/band.
  auto dh1 = std::make_shared<std::vector<double>>(out.size());
  auto dh2 = std::make_shared<std::vector<double>>(out.size());
  auto chain = std::make_shared<std::vector<std::array<double, 3>>>(static_cast<size_t>(nf));
  for (int f = 0; f < nf; ++f) {
    const double lo = low_hz_.values()[f], bd = band_hz_.values()[f];
    const bool lo_clip = std::fabs(lo) > nyq - kMinBandHz;
    const double f1 = lo_clip ? nyq - kMinBandHz : std::fabs(lo);
    const double raw_f2 = f1 + kMinBandHz + std::fabs(bd);
    const bool hi_clip = raw_f2 > nyq;
    const double f2 = hi_clip ? nyq : raw_f2;
    // df1/dlow, df2/dlow, df2/dband
    const double df1_dlow = lo_clip ? 0.0 : sgn(lo);
    (*chain)[f] = {df1_dlow, hi_clip ? 0.0 : df1_dlow, hi_clip ? 0.0 : sgn(bd)};
    const double b = f2 - f1;
    for (int i = 0; i < k; ++i) {
      const double t = static_cast<double>(i - half) / cfg_.sample_rate;
      double g1, g2, dg1, dg2;
      if (i == half) {
        g1 = 2.0 * f1;
        g2 = 2.0 * f2;
        dg1 = dg2 = 2.0;
      } else {
        const double pt = std::numbers::pi * t;
        g1 = std::sin(2.0 * pt * f1) / pt;
        g2 = std::sin(2.0 * pt * f2) / pt;
        dg1 = 2.0 * std::cos(2.0 * pt * f1);
        dg2 = 2.0 * std::cos(2.0 * pt * f2);
      }
      const double d = g2 - g1;
      const size_t idx = static_cast<size_t>(f * k + i);
      out[idx] = win[i] * d / (2.0 * b);
      (*dh2)[idx] = win[i] * (dg2 / (2.0 * b) - d / (2.0 * b * b));
      (*dh1)[idx] = win[i] * (-dg1 / (2.0 * b) + d / (2.0 * b * b));
    }
  }
  NodePtr nlo = low_hz_.node(), nbd = band_hz_.node();
  return Tensor::make_result({nf, 1, 1, k}, std::move(out), {low_hz_, band_hz_},
                             [nlo, nbd, dh1, dh2, chain, nf, k](TensorNode& self) {
                               for (int f = 0; f < nf; ++f) {
                                 double g1 = 0.0, g2 = 0.0;
                                 for (int i = 0; i < k; ++i) {
                                   const size_t idx = static_cast<size_t>(f * k + i);
                                   g1 += self.grad[idx] * (*dh1)[idx];
                                   g2 += self.grad[idx] * (*dh2)[idx];
                                 }
                                 const auto& c = (*chain)[f];
                                 if (nlo->requires_grad) nlo->grad[f] += g1 * c[0] + g2 * c[1];
                                 if (nbd->requires_grad) nbd->grad[f] += g2 * c[2];
                               }
                             });
}

Tensor SincFrontend::conv(const Tensor& wave) const {
  if (wave.rank() != 4 || wave.dim(1) != 1 || wave.dim(2) != 1) {
    throw ContractError("sinc front-end expects (N, 1, 1, L), got " + shape_str(wave.shape()));
  }
  if (wave.dim(3) < cfg_.kernel_length) {
    throw InputError("waveform shorter than the sinc kernel (" + std::to_string(cfg_.kernel_length) + ")");
  }
  return conv2d(wave, kernels(), Tensor(), {1, cfg_.stride}, {0, 0});
}

Tensor SincFrontend::forward(const Tensor& wave) const {
  if (cfg_.frames(wave.dim(-1)) < 1) throw InputError("waveform too short for one sinc frame");
  Tensor y = conv(wave);
  const int64_t n = y.dim(0), positions = y.dim(3);
  y = reshape(y, {n, 1, cfg_.n_filters, positions});
  y = max_pool2d(abs(y), {1, cfg_.pool}, {1, cfg_.pool});
  if (cfg_.post == SincPost::kAbsMax) {
    Tensor peak = reshape(max(reshape(y, {n, -1}), 1), {n, 1, 1, 1});
    y = y / (peak + 1e-8);
  }
  return y;
}

Tensor waveform_batch(const std::vector<const Waveform*>& waves) {
  if (waves.empty()) throw ContractError("empty waveform batch");
  const int64_t len = waves[0]->length();
  std::vector<double> v;
  v.reserve(static_cast<size_t>(len) * waves.size());
  for (const auto* w : waves) {
    if (w->length() != len) throw ContractError("waveform batch with unequal lengths");
    v.insert(v.end(), w->samples.begin(), w->samples.end());
  }
  return Tensor({static_cast<int64_t>(waves.size()), 1, 1, len}, std::move(v));
}

RawSpectrogram sinc_frontend(const Waveform& w, const SincFrontend& frontend) {
  NoGradGuard guard;
  Tensor y = frontend.forward(waveform_batch({&w}));
  return RawSpectrogram{reshape(y, {y.dim(2), y.dim(3)})};
}

// ---------------------------------------------------------------------------
// LFCC
// ---------------------------------------------------------------------------

void LfccConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("lfcc: sample_rate must be positive");
  if (frame_samples() <= 0 || hop_samples() <= 0) throw ConfigError("lfcc: frame and hop must be positive");
  if (n_fft < frame_samples() || n_fft % 2 != 0) throw ConfigError("lfcc: n_fft must be even and >= frame length");
  if (n_filters <= 0 || n_ceps <= 0 || n_ceps > n_filters) throw ConfigError("lfcc: need 0 < n_ceps <= n_filters");
  if (delta_window <= 0) throw ConfigError("lfcc: delta_window must be positive");
}

int LfccConfig::frame_samples() const { return static_cast<int>(std::lround(sample_rate * frame_ms / 1000.0)); }
int LfccConfig::hop_samples() const { return static_cast<int>(std::lround(sample_rate * hop_ms / 1000.0)); }

int64_t LfccConfig::frames(int64_t samples) const {
  if (samples < frame_samples()) return 0;
  return (samples - frame_samples()) / hop_samples() + 1;
}

std::vector<double> linear_filterbank(int n_filters, int n_fft, int sample_rate) {
  const int bins = n_fft / 2 + 1;
  const double nyq = sample_rate / 2.0;
  std::vector<double> fb(static_cast<size_t>(n_filters * bins), 0.0);
  for (int m = 0; m < n_filters; ++m) {
    const double lo = nyq * m / (n_filters + 1);
    const double ce = nyq * (m + 1) / (n_filters + 1);
    const double hi = nyq * (m + 2) / (n_filters + 1);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / n_fft;
      double wgt = 0.0;
      if (f > lo && f <= ce) wgt = (f - lo) / (ce - lo);
      else if (f > ce && f < hi) wgt = (hi - f) / (hi - ce);
      fb[static_cast<size_t>(m * bins + k)] = wgt;
    }
  }
  return fb;
}

std::vector<double> deltas(const std::vector<double>& x, int64_t rows, int64_t frames, int window) {
  std::vector<double> d(x.size(), 0.0);
  double denom = 0.0;
  for (int n = 1; n <= window; ++n) denom += 2.0 * n * n;
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t t = 0; t < frames; ++t) {
      double acc = 0.0;
      for (int n = 1; n <= window; ++n) {
        const int64_t ahead = std::min(t + n, frames - 1);
        const int64_t behind = std::max<int64_t>(t - n, 0);
        acc += n * (x[r * frames + ahead] - x[r * frames + behind]);
      }
      d[r * frames + t] = acc / denom;
    }
  }
  return d;
}

PowerSpectrogram lfcc(const Waveform& w, const LfccConfig& cfg) {
  cfg.validate();
  const int frame = cfg.frame_samples(), hop = cfg.hop_samples();
  const int64_t n_frames = cfg.frames(w.length());
  if (n_frames < 1) throw InputError("waveform shorter than one LFCC frame");
  const int bins = cfg.n_fft / 2 + 1;
  const auto window = dsp::hamming(frame);
  const auto fb = linear_filterbank(cfg.n_filters, cfg.n_fft, cfg.sample_rate);
  const int m = cfg.n_filters, nc = cfg.n_ceps;

  // DCT-II, orthonormal.
  std::vector<double> dct(static_cast<size_t>(nc * m));
  for (int k = 0; k < nc; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / m) : std::sqrt(2.0 / m);
    for (int j = 0; j < m; ++j) dct[k * m + j] = scale * std::cos(std::numbers::pi * k * (j + 0.5) / m);
  }

  std::vector<double> ceps(static_cast<size_t>(nc * n_frames));
  std::vector<double> buf(static_cast<size_t>(frame));
  std::vector<double> logfb(static_cast<size_t>(m));
  for (int64_t t = 0; t < n_frames; ++t) {
    for (int i = 0; i < frame; ++i) buf[i] = w.samples[static_cast<size_t>(t * hop + i)] * window[i];
    const auto spec = dsp::rfft(buf, cfg.n_fft);
    for (int j = 0; j < m; ++j) {
      double e = 0.0;
      for (int k = 0; k < bins; ++k) e += fb[j * bins + k] * std::norm(spec[k]);
      logfb[j] = std::log(std::max(e, 1e-10));
    }
    for (int k = 0; k < nc; ++k) {
      double acc = 0.0;
      for (int j = 0; j < m; ++j) acc += dct[k * m + j] * logfb[j];
      ceps[k * n_frames + t] = acc;
    }
  }

  std::vector<double> out = ceps;
  if (cfg.deltas) {
    const auto d1 = deltas(ceps, nc, n_frames, cfg.delta_window);
    const auto d2 = deltas(d1, nc, n_frames, cfg.delta_window);
    out.insert(out.end(), d1.begin(), d1.end());
    out.insert(out.end(), d2.begin(), d2.end());
  }
  PowerSpectrogram ps;
  ps.values = Tensor({cfg.dims(), n_frames}, std::move(out));
  ps.frame_ms = cfg.frame_ms;
  ps.hop_ms = cfg.hop_ms;
  return ps;
}

}  // namespace s2pec
