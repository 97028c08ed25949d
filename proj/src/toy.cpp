#include "s2pec/toy.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "s2pec/audio.hpp"
#include "s2pec/dsp.hpp"
#include "s2pec/error.hpp"

namespace s2pec {

namespace fs = std::filesystem;

void ToyConfig::validate() const {
  for (const ToySplit* s : {&train, &dev, &eval}) {
    if (s->bonafide < 0 || s->spoof_per_attack < 0) throw ConfigError("toy: counts must be >= 0");
  }
  if (length < 1024) throw ConfigError("toy: length must be >= 1024 samples");
  if (sample_rate != kSampleRate) throw ConfigError("toy: sample_rate must be 16000");
  for (const auto& a : attacks) {
    if (std::find(kToyAttacks.begin(), kToyAttacks.end(), a) == kToyAttacks.end()) {
      throw ConfigError("toy: unknown attack '" + a + "' (T01, T02, T03)");
    }
  }
}

const ToySplit& ToyConfig::split(Partition p) const {
  switch (p) {
    case Partition::kTrain: return train;
    case Partition::kDev: return dev;
    case Partition::kEval: return eval;
  }
  return train;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void normalise_rms(std::vector<double>& x, double target) {
  double e = 0.0;
  for (double v : x) e += v * v;
  const double rms = std::sqrt(e / static_cast<double>(x.size()));
  if (rms <= 0.0) return;
  const double g = target / rms;
  for (double& v : x) v = std::clamp(v * g, -0.999, 0.999);
}

// Hann-windowed STFT, per-frame spectral edit and weighted overlap-add.
template <class Edit>
std::vector<double> stft_edit(const std::vector<double>& x, int sample_rate, Edit edit) {
  constexpr int n = 512, hop = 128;
  const auto win = dsp::hann(n);
  const int64_t len = static_cast<int64_t>(x.size());
  std::vector<double> out(x.size(), 0.0), norm(x.size(), 0.0), frame(n);
  const double bin_hz = static_cast<double>(sample_rate) / n;
  for (int64_t start = -n; start < len; start += hop) {
    for (int i = 0; i < n; ++i) {
      const int64_t j = start + i;
      frame[i] = (j >= 0 && j < len) ? x[j] * win[i] : 0.0;
    }
    auto spec = dsp::rfft(frame, n);
    edit(spec, bin_hz);
    const auto y = dsp::irfft(spec, n);
    for (int i = 0; i < n; ++i) {
      const int64_t j = start + i;
      if (j < 0 || j >= len) continue;
      out[j] += y[i] * win[i];
      norm[j] += win[i] * win[i];
    }
  }
  for (size_t i = 0; i < out.size(); ++i) out[i] = norm[i] > 1e-8 ? out[i] / norm[i] : 0.0;
  return out;
}

double level(Rng& rng) { return 0.1 * rng.uniform(0.6, 1.4); }

}  // namespace

std::vector<double> toy_bonafide(Rng& rng, int64_t length, int sample_rate) {
  const double sr = static_cast<double>(sample_rate);
  const double f0 = rng.uniform(100.0, 240.0);
  const double vib_rate = rng.uniform(4.0, 6.5), vib_depth = rng.uniform(0.01, 0.03);
  const double glide = rng.uniform(-0.15, 0.15);  // relative f0 drift over the utterance
  const double am_rate = rng.uniform(2.5, 5.0), am_phase = rng.uniform(0.0, kTwoPi);
  const double formants[3] = {rng.uniform(350.0, 900.0), rng.uniform(1000.0, 2200.0), rng.uniform(2300.0, 3300.0)};
  const double widths[3] = {rng.uniform(90.0, 160.0), rng.uniform(120.0, 220.0), rng.uniform(180.0, 300.0)};

  const int n_harm = static_cast<int>(std::floor(7600.0 / (f0 * (1.0 + std::abs(glide) + vib_depth))));
  std::vector<std::complex<double>> coef(n_harm);
  for (int k = 1; k <= n_harm; ++k) {
    const double f = k * f0;
    double env = 0.08;
    for (int i = 0; i < 3; ++i) env += std::exp(-0.5 * std::pow((f - formants[i]) / widths[i], 2.0)) / (1.0 + i);
    const double a = env / std::pow(static_cast<double>(k), 0.7);
    coef[k - 1] = std::polar(a, rng.uniform(0.0, kTwoPi));
  }

  std::vector<double> x(static_cast<size_t>(length));
  double theta = 0.0;
  for (int64_t t = 0; t < length; ++t) {
    const double ts = static_cast<double>(t) / sr;
    const double prog = static_cast<double>(t) / static_cast<double>(length);
    const double f = f0 * (1.0 + glide * prog) * (1.0 + vib_depth * std::sin(kTwoPi * vib_rate * ts));
    theta += kTwoPi * f / sr;
    if (theta > kTwoPi) theta -= kTwoPi;
    const std::complex<double> e1 = std::polar(1.0, theta);
    std::complex<double> ek = e1;
    double s = 0.0;
    for (int k = 0; k < n_harm; ++k) {
      s += (coef[k] * ek).real();
      ek *= e1;
    }
    const double am = 0.25 + 0.75 * std::sqrt(std::max(0.0, std::sin(kTwoPi * am_rate * ts + am_phase)));
    x[t] = s * am + 0.004 * rng.normal();
  }
  normalise_rms(x, level(rng));
  return x;
}

std::vector<double> toy_attack(const std::string& attack, Rng& rng, int64_t length, int sample_rate) {
  std::vector<double> base = toy_bonafide(rng, length, sample_rate);
  std::vector<double> y;
  if (attack == "T01") {
    const double gain = rng.uniform(0.2, 0.35);
    y = stft_edit(base, sample_rate, [&](std::vector<std::complex<double>>& spec, double bin_hz) {
      for (size_t b = 0; b < spec.size(); ++b) {
        if (b * bin_hz >= 2000.0) break;
        spec[b] = std::polar(std::abs(spec[b]) * gain, rng.uniform(0.0, kTwoPi));
      }
    });
  } else if (attack == "T02") {
    y = base;
    const double sr = static_cast<double>(sample_rate);
    const int n_tones = 2 + static_cast<int>(rng.below(2));
    for (int i = 0; i < n_tones; ++i) {
      const double f = rng.uniform(6000.0, 7500.0), ph = rng.uniform(0.0, kTwoPi);
      const double amp = rng.uniform(0.01, 0.02), gate_rate = rng.uniform(3.0, 8.0);
      for (int64_t t = 0; t < length; ++t) {
        const double ts = static_cast<double>(t) / sr;
        const double gate = 0.5 + 0.5 * std::sin(kTwoPi * gate_rate * ts);
        y[t] += amp * gate * std::sin(kTwoPi * f * ts + ph);
      }
    }
    const double noise = rng.uniform(0.6, 1.0);
    y = stft_edit(y, sample_rate, [&](std::vector<std::complex<double>>& spec, double bin_hz) {
      for (size_t b = 0; b < spec.size(); ++b) {
        const double f = b * bin_hz;
        if (f >= 6000.0 && f <= 7500.0) spec[b] += std::complex<double>(rng.normal(), rng.normal()) * noise;
      }
    });
  } else if (attack == "T03") {
    y = stft_edit(base, sample_rate, [](std::vector<std::complex<double>>& spec, double bin_hz) {
      for (size_t b = 0; b < spec.size(); ++b) {
        if (b * bin_hz > 4000.0) spec[b] = 0.0;
      }
    });
  } else {
    throw ConfigError("toy: unknown attack '" + attack + "'");
  }
  normalise_rms(y, level(rng));
  return y;
}

fs::path toy_protocol_path(const fs::path& out_dir, Partition p) {
  return out_dir / "protocols" / ("toy." + to_string(p) + ".txt");
}

std::map<Partition, Manifest> synth_toy_dataset(const ToyConfig& cfg, uint64_t seed, const fs::path& out_dir) {
  cfg.validate();
  std::map<Partition, Manifest> out;
  const char prefix[3] = {'T', 'D', 'E'};
  for (int pi = 0; pi < 3; ++pi) {
    const auto part = static_cast<Partition>(pi);
    const ToySplit& split = cfg.split(part);
    Manifest m;
    m.partition = part;
    m.audio_root = out_dir / to_string(part) / "audio";
    int64_t idx = 0;
    auto emit = [&](const std::string& attack) {
      const uint64_t salt = (static_cast<uint64_t>(pi + 1) << 40) ^ static_cast<uint64_t>(idx);
      Rng rng = Rng::derived(seed, salt);
      char name[32];
      std::snprintf(name, sizeof(name), "TOY_%c_%05lld", prefix[pi], static_cast<long long>(idx));
      char spk[16];
      std::snprintf(spk, sizeof(spk), "TSPK%02llu", static_cast<unsigned long long>(rng.below(20)));
      const auto x = attack == "-" ? toy_bonafide(rng, cfg.length, cfg.sample_rate)
                                   : toy_attack(attack, rng, cfg.length, cfg.sample_rate);
      write_wav_pcm16(m.audio_root / (std::string(name) + ".wav"), x, cfg.sample_rate);
      m.entries.push_back({spk, name, "-", attack, attack == "-" ? Label::kBonafide : Label::kSpoof});
      ++idx;
    };
    for (int64_t i = 0; i < split.bonafide; ++i) emit("-");
    for (const auto& a : cfg.attacks) {
      for (int64_t i = 0; i < split.spoof_per_attack; ++i) emit(a);
    }
    if (!m.entries.empty()) write_text_atomic(toy_protocol_path(out_dir, part), serialize_protocol(m.entries));
    out[part] = std::move(m);
  }
  return out;
}

}  // namespace s2pec
