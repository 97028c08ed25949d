#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "s2pec/audio.hpp"
#include "s2pec/error.hpp"
#include "s2pec/features.hpp"
#include "s2pec/gradcam.hpp"
#include "support.hpp"

using namespace s2pec;
using s2pec::test::TempDir;

#ifndef S2PEC_TEST_DATA
#error "S2PEC_TEST_DATA must point at tests/data"
#endif

namespace {

const std::filesystem::path kData = S2PEC_TEST_DATA;

std::vector<double> ramp(int64_t n) {
  std::vector<double> x(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) x[static_cast<size_t>(i)] = std::sin(0.001 * static_cast<double>(i * i % 9973));
  return x;
}

std::vector<double> sine(double hz, int64_t n, double amp = 0.5) {
  std::vector<double> x(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) x[static_cast<size_t>(i)] = amp * std::sin(2.0 * std::numbers::pi * hz * i / kSampleRate);
  return x;
}

// Static LFCC rows via a direct DFT, written from the textbook recipe:
// Hamming window, |DFT|^2 on 512 points, 20 triangular filters with edges
// evenly spaced on [0, Nyquist], natural log (floor 1e-10), orthonormal
// DCT-II.
std::vector<std::vector<double>> reference_lfcc(const std::vector<double>& x) {
  const int frame = 320, hop = 160, nfft = 512, nf = 20, nc = 20;
  const int64_t frames = (static_cast<int64_t>(x.size()) - frame) / hop + 1;
  std::vector<std::vector<double>> out(nc, std::vector<double>(static_cast<size_t>(frames)));
  for (int64_t t = 0; t < frames; ++t) {
    std::vector<double> power(nfft / 2 + 1);
    for (int k = 0; k <= nfft / 2; ++k) {
      std::complex<double> acc = 0.0;
      for (int i = 0; i < frame; ++i) {
        const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (frame - 1));
        acc += w * x[static_cast<size_t>(t * hop + i)] * std::polar(1.0, -2.0 * std::numbers::pi * k * i / nfft);
      }
      power[k] = std::norm(acc);
    }
    std::vector<double> logfb(nf);
    for (int m = 0; m < nf; ++m) {
      const double step = 8000.0 / (nf + 1);
      const double lo = step * m, ce = step * (m + 1), hi = step * (m + 2);
      double e = 0.0;
      for (int k = 0; k <= nfft / 2; ++k) {
        const double f = 16000.0 * k / nfft;
        if (f > lo && f <= ce) e += power[k] * (f - lo) / (ce - lo);
        if (f > ce && f < hi) e += power[k] * (hi - f) / (hi - ce);
      }
      logfb[m] = std::log(std::max(e, 1e-10));
    }
    for (int c = 0; c < nc; ++c) {
      double acc = 0.0;
      for (int m = 0; m < nf; ++m) acc += logfb[m] * std::cos(std::numbers::pi * c * (m + 0.5) / nf);
      out[c][static_cast<size_t>(t)] = acc * std::sqrt((c == 0 ? 1.0 : 2.0) / nf);
    }
  }
  return out;
}

// |H(f)| of a real FIR kernel by direct evaluation.
double response(std::span<const double> h, double hz) {
  std::complex<double> acc = 0.0;
  for (size_t i = 0; i < h.size(); ++i) acc += h[i] * std::polar(1.0, -2.0 * std::numbers::pi * hz * i / kSampleRate);
  return std::abs(acc);
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("fit_length identity, tiling and cropping") {
    const auto x = ramp(64600);
    CHECK(fit_length(x, 64600, CropMode::kHead, nullptr) == x);

    const auto s = ramp(30000);
    const auto tiled = fit_length(s, 64600, CropMode::kHead, nullptr);
    REQUIRE(tiled.size() == 64600);
    for (size_t i = 0; i < 30000; ++i) {
      CHECK(tiled[i] == s[i]);
      CHECK(tiled[30000 + i] == s[i]);
    }
    for (size_t i = 60000; i < 64600; ++i) CHECK(tiled[i] == s[i - 60000]);

    const auto l = ramp(100000);
    const auto head = fit_length(l, 64600, CropMode::kHead, nullptr);
    CHECK(std::equal(head.begin(), head.end(), l.begin()));

    Rng rng(3);
    const auto crop = fit_length(l, 64600, CropMode::kRandom, &rng);
    const auto it = std::search(l.begin(), l.end(), crop.begin(), crop.end());
    CHECK(it != l.end());

    CHECK_THROWS_AS(fit_length(std::vector<double>{}, 10, CropMode::kHead, nullptr), InputError);
  }

  TEST_CASE("wav round trip and idempotent load at target length") {
    TempDir dir("wav");
    auto x = ramp(64600);
    for (double& v : x) v = std::round(v * 32767.0) / 32768.0;
    write_wav_pcm16(dir.path() / "a.wav", x, kSampleRate);
    const Waveform w = load_waveform(dir.path() / "a.wav", 64600);
    REQUIRE(w.length() == 64600);
    for (size_t i = 0; i < x.size(); ++i) CHECK(w.samples[i] == x[i]);
    CHECK(load_audio(dir.path() / "a.wav").samples == w.samples);
  }

  TEST_CASE("flac fixtures decode bit-exactly") {
    for (const char* name : {"mono16", "stereo24"}) {
      CAPTURE(name);
      const DecodedAudio a = decode_audio_file(kData / (std::string(name) + ".flac"));
      std::vector<int64_t> shape;
      const auto ref = decode_npy(read_file_bytes(kData / (std::string(name) + ".npy")), &shape);
      REQUIRE(shape.size() == 2);
      REQUIRE(static_cast<int64_t>(a.channels.size()) == shape[0]);
      for (size_t c = 0; c < a.channels.size(); ++c) {
        REQUIRE(static_cast<int64_t>(a.channels[c].size()) == shape[1]);
        for (int64_t i = 0; i < shape[1]; ++i)
          CHECK(a.channels[c][static_cast<size_t>(i)] == ref[static_cast<size_t>(static_cast<int64_t>(c) * shape[1] + i)]);
      }
    }
    const DecodedAudio st = decode_audio_file(kData / "stereo24.flac");
    CHECK(st.sample_rate == 22050);
    CHECK(st.bits_per_sample == 24);
    // downmix + resample to 16 kHz
    CHECK(load_audio(kData / "stereo24.flac").length() == (5000 * 16000 + 11025) / 22050);
  }

  TEST_CASE("undecodable and empty audio are input errors") {
    TempDir dir("bad");
    write_text_atomic(dir.path() / "junk.wav", "definitely not audio");
    CHECK_THROWS_AS(load_waveform(dir.path() / "junk.wav"), InputError);
    write_wav_pcm16(dir.path() / "empty.wav", std::vector<double>{}, kSampleRate);
    CHECK_THROWS_AS(load_waveform(dir.path() / "empty.wav"), InputError);
    CHECK_THROWS_AS(load_waveform(dir.path() / "absent.wav"), InputError);
  }

  TEST_CASE("resampling preserves a low tone") {
    std::vector<double> x(22050);
    for (size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2.0 * std::numbers::pi * 1000.0 * i / 22050.0);
    const auto y = resample(x, 22050, 16000);
    REQUIRE(y.size() == 16000);
    double err = 0.0;
    for (size_t i = 200; i < 15800; ++i) err = std::max(err, std::abs(y[i] - std::sin(2.0 * std::numbers::pi * 1000.0 * i / 16000.0)));
    CHECK(err < 1e-2);
  }

  TEST_CASE("sinc front-end shape under defaults") {
    SincFrontendConfig cfg;
    // (64600 - 129) / 4 + 1 = 16118 positions, / 40 = 402 frames
    CHECK(cfg.conv_positions(64600) == 16118);
    CHECK(cfg.frames(64600) == 402);
    SincFrontend fe(cfg);
    Waveform w;
    w.samples = ramp(64600);
    NoGradGuard ng;
    const RawSpectrogram r = sinc_frontend(w, fe);
    CHECK(r.bins() == 70);
    CHECK(r.frames() == 402);
    for (double v : r.values.values()) CHECK(std::isfinite(v));
  }

  TEST_CASE("sinc front-end zero input and linearity") {
    SincFrontendConfig cfg;
    cfg.n_filters = 12;
    SincFrontend fe(cfg);
    NoGradGuard ng;
    Waveform z;
    z.samples.assign(4000, 0.0);
    const Tensor zo = sinc_frontend(z, fe).values;
    for (double v : zo.values()) CHECK(v == 0.0);

    const auto x = ramp(4000);
    Tensor a({1, 1, 1, 4000}, x);
    for (double alpha : {-2.5, 0.3, 7.0}) {
      std::vector<double> sx(x);
      for (double& v : sx) v *= alpha;
      const Tensor ya = fe.conv(a), yb = fe.conv(Tensor({1, 1, 1, 4000}, sx));
      for (int64_t i = 0; i < ya.numel(); ++i) {
        const double want = alpha * ya.values()[static_cast<size_t>(i)];
        CHECK(std::abs(yb.values()[static_cast<size_t>(i)] - want) <= 1e-12 * (1.0 + std::abs(want)));
      }
    }
  }

  TEST_CASE("sinc filter energy follows the realised pass-bands") {
    SincFrontendConfig cfg;
    cfg.stride = 1;
    SincFrontend fe(cfg);
    NoGradGuard ng;
    const Tensor k = fe.kernels();
    const int nf = cfg.n_filters, len = cfg.kernel_length;
    std::vector<double> at1k(nf), peak(nf);
    for (int f = 0; f < nf; ++f) {
      const std::span<const double> h = k.values().subspan(static_cast<size_t>(f * len), static_cast<size_t>(len));
      at1k[f] = response(h, 1000.0);
      for (double hz = 0.0; hz <= 8000.0; hz += 5.0) peak[f] = std::max(peak[f], response(h, hz));
    }
    const Tensor y = fe.conv(Tensor({1, 1, 1, 8000}, sine(1000.0, 8000)));
    const int64_t pos = y.dim(3);
    std::vector<double> energy(nf, 0.0);
    for (int f = 0; f < nf; ++f)
      for (int64_t t = 0; t < pos; ++t) energy[f] += std::pow(y.values()[static_cast<size_t>(f * pos + t)], 2);

    int pairs = 0;
    for (int in = 0; in < nf; ++in) {
      if (at1k[in] < 0.7 * peak[in]) continue;
      for (int out = 0; out < nf; ++out) {
        if (at1k[out] > 0.05 * peak[out]) continue;
        CAPTURE(in);
        CAPTURE(out);
        CHECK(energy[in] >= 10.0 * energy[out]);
        ++pairs;
      }
    }
    CHECK(pairs > 0);
  }

  TEST_CASE("sinc cutoff gradients match finite differences") {
    SincFrontendConfig cfg;
    cfg.n_filters = 4;
    cfg.kernel_length = 33;
    SincFrontend fe(cfg);
    Rng rng(5);
    const Tensor wave = s2pec::test::random_tensor(rng, {1, 1, 1, 400});
    const Tensor probe = s2pec::test::random_tensor(rng, fe.conv(wave).shape());
    for (auto& [name, p] : fe.named_parameters()) {
      CAPTURE(name);
      // cutoffs are in Hz, so a proportionally larger step
      const auto g = s2pec::test::grad_check(p, [&] { return sum(mul(fe.conv(wave), probe)); }, 1e-4);
      CHECK(g.error < 1e-6);
    }
  }

  TEST_CASE("invalid sinc configuration is rejected") {
    SincFrontendConfig cfg;
    cfg.kernel_length = 128;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.min_hz = 9000.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.max_hz = 9000.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.max_hz = 8000.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("lfcc frame count over random lengths") {
    LfccConfig cfg;
    Rng rng(17);
    for (int i = 0; i < 1000; ++i) {
      const int64_t n = 320 + static_cast<int64_t>(rng.below(70000));
      CHECK(cfg.frames(n) == (n - 320) / 160 + 1);
    }
    CHECK(cfg.frames(64600) == 402);
    // full extraction on a subset
    for (int i = 0; i < 20; ++i) {
      const int64_t n = 320 + static_cast<int64_t>(rng.below(8000));
      Waveform w;
      w.samples = ramp(n);
      const PowerSpectrogram p = lfcc(w);
      CHECK(p.bins() == 60);
      CHECK(p.frames() == (n - 320) / 160 + 1);
      for (double v : p.values.values()) CHECK(std::isfinite(v));
    }
    Waveform shortw;
    shortw.samples.assign(319, 0.1);
    CHECK_THROWS_AS(lfcc(shortw), InputError);
  }

  TEST_CASE("lfcc statics match a direct-DFT reference") {
    Waveform w;
    w.samples = ramp(2000);
    Rng rng(2);
    for (double& v : w.samples) v += 0.1 * rng.normal();
    const PowerSpectrogram p = lfcc(w);
    const auto ref = reference_lfcc(w.samples);
    for (int c = 0; c < 20; ++c)
      for (int64_t t = 0; t < p.frames(); ++t)
        CHECK(std::abs(p.values.at({c, t}) - ref[c][static_cast<size_t>(t)]) < 1e-9);
  }

  TEST_CASE("lfcc of a DC signal") {
    Waveform w;
    w.samples.assign(3200, 0.25);
    const PowerSpectrogram p = lfcc(w);
    const auto ref = reference_lfcc(w.samples);
    for (int64_t t = 0; t < p.frames(); ++t) {
      double total = 0.0;
      for (int c = 0; c < 20; ++c) total += std::pow(p.values.at({c, t}), 2);
      const double c0 = p.values.at({0, t});
      CHECK(c0 * c0 > 0.5 * total);
      for (int c = 1; c < 20; ++c) CHECK(std::abs(c0) > std::abs(p.values.at({c, t})));
      CHECK(std::abs(c0 - ref[0][static_cast<size_t>(t)]) < 1e-9);
      for (int c = 20; c < 60; ++c) CHECK(std::abs(p.values.at({c, t})) < 1e-9);
    }
  }

  TEST_CASE("delta regression on a linear ramp") {
    // rows: x = 2t, deltas are 2 away from the replicated edges
    std::vector<double> x(10);
    for (int t = 0; t < 10; ++t) x[t] = 2.0 * t;
    const auto d = deltas(x, 1, 10, 2);
    for (int t = 2; t < 8; ++t) CHECK(d[t] == doctest::Approx(2.0));
    CHECK(d[0] < 2.0);
  }
}
