#include "s2pec/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "s2pec/audio.hpp"
#include "s2pec/error.hpp"

namespace s2pec {

namespace fs = std::filesystem;

namespace {

SaliencyMap cam_for(const Tensor& act, const Tensor& spectrogram) {
  // act: (1, C, H, W) with grad; spectrogram: (1, 1, bins, frames)
  const int64_t c = act.dim(1), h = act.dim(2), w = act.dim(3);
  const auto a = act.values();
  const auto g = act.grad();
  std::vector<double> cam(static_cast<size_t>(h * w), 0.0);
  for (int64_t ch = 0; ch < c; ++ch) {
    double alpha = 0.0;
    for (int64_t i = 0; i < h * w; ++i) alpha += g.empty() ? 0.0 : g[ch * h * w + i];
    alpha /= static_cast<double>(h * w);
    for (int64_t i = 0; i < h * w; ++i) cam[i] += alpha * a[ch * h * w + i];
  }
  for (double& v : cam) v = std::max(v, 0.0);

  SaliencyMap m;
  m.bins = spectrogram.dim(2);
  m.frames = spectrogram.dim(3);
  NoGradGuard ng;
  Tensor up = resize_bilinear(Tensor({1, 1, h, w}, std::move(cam)), m.bins, m.frames);
  m.values.assign(up.values().begin(), up.values().end());
  double peak = 0.0;
  for (double& v : m.values) {
    v = std::max(v, 0.0);
    peak = std::max(peak, v);
  }
  if (peak > 0.0) {
    for (double& v : m.values) v /= peak;
  }
  m.spectrogram.assign(spectrogram.values().begin(), spectrogram.values().end());
  return m;
}

}  // namespace

GradCamResult grad_cam(const S2pecNet& net, const Waveform& w, CamTarget target) {
  const ModelConfig& mc = net.config();
  if (!mc.uses_raw() || !mc.uses_power()) throw ConfigError("grad-cam needs a model with both encoder branches");
  if (net.training()) throw ContractError("grad-cam requires an eval-mode model");
  if (w.length() < mc.input_length) {
    throw InputError("utterance has " + std::to_string(w.length()) + " samples, grad-cam needs " +
                     std::to_string(mc.input_length));
  }
  Tensor raw, power;
  {
    NoGradGuard ng;
    raw = net.raw_features(waveform_batch({&w}));
    power = net.power_features({&w});
  }
  Tensor act_raw, act_power;
  Tensor h_raw = net.encode_raw(raw, &act_raw);
  Tensor h_power = net.encode_power(power, &act_power);
  Tensor fused = net.coarse_fuse(h_raw, h_power);
  if (mc.fusion == FusionMode::kTsf) fused = apply_attention(net.attention(tsf_pool(fused)), fused);
  Tensor logit = net.classify(fused);
  Tensor objective = target == CamTarget::kSpoof ? -logit : logit;
  objective = sum(objective);
  objective.backward();

  GradCamResult r;
  r.logit = logit.item();
  r.raw = cam_for(act_raw, raw);
  r.power = cam_for(act_power, power);
  for (Tensor p : net.parameters()) p.zero_grad();
  return r;
}

double upper_third_mass(const SaliencyMap& m) {
  double total = 0.0, upper = 0.0;
  const int64_t cut = m.bins - m.bins / 3;
  for (int64_t b = 0; b < m.bins; ++b) {
    for (int64_t t = 0; t < m.frames; ++t) {
      const double v = m.values[b * m.frames + t];
      total += v;
      if (b >= cut) upper += v;
    }
  }
  return total > 0.0 ? upper / total : 0.0;
}

std::vector<uint8_t> encode_npy(const std::vector<double>& values, const std::vector<int64_t>& shape) {
  std::string dims;
  for (size_t i = 0; i < shape.size(); ++i) dims += (i ? ", " : "") + std::to_string(shape[i]);
  if (shape.size() == 1) dims += ",";
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + dims + "), }";
  const size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header += '\n';
  std::vector<uint8_t> out = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  out.push_back(static_cast<uint8_t>(header.size() & 0xff));
  out.push_back(static_cast<uint8_t>(header.size() >> 8));
  out.insert(out.end(), header.begin(), header.end());
  const auto* p = reinterpret_cast<const uint8_t*>(values.data());
  out.insert(out.end(), p, p + values.size() * sizeof(double));
  return out;
}

std::vector<double> decode_npy(const std::vector<uint8_t>& bytes, std::vector<int64_t>* shape) {
  if (bytes.size() < 10 || bytes[0] != 0x93 || std::memcmp(bytes.data() + 1, "NUMPY", 5) != 0) {
    throw InputError("not an NPY file");
  }
  const size_t hlen = bytes[8] | (bytes[9] << 8);
  if (10 + hlen > bytes.size()) throw InputError("truncated NPY header");
  const std::string header(bytes.begin() + 10, bytes.begin() + 10 + static_cast<int64_t>(hlen));
  if (header.find("'<f8'") == std::string::npos || header.find("False") == std::string::npos) {
    throw InputError("only C-order little-endian float64 NPY is supported");
  }
  const auto open = header.find('(', header.find("shape"));
  const auto close = header.find(')', open);
  std::vector<int64_t> dims;
  std::string cur;
  for (size_t i = open + 1; i <= close; ++i) {
    const char c = header[i];
    if (c >= '0' && c <= '9') {
      cur += c;
    } else if (!cur.empty()) {
      dims.push_back(std::stoll(cur));
      cur.clear();
    }
  }
  int64_t n = 1;
  for (auto d : dims) n *= d;
  const size_t data = 10 + hlen;
  if (bytes.size() - data < static_cast<size_t>(n) * sizeof(double)) throw InputError("truncated NPY data");
  std::vector<double> out(static_cast<size_t>(n));
  std::memcpy(out.data(), bytes.data() + data, out.size() * sizeof(double));
  if (shape) *shape = dims;
  return out;
}

namespace {

// Spectrogram in grey with saliency in red; low bins at the bottom.
std::vector<uint8_t> overlay_ppm(const SaliencyMap& m) {
  const int64_t scale = std::max<int64_t>(1, 128 / std::max<int64_t>(m.bins, 1));
  const int64_t height = m.bins * scale, width = m.frames;
  double lo = 0.0, hi = 0.0;
  if (!m.spectrogram.empty()) {
    lo = *std::min_element(m.spectrogram.begin(), m.spectrogram.end());
    hi = *std::max_element(m.spectrogram.begin(), m.spectrogram.end());
  }
  const double span = hi > lo ? hi - lo : 1.0;
  const std::string head = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<uint8_t> out(head.begin(), head.end());
  for (int64_t y = 0; y < height; ++y) {
    const int64_t b = m.bins - 1 - y / scale;
    for (int64_t t = 0; t < width; ++t) {
      const size_t i = static_cast<size_t>(b * m.frames + t);
      const double g = (m.spectrogram[i] - lo) / span;
      const double s = m.values[i];
      const double base = 0.6 * g;
      out.push_back(static_cast<uint8_t>(std::lround(255.0 * std::min(1.0, base + s * (1.0 - base)))));
      out.push_back(static_cast<uint8_t>(std::lround(255.0 * base * (1.0 - s))));
      out.push_back(static_cast<uint8_t>(std::lround(255.0 * base * (1.0 - s))));
    }
  }
  return out;
}

}  // namespace

std::vector<fs::path> write_grad_cam(const GradCamResult& r, const fs::path& out_dir, const std::string& prefix) {
  std::vector<fs::path> written;
  auto emit = [&](const fs::path& p, const std::vector<uint8_t>& bytes) {
    write_file_atomic(p, bytes);
    written.push_back(p);
  };
  for (const auto& [name, m] : {std::pair<std::string, const SaliencyMap*>{"raw", &r.raw}, {"power", &r.power}}) {
    emit(out_dir / (prefix + "_" + name + "_saliency.npy"), encode_npy(m->values, {m->bins, m->frames}));
    emit(out_dir / (prefix + "_" + name + "_spectrogram.npy"), encode_npy(m->spectrogram, {m->bins, m->frames}));
    emit(out_dir / (prefix + "_" + name + ".ppm"), overlay_ppm(*m));
  }
  return written;
}

}  // namespace s2pec
