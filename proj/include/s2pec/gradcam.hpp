#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "s2pec/model.hpp"

namespace s2pec {

enum class CamTarget { kBonafide, kSpoof };

struct SaliencyMap {
  int64_t bins = 0, frames = 0;
  std::vector<double> values;  // row-major (bins, frames), in [0, 1]
  std::vector<double> spectrogram;  // the input representation, same layout
};

struct GradCamResult {
  SaliencyMap raw, power;
  double logit = 0.0;
};

// Gradient-weighted class activation maps at the output of each encoder's
// final residual block, upsampled onto the raw and power spectrograms.
// kBonafide explains the logit, kSpoof its negation. Requires a model with
// both branches (tsf or concat fusion).
GradCamResult grad_cam(const S2pecNet& net, const Waveform& w, CamTarget target = CamTarget::kSpoof);

// Fraction of saliency mass in the top third of the bin axis.
double upper_third_mass(const SaliencyMap& m);

// Writes <prefix>_{raw,power}_saliency.npy, <prefix>_{raw,power}_spectrogram.npy,
// and PPM overlays <prefix>_{raw,power}.ppm.
std::vector<std::filesystem::path> write_grad_cam(const GradCamResult& r, const std::filesystem::path& out_dir,
                                                  const std::string& prefix);

// Minimal NPY (format 1.0, little-endian float64, C order).
std::vector<uint8_t> encode_npy(const std::vector<double>& values, const std::vector<int64_t>& shape);
std::vector<double> decode_npy(const std::vector<uint8_t>& bytes, std::vector<int64_t>* shape = nullptr);

}  // namespace s2pec
