#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "s2pec/rng.hpp"

namespace s2pec {

inline constexpr int kSampleRate = 16000;
inline constexpr int64_t kDefaultTargetLength = 64600;  // ~4.04 s at 16 kHz

// Mono sample buffer, amplitude nominally in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  int64_t length() const { return static_cast<int64_t>(samples.size()); }
};

// Multichannel decode result before downmixing.
struct DecodedAudio {
  std::vector<std::vector<double>> channels;
  int sample_rate = 0;
  int bits_per_sample = 0;
};

DecodedAudio decode_wav(std::span<const uint8_t> bytes);
DecodedAudio decode_flac(std::span<const uint8_t> bytes);
// Dispatches on the file signature ("RIFF" or "fLaC").
DecodedAudio decode_audio_file(const std::filesystem::path& path);

// 16-bit PCM mono WAV; samples are clipped to [-1, 1] and rounded.
std::vector<uint8_t> encode_wav_pcm16(std::span<const double> samples, int sample_rate);
void write_wav_pcm16(const std::filesystem::path& path, std::span<const double> samples, int sample_rate);

Waveform downmix(const DecodedAudio& audio);
// Band-limited (Hann-windowed sinc) sample-rate conversion.
std::vector<double> resample(std::span<const double> x, int from_rate, int to_rate);

enum class CropMode {
  kHead,    // deterministic: keep the first target_len samples
  kRandom,  // random offset drawn from the supplied Rng
};

// Shorter inputs are tiled (repeated) then truncated; longer ones cropped.
std::vector<double> fit_length(std::span<const double> x, int64_t target_len, CropMode mode, Rng* rng);

// Decode, downmix and resample to 16 kHz without changing the length.
Waveform load_audio(const std::filesystem::path& path);

// load_audio followed by fit_length.
Waveform load_waveform(const std::filesystem::path& path, int64_t target_len = kDefaultTargetLength,
                       CropMode mode = CropMode::kHead, Rng* rng = nullptr);

std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);
// Writes via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, std::span<const uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace s2pec
