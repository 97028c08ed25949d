#include "s2pec/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "s2pec/error.hpp"

namespace s2pec {

namespace fs = std::filesystem;

std::vector<uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const fs::path& path, std::span<const uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// WAV
// ---------------------------------------------------------------------------

namespace {

uint32_t le32(const uint8_t* p) { return p[0] | (p[1] << 8) | (p[2] << 16) | (uint32_t(p[3]) << 24); }
uint16_t le16(const uint8_t* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::vector<uint8_t>& b, uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<uint8_t>(v >> (8 * i)));
}
void put16(std::vector<uint8_t>& b, uint16_t v) {
  b.push_back(static_cast<uint8_t>(v));
  b.push_back(static_cast<uint8_t>(v >> 8));
}

}  // namespace

DecodedAudio decode_wav(std::span<const uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw InputError("not a RIFF/WAVE file");
  }
  int format = 0, channels = 0, rate = 0, bits = 0;
  const uint8_t* data = nullptr;
  size_t data_size = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint8_t* chunk = bytes.data() + pos;
    const size_t size = le32(chunk + 4);
    const size_t avail = std::min(size, bytes.size() - pos - 8);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw InputError("truncated fmt chunk");
      format = le16(chunk + 8);
      channels = le16(chunk + 10);
      rate = static_cast<int>(le32(chunk + 12));
      bits = le16(chunk + 22);
      if (format == 0xFFFE && avail >= 26) format = le16(chunk + 8 + 24);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = avail;
    }
    pos += 8 + size + (size & 1);
  }
  if (channels <= 0 || rate <= 0 || data == nullptr) throw InputError("WAV missing fmt or data chunk");
  if (format != 1 && format != 3) throw InputError("unsupported WAV format tag " + std::to_string(format));
  if (format == 1 && (bits != 8 && bits != 16 && bits != 24 && bits != 32)) {
    throw InputError("unsupported PCM bit depth " + std::to_string(bits));
  }
  if (format == 3 && bits != 32 && bits != 64) throw InputError("unsupported float bit depth");

  const size_t width = static_cast<size_t>(bits / 8);
  const size_t frames = data_size / (width * static_cast<size_t>(channels));
  DecodedAudio out;
  out.sample_rate = rate;
  out.bits_per_sample = bits;
  out.channels.assign(static_cast<size_t>(channels), std::vector<double>(frames));
  for (size_t f = 0; f < frames; ++f) {
    for (int c = 0; c < channels; ++c) {
      const uint8_t* p = data + (f * static_cast<size_t>(channels) + static_cast<size_t>(c)) * width;
      double v = 0.0;
      if (format == 3) {
        if (bits == 32) {
          v = std::bit_cast<float>(le32(p));
        } else {
          uint64_t u = le32(p) | (uint64_t(le32(p + 4)) << 32);
          v = std::bit_cast<double>(u);
        }
      } else if (bits == 8) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else if (bits == 16) {
        v = static_cast<int16_t>(le16(p)) / 32768.0;
      } else if (bits == 24) {
        int32_t s = static_cast<int32_t>((uint32_t(p[0]) << 8) | (uint32_t(p[1]) << 16) | (uint32_t(p[2]) << 24));
        v = (s >> 8) / 8388608.0;
      } else {
        v = static_cast<int32_t>(le32(p)) / 2147483648.0;
      }
      out.channels[static_cast<size_t>(c)][f] = v;
    }
  }
  return out;
}

std::vector<uint8_t> encode_wav_pcm16(std::span<const double> samples, int sample_rate) {
  std::vector<uint8_t> b;
  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  b.reserve(44 + data_bytes);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put32(b, 36 + data_bytes);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(b, 16);
  put16(b, 1);
  put16(b, 1);
  put32(b, static_cast<uint32_t>(sample_rate));
  put32(b, static_cast<uint32_t>(sample_rate * 2));
  put16(b, 2);
  put16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put32(b, data_bytes);
  for (double s : samples) {
    // same scale as the reader, so decoded PCM16 round-trips exactly
    const long q = std::clamp(std::lround(std::clamp(s, -1.0, 1.0) * 32768.0), -32768L, 32767L);
    put16(b, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  return b;
}

void write_wav_pcm16(const fs::path& path, std::span<const double> samples, int sample_rate) {
  write_file_atomic(path, encode_wav_pcm16(samples, sample_rate));
}

// ---------------------------------------------------------------------------
// FLAC (fixed-blocksize and variable-blocksize streams, all subframe types)
// ---------------------------------------------------------------------------

namespace {

class BitReader {
 public:
  explicit BitReader(std::span<const uint8_t> data, size_t byte_pos = 0) : data_(data), pos_(byte_pos * 8) {}

  uint64_t bits(int n) {
    uint64_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 1) | bit();
    return v;
  }
  int64_t signed_bits(int n) {
    if (n == 0) return 0;
    const uint64_t v = bits(n);
    const uint64_t sign = uint64_t{1} << (n - 1);
    return static_cast<int64_t>((v ^ sign)) - static_cast<int64_t>(sign);
  }
  uint32_t bit() {
    if (pos_ >= data_.size() * 8) throw InputError("FLAC: unexpected end of stream");
    const uint32_t b = (data_[pos_ >> 3] >> (7 - (pos_ & 7))) & 1u;
    ++pos_;
    return b;
  }
  uint64_t unary() {
    uint64_t n = 0;
    while (bit() == 0) ++n;
    return n;
  }
  int64_t rice(int k) {
    const uint64_t v = (unary() << k) | bits(k);
    return static_cast<int64_t>(v >> 1) ^ -static_cast<int64_t>(v & 1);
  }
  void align() { pos_ = (pos_ + 7) & ~size_t{7}; }
  size_t byte_pos() const { return pos_ >> 3; }
  bool at_end() const { return pos_ >= data_.size() * 8; }

 private:
  std::span<const uint8_t> data_;
  size_t pos_;
};

// UTF-8-style coded frame/sample number.
uint64_t read_utf8_number(BitReader& br) {
  uint64_t first = br.bits(8);
  int extra = 0;
  uint64_t v;
  if ((first & 0x80) == 0) return first;
  if ((first & 0xE0) == 0xC0) {
    extra = 1;
    v = first & 0x1F;
  } else if ((first & 0xF0) == 0xE0) {
    extra = 2;
    v = first & 0x0F;
  } else if ((first & 0xF8) == 0xF0) {
    extra = 3;
    v = first & 0x07;
  } else if ((first & 0xFC) == 0xF8) {
    extra = 4;
    v = first & 0x03;
  } else if ((first & 0xFE) == 0xFC) {
    extra = 5;
    v = first & 0x01;
  } else if (first == 0xFE) {
    extra = 6;
    v = 0;
  } else {
    throw InputError("FLAC: bad coded number");
  }
  for (int i = 0; i < extra; ++i) v = (v << 6) | (br.bits(8) & 0x3F);
  return v;
}

void decode_residual(BitReader& br, int order, int block, std::vector<int64_t>& out) {
  const int method = static_cast<int>(br.bits(2));
  if (method > 1) throw InputError("FLAC: reserved residual coding method");
  const int param_bits = method == 0 ? 4 : 5;
  const uint32_t escape = method == 0 ? 15u : 31u;
  const int partition_order = static_cast<int>(br.bits(4));
  const int partitions = 1 << partition_order;
  const int per_partition = block >> partition_order;
  if (per_partition * partitions != block || per_partition < order) {
    throw InputError("FLAC: inconsistent residual partitioning");
  }
  for (int p = 0; p < partitions; ++p) {
    const int count = p == 0 ? per_partition - order : per_partition;
    const uint32_t k = static_cast<uint32_t>(br.bits(param_bits));
    if (k == escape) {
      const int raw = static_cast<int>(br.bits(5));
      for (int i = 0; i < count; ++i) out.push_back(br.signed_bits(raw));
    } else {
      for (int i = 0; i < count; ++i) out.push_back(br.rice(static_cast<int>(k)));
    }
  }
}

std::vector<int64_t> decode_subframe(BitReader& br, int block, int bps) {
  if (br.bit() != 0) throw InputError("FLAC: subframe padding bit set");
  const int type = static_cast<int>(br.bits(6));
  int wasted = 0;
  if (br.bit()) wasted = static_cast<int>(br.unary()) + 1;
  const int width = bps - wasted;
  std::vector<int64_t> s;
  s.reserve(static_cast<size_t>(block));
  if (type == 0) {
    s.assign(static_cast<size_t>(block), br.signed_bits(width));
  } else if (type == 1) {
    for (int i = 0; i < block; ++i) s.push_back(br.signed_bits(width));
  } else if (type >= 8 && type <= 12) {
    const int order = type - 8;
    for (int i = 0; i < order; ++i) s.push_back(br.signed_bits(width));
    std::vector<int64_t> res;
    decode_residual(br, order, block, res);
    static constexpr int64_t kCoef[5][4] = {{0, 0, 0, 0}, {1, 0, 0, 0}, {2, -1, 0, 0}, {3, -3, 1, 0}, {4, -6, 4, -1}};
    for (size_t i = 0; i < res.size(); ++i) {
      int64_t pred = 0;
      const size_t n = s.size();
      for (int j = 0; j < order; ++j) pred += kCoef[order][j] * s[n - 1 - static_cast<size_t>(j)];
      s.push_back(pred + res[i]);
    }
  } else if (type >= 32) {
    const int order = type - 31;
    for (int i = 0; i < order; ++i) s.push_back(br.signed_bits(width));
    const int precision = static_cast<int>(br.bits(4)) + 1;
    if (precision == 16) throw InputError("FLAC: invalid LPC precision");
    const int shift = static_cast<int>(br.signed_bits(5));
    std::vector<int64_t> coef(static_cast<size_t>(order));
    for (auto& c : coef) c = br.signed_bits(precision);
    std::vector<int64_t> res;
    decode_residual(br, order, block, res);
    for (size_t i = 0; i < res.size(); ++i) {
      int64_t pred = 0;
      const size_t n = s.size();
      for (int j = 0; j < order; ++j) pred += coef[static_cast<size_t>(j)] * s[n - 1 - static_cast<size_t>(j)];
      s.push_back((shift >= 0 ? (pred >> shift) : (pred << -shift)) + res[i]);
    }
  } else {
    throw InputError("FLAC: reserved subframe type " + std::to_string(type));
  }
  if (wasted) {
    for (auto& v : s) v <<= wasted;
  }
  return s;
}

}  // namespace

DecodedAudio decode_flac(std::span<const uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "fLaC", 4) != 0) throw InputError("not a FLAC stream");
  size_t pos = 4;
  int rate = 0, channels = 0, bps = 0;
  uint64_t total = 0;
  bool last = false;
  while (!last) {
    if (pos + 4 > bytes.size()) throw InputError("FLAC: truncated metadata");
    last = (bytes[pos] & 0x80) != 0;
    const int type = bytes[pos] & 0x7F;
    const size_t len = (size_t(bytes[pos + 1]) << 16) | (size_t(bytes[pos + 2]) << 8) | bytes[pos + 3];
    pos += 4;
    if (pos + len > bytes.size()) throw InputError("FLAC: truncated metadata block");
    if (type == 0) {
      BitReader br(bytes, pos);
      br.bits(16 + 16 + 24 + 24);
      rate = static_cast<int>(br.bits(20));
      channels = static_cast<int>(br.bits(3)) + 1;
      bps = static_cast<int>(br.bits(5)) + 1;
      total = br.bits(36);
    }
    pos += len;
  }
  if (rate == 0 || channels == 0) throw InputError("FLAC: missing STREAMINFO");

  DecodedAudio out;
  out.sample_rate = rate;
  out.bits_per_sample = bps;
  out.channels.assign(static_cast<size_t>(channels), {});
  static constexpr int kRates[12] = {0, 88200, 176400, 192000, 8000, 16000, 22050, 24000, 32000, 44100, 48000, 96000};
  static constexpr int kSizes[8] = {0, 8, 12, 0, 16, 20, 24, 32};

  BitReader br(bytes, pos);
  while (!br.at_end() && (total == 0 || out.channels[0].size() < total)) {
    const uint64_t sync = br.bits(14);
    if (sync != 0x3FFE) throw InputError("FLAC: lost frame sync");
    br.bits(2);  // reserved + blocking strategy
    const int bs_code = static_cast<int>(br.bits(4));
    const int sr_code = static_cast<int>(br.bits(4));
    const int ch_code = static_cast<int>(br.bits(4));
    const int ss_code = static_cast<int>(br.bits(3));
    br.bits(1);
    read_utf8_number(br);
    int block = 0;
    if (bs_code == 1) block = 192;
    else if (bs_code >= 2 && bs_code <= 5) block = 576 << (bs_code - 2);
    else if (bs_code == 6) block = static_cast<int>(br.bits(8)) + 1;
    else if (bs_code == 7) block = static_cast<int>(br.bits(16)) + 1;
    else if (bs_code >= 8) block = 256 << (bs_code - 8);
    else throw InputError("FLAC: reserved block size");
    if (sr_code == 12) br.bits(8);
    else if (sr_code == 13 || sr_code == 14) br.bits(16);
    else if (sr_code == 15) throw InputError("FLAC: invalid sample rate code");
    else if (sr_code != 0 && kRates[sr_code] != rate) throw InputError("FLAC: sample rate changes mid-stream");
    br.bits(8);  // CRC-8
    const int frame_bps = ss_code == 0 ? bps : kSizes[ss_code];
    if (frame_bps == 0) throw InputError("FLAC: reserved sample size");

    const int nch = ch_code < 8 ? ch_code + 1 : 2;
    if (nch != channels) throw InputError("FLAC: channel count changes mid-stream");
    std::vector<std::vector<int64_t>> sub(static_cast<size_t>(nch));
    for (int c = 0; c < nch; ++c) {
      int width = frame_bps;
      if ((ch_code == 8 && c == 1) || (ch_code == 9 && c == 0) || (ch_code == 10 && c == 1)) ++width;
      sub[static_cast<size_t>(c)] = decode_subframe(br, block, width);
    }
    if (ch_code == 8) {
      for (int i = 0; i < block; ++i) sub[1][i] = sub[0][i] - sub[1][i];
    } else if (ch_code == 9) {
      for (int i = 0; i < block; ++i) sub[0][i] = sub[0][i] + sub[1][i];
    } else if (ch_code == 10) {
      for (int i = 0; i < block; ++i) {
        const int64_t side = sub[1][i];
        const int64_t mid = (sub[0][i] * 2) | (side & 1);
        sub[0][i] = (mid + side) >> 1;
        sub[1][i] = (mid - side) >> 1;
      }
    }
    br.align();
    br.bits(16);  // CRC-16
    const double scale = std::ldexp(1.0, -(frame_bps - 1));
    for (int c = 0; c < nch; ++c) {
      auto& dst = out.channels[static_cast<size_t>(c)];
      for (int64_t v : sub[static_cast<size_t>(c)]) dst.push_back(static_cast<double>(v) * scale);
    }
  }
  if (total != 0) {
    for (auto& ch : out.channels) {
      if (ch.size() > total) ch.resize(total);
    }
  }
  return out;
}

DecodedAudio decode_audio_file(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "fLaC", 4) == 0) return decode_flac(bytes);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "RIFF", 4) == 0) return decode_wav(bytes);
  throw InputError("unrecognised audio format: " + path.string());
}

// ---------------------------------------------------------------------------
// Conditioning
// ---------------------------------------------------------------------------

Waveform downmix(const DecodedAudio& audio) {
  if (audio.channels.empty()) throw InputError("audio has no channels");
  Waveform w;
  w.sample_rate = audio.sample_rate;
  const size_t n = audio.channels[0].size();
  w.samples.assign(n, 0.0);
  for (const auto& ch : audio.channels) {
    for (size_t i = 0; i < n && i < ch.size(); ++i) w.samples[i] += ch[i];
  }
  const double inv = 1.0 / static_cast<double>(audio.channels.size());
  for (double& s : w.samples) s *= inv;
  return w;
}

std::vector<double> resample(std::span<const double> x, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw InputError("invalid sample rate");
  if (from_rate == to_rate) return {x.begin(), x.end()};
  constexpr int kZeroCrossings = 16;
  const double ratio = static_cast<double>(to_rate) / static_cast<double>(from_rate);
  const double cutoff = std::min(1.0, ratio);  // relative to input Nyquist
  const double half_width = kZeroCrossings / cutoff;
  const auto n_out = static_cast<int64_t>(std::floor(static_cast<double>(x.size()) * ratio));
  std::vector<double> y(static_cast<size_t>(std::max<int64_t>(n_out, 0)));
  const auto n_in = static_cast<int64_t>(x.size());
  for (int64_t i = 0; i < n_out; ++i) {
    const double t = static_cast<double>(i) / ratio;
    const auto lo = static_cast<int64_t>(std::ceil(t - half_width));
    const auto hi = static_cast<int64_t>(std::floor(t + half_width));
    double acc = 0.0;
    for (int64_t k = std::max<int64_t>(lo, 0); k <= std::min(hi, n_in - 1); ++k) {
      const double d = t - static_cast<double>(k);
      const double arg = cutoff * d;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
      const double win = 0.5 * (1.0 + std::cos(std::numbers::pi * d / half_width));
      acc += x[static_cast<size_t>(k)] * cutoff * sinc * win;
    }
    y[static_cast<size_t>(i)] = acc;
  }
  return y;
}

std::vector<double> fit_length(std::span<const double> x, int64_t target_len, CropMode mode, Rng* rng) {
  if (x.empty()) throw InputError("zero-length audio");
  if (target_len <= 0) throw ConfigError("target length must be positive");
  const auto n = static_cast<int64_t>(x.size());
  std::vector<double> out(static_cast<size_t>(target_len));
  if (n <= target_len) {
    for (int64_t i = 0; i < target_len; ++i) out[static_cast<size_t>(i)] = x[static_cast<size_t>(i % n)];
    return out;
  }
  int64_t offset = 0;
  if (mode == CropMode::kRandom) {
    if (rng == nullptr) throw ContractError("random crop requires an Rng");
    offset = static_cast<int64_t>(rng->below(static_cast<uint64_t>(n - target_len + 1)));
  }
  std::copy_n(x.begin() + offset, target_len, out.begin());
  return out;
}

Waveform load_audio(const fs::path& path) {
  Waveform w = downmix(decode_audio_file(path));
  if (w.samples.empty()) throw InputError("zero-length audio: " + path.string());
  if (w.sample_rate != kSampleRate) {
    w.samples = resample(w.samples, w.sample_rate, kSampleRate);
    w.sample_rate = kSampleRate;
  }
  for (double s : w.samples) {
    if (!std::isfinite(s)) throw InputError("non-finite sample in " + path.string());
  }
  return w;
}

Waveform load_waveform(const fs::path& path, int64_t target_len, CropMode mode, Rng* rng) {
  Waveform w = load_audio(path);
  w.samples = fit_length(w.samples, target_len, mode, rng);
  return w;
}

}  // namespace s2pec
