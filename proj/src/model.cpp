#include "s2pec/model.hpp"

#include <cmath>

#include "s2pec/error.hpp"

namespace s2pec {

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kTsf: return "tsf";
    case FusionMode::kConcat: return "concat";
    case FusionMode::kRawOnly: return "raw_only";
    case FusionMode::kPowerOnly: return "power_only";
  }
  return "tsf";
}

FusionMode fusion_mode_from_string(const std::string& s) {
  if (s == "tsf") return FusionMode::kTsf;
  if (s == "concat") return FusionMode::kConcat;
  if (s == "raw_only") return FusionMode::kRawOnly;
  if (s == "power_only") return FusionMode::kPowerOnly;
  throw ConfigError("unknown fusion mode '" + s + "' (tsf, concat, raw_only, power_only)");
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.channels = 8;
  c.freq = 6;
  c.time = 12;
  c.raw_stem_channels = 4;
  c.raw_blocks = {{8, {2, 2}}, {8, {1, 2}}};
  c.power_stem_channels = 4;
  c.power_stem_kernel = 3;
  c.power_blocks = {{8, {2, 2}}, {8, {1, 2}}};
  c.attention_hidden = 4;
  c.decoder_channels = {8, 4};
  c.head_attention_hidden = 8;
  c.head_hidden = 16;
  c.sinc.n_filters = 20;
  c.sinc.kernel_length = 65;
  c.sinc.stride = 8;
  c.sinc.pool = 40;
  return c;
}

void ModelConfig::validate() const {
  if (channels <= 0 || freq <= 0 || time <= 0) throw ConfigError("model: common dims must be positive");
  if (raw_stem_channels <= 0 || power_stem_channels <= 0) throw ConfigError("model: stem channels must be positive");
  if (power_stem_kernel <= 0 || power_stem_kernel % 2 == 0) throw ConfigError("model: power_stem_kernel must be odd");
  for (const auto* blocks : {&raw_blocks, &power_blocks}) {
    for (const auto& b : *blocks) {
      if (b.channels <= 0 || b.stride[0] <= 0 || b.stride[1] <= 0) throw ConfigError("model: invalid block spec");
    }
  }
  if (attention_hidden <= 0 || head_attention_hidden <= 0 || head_hidden <= 0) {
    throw ConfigError("model: hidden widths must be positive");
  }
  for (int64_t c : decoder_channels) {
    if (c <= 0) throw ConfigError("model: decoder channels must be positive");
  }
  sinc.validate();
  lfcc.validate();
  if (raw_frames() < 1) throw ConfigError("model: input_length too short for the sinc front-end");
  if (power_frames() < 1) throw ConfigError("model: input_length too short for LFCC");
}

// ---------------------------------------------------------------------------
// TSF operations
// ---------------------------------------------------------------------------

TsfContext tsf_pool(const Tensor& h) {
  if (h.rank() != 4) throw ContractError("tsf_pool expects (N, C, F, T), got " + shape_str(h.shape()));
  Tensor mag = abs(h);
  return {max(mag, 3), max(mag, 2)};
}

Tensor combine_attention(const Tensor& spectral, const Tensor& temporal) {
  if (spectral.rank() != 4 || temporal.rank() != 4 || spectral.dim(3) != 1 || temporal.dim(2) != 1 ||
      spectral.dim(0) != temporal.dim(0) || spectral.dim(1) != temporal.dim(1)) {
    throw ContractError("combine_attention: incompatible " + shape_str(spectral.shape()) + " and " +
                        shape_str(temporal.shape()));
  }
  return spectral * temporal;
}

Tensor apply_attention(const AttentionMap& a, const Tensor& h_fused) {
  if (a.combined.shape() != h_fused.shape()) {
    throw ContractError("apply_attention: attention " + shape_str(a.combined.shape()) + " vs feature map " +
                        shape_str(h_fused.shape()));
  }
  return a.combined * h_fused;
}

namespace model {

ResidualBlock::ResidualBlock(int64_t in, int64_t out, Pair stride, Rng& rng)
    : conv1_(in, out, {3, 3}, stride, {1, 1}, false, rng),
      conv2_(out, out, {3, 3}, {1, 1}, {1, 1}, false, rng),
      bn1_(out),
      bn2_(out) {
  register_module("conv1", conv1_);
  register_module("bn1", bn1_);
  register_module("conv2", conv2_);
  register_module("bn2", bn2_);
  if (in != out || stride[0] != 1 || stride[1] != 1) {
    proj_ = std::make_unique<nn::Conv2d>(in, out, Pair{1, 1}, stride, Pair{0, 0}, false, rng);
    proj_bn_ = std::make_unique<nn::BatchNorm>(out);
    register_module("downsample.conv", *proj_);
    register_module("downsample.bn", *proj_bn_);
  }
}

Tensor ResidualBlock::forward(const Tensor& x) const {
  Tensor y = relu(bn1_.forward(conv1_.forward(x)));
  y = bn2_.forward(conv2_.forward(y));
  Tensor skip = proj_ ? proj_bn_->forward(proj_->forward(x)) : x;
  return relu(y + skip);
}

Projection::Projection(int64_t in, const ModelConfig& cfg, Rng& rng)
    : freq_(cfg.freq), time_(cfg.time), conv_(in, cfg.channels, {1, 1}, {1, 1}, {0, 0}, false, rng), bn_(cfg.channels) {
  register_module("conv", conv_);
  register_module("bn", bn_);
}

Tensor Projection::forward(const Tensor& x) const {
  return bn_.forward(conv_.forward(adaptive_avg_pool2d(x, freq_, time_)));
}

namespace {

int64_t last_channels(const std::vector<BlockSpec>& blocks, int64_t stem) {
  return blocks.empty() ? stem : blocks.back().channels;
}

}  // namespace

RawEncoder::RawEncoder(const ModelConfig& cfg, Rng& rng)
    : stem_(1, cfg.raw_stem_channels, {3, 3}, {1, 1}, {1, 1}, false, rng),
      stem_bn_(cfg.raw_stem_channels),
      proj_(last_channels(cfg.raw_blocks, cfg.raw_stem_channels), cfg, rng) {
  register_module("stem", stem_);
  register_module("stem_bn", stem_bn_);
  int64_t in = cfg.raw_stem_channels;
  for (size_t i = 0; i < cfg.raw_blocks.size(); ++i) {
    blocks_.push_back(std::make_unique<ResidualBlock>(in, cfg.raw_blocks[i].channels, cfg.raw_blocks[i].stride, rng));
    register_module("block" + std::to_string(i), *blocks_.back());
    in = cfg.raw_blocks[i].channels;
  }
  register_module("proj", proj_);
}

Tensor RawEncoder::forward(const Tensor& x, Tensor* last_block) const {
  Tensor y = relu(stem_bn_.forward(stem_.forward(x)));
  for (const auto& b : blocks_) y = b->forward(y);
  if (last_block) *last_block = y;
  return proj_.forward(y);
}

PowerEncoder::PowerEncoder(const ModelConfig& cfg, Rng& rng)
    : pool_(cfg.power_pool),
      stem_(1, cfg.power_stem_channels, {cfg.power_stem_kernel, cfg.power_stem_kernel}, cfg.power_stem_stride,
            {cfg.power_stem_kernel / 2, cfg.power_stem_kernel / 2}, false, rng),
      stem_bn_(cfg.power_stem_channels),
      proj_(last_channels(cfg.power_blocks, cfg.power_stem_channels), cfg, rng) {
  register_module("stem", stem_);
  register_module("stem_bn", stem_bn_);
  int64_t in = cfg.power_stem_channels;
  for (size_t i = 0; i < cfg.power_blocks.size(); ++i) {
    blocks_.push_back(
        std::make_unique<ResidualBlock>(in, cfg.power_blocks[i].channels, cfg.power_blocks[i].stride, rng));
    register_module("block" + std::to_string(i), *blocks_.back());
    in = cfg.power_blocks[i].channels;
  }
  register_module("proj", proj_);
}

Tensor PowerEncoder::forward(const Tensor& x, Tensor* last_block) const {
  Tensor y = relu(stem_bn_.forward(stem_.forward(x)));
  if (pool_[0] > 1 || pool_[1] > 1) y = max_pool2d(y, pool_, pool_);
  for (const auto& b : blocks_) y = b->forward(y);
  if (last_block) *last_block = y;
  return proj_.forward(y);
}

CoarseFusion::CoarseFusion(int64_t channels, Rng& rng)
    : conv_(2 * channels, channels, {3, 3}, {1, 1}, {1, 1}, true, rng), bn_(channels) {
  register_module("conv", conv_);
  register_module("bn", bn_);
}

Tensor CoarseFusion::forward(const Tensor& h_raw, const Tensor& h_power) const {
  if (h_raw.shape() != h_power.shape()) {
    throw ContractError("coarse_fuse: " + shape_str(h_raw.shape()) + " vs " + shape_str(h_power.shape()));
  }
  return silu(bn_.forward(conv_.forward(concat({h_raw, h_power}, 1))));
}

AttentionBranch::AttentionBranch(int64_t channels, int64_t hidden, Rng& rng)
    : fc1_(channels, hidden, {1, 1}, {1, 1}, {0, 0}, true, rng),
      bn_(hidden),
      fc2_(hidden, channels, {1, 1}, {1, 1}, {0, 0}, true, rng) {
  register_module("fc1", fc1_);
  register_module("bn", bn_);
  register_module("fc2", fc2_);
}

Tensor AttentionBranch::forward(const Tensor& ctx) const {
  return sigmoid(fc2_.forward(silu(bn_.forward(fc1_.forward(ctx)))));
}

TsfAttention::TsfAttention(int64_t channels, int64_t hidden, Rng& rng)
    : spectral_(channels, hidden, rng), temporal_(channels, hidden, rng) {
  register_module("spectral", spectral_);
  register_module("temporal", temporal_);
}

AttentionMap TsfAttention::forward(const TsfContext& ctx) const {
  AttentionMap a;
  a.spectral = spectral_.forward(ctx.spectral);
  a.temporal = temporal_.forward(ctx.temporal);
  a.combined = combine_attention(a.spectral, a.temporal);
  return a;
}

Decoder::Decoder(const ModelConfig& cfg, int64_t out_h, int64_t out_w, Rng& rng)
    : out_h_(out_h),
      out_w_(out_w),
      out_(cfg.decoder_channels.empty() ? cfg.channels : cfg.decoder_channels.back(), 1, {3, 3}, {1, 1}, {1, 1},
           true, rng) {
  int64_t in = cfg.channels;
  for (size_t i = 0; i < cfg.decoder_channels.size(); ++i) {
    const int64_t out = cfg.decoder_channels[i];
    ups_.push_back(std::make_unique<nn::ConvTranspose2d>(in, out, Pair{4, 4}, Pair{2, 2}, Pair{1, 1}, false, rng));
    bns_.push_back(std::make_unique<nn::BatchNorm>(out));
    register_module("up" + std::to_string(i), *ups_.back());
    register_module("bn" + std::to_string(i), *bns_.back());
    in = out;
  }
  register_module("out", out_);
}

Tensor Decoder::forward(const Tensor& h) const {
  Tensor y = h;
  for (size_t i = 0; i < ups_.size(); ++i) y = silu(bns_[i]->forward(ups_[i]->forward(y)));
  return resize_bilinear(out_.forward(y), out_h_, out_w_);
}

ClassifierHead::ClassifierHead(const ModelConfig& cfg, Rng& rng)
    : att1_(cfg.channels, cfg.head_attention_hidden, {1, 1}, {1, 1}, {0, 0}, true, rng),
      att2_(cfg.head_attention_hidden, 1, {1, 1}, {1, 1}, {0, 0}, true, rng),
      fc1_(2 * cfg.channels, cfg.head_hidden, true, rng),
      fc2_(cfg.head_hidden, 1, true, rng) {
  register_module("att1", att1_);
  register_module("att2", att2_);
  register_module("fc1", fc1_);
  register_module("fc2", fc2_);
}

Tensor ClassifierHead::forward(const Tensor& h) const {
  const int64_t n = h.dim(0), f = h.dim(2), t = h.dim(3);
  Tensor scores = att2_.forward(tanh(att1_.forward(h)));
  Tensor w = reshape(softmax(reshape(scores, {n, 1, f * t}), 2), {n, 1, f, t});
  Tensor mu = sum(w * h, {2, 3}, false);
  Tensor ex2 = sum(w * square(h), {2, 3}, false);
  Tensor sigma = sqrt(clamp(ex2 - square(mu), 1e-6, 1e300));
  Tensor z = concat({mu, sigma}, 1);
  return reshape(fc2_.forward(silu(fc1_.forward(z))), {n});
}

}  // namespace model

// ---------------------------------------------------------------------------
// S2pecNet
// ---------------------------------------------------------------------------

namespace {

const ModelConfig& validated(const ModelConfig& c) {
  c.validate();
  return c;
}

}  // namespace

S2pecNet::S2pecNet(ModelConfig cfg)
    : cfg_(validated(cfg)),
      init_rng_(cfg_.init_seed),
      frontend_(cfg_.sinc),
      raw_encoder_(cfg_, init_rng_),
      power_encoder_(cfg_, init_rng_),
      coarse_(cfg_.channels, init_rng_),
      tsf_(cfg_.channels, cfg_.attention_hidden, init_rng_),
      raw_decoder_(cfg_, cfg_.raw_bins(), cfg_.raw_frames(), init_rng_),
      power_decoder_(cfg_, cfg_.power_bins(), cfg_.power_frames(), init_rng_),
      head_(cfg_, init_rng_) {
  register_module("frontend", frontend_);
  register_module("raw_encoder", raw_encoder_);
  register_module("power_encoder", power_encoder_);
  register_module("coarse_fusion", coarse_);
  register_module("tsf", tsf_);
  register_module("raw_decoder", raw_decoder_);
  register_module("power_decoder", power_decoder_);
  register_module("head", head_);
}

Tensor S2pecNet::raw_features(const Tensor& wave) const { return frontend_.forward(wave); }

Tensor S2pecNet::power_features(const std::vector<const Waveform*>& waves) const {
  std::vector<Tensor> specs;
  std::vector<const Tensor*> ptrs;
  specs.reserve(waves.size());
  for (const auto* w : waves) specs.push_back(lfcc(*w, cfg_.lfcc).values);
  for (const auto& s : specs) ptrs.push_back(&s);
  return stack_spectrograms(ptrs);
}

namespace {

void check_input(const Tensor& x, int64_t bins, int64_t frames, const char* what) {
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != bins || x.dim(3) != frames) {
    throw ConfigError(std::string(what) + " input " + shape_str(x.shape()) + " does not match configured (N,1," +
                      std::to_string(bins) + "," + std::to_string(frames) + ")");
  }
}

}  // namespace

Tensor S2pecNet::encode_raw(const Tensor& x, Tensor* last_block) const {
  check_input(x, cfg_.raw_bins(), cfg_.raw_frames(), "raw encoder");
  return raw_encoder_.forward(x, last_block);
}

Tensor S2pecNet::encode_power(const Tensor& x, Tensor* last_block) const {
  check_input(x, cfg_.power_bins(), cfg_.power_frames(), "power encoder");
  return power_encoder_.forward(x, last_block);
}

Tensor S2pecNet::coarse_fuse(const Tensor& h_raw, const Tensor& h_power) const {
  return coarse_.forward(h_raw, h_power);
}

AttentionMap S2pecNet::attention(const TsfContext& ctx) const { return tsf_.forward(ctx); }

Tensor S2pecNet::decode_raw(const Tensor& h) const { return raw_decoder_.forward(h); }
Tensor S2pecNet::decode_power(const Tensor& h) const { return power_decoder_.forward(h); }
Tensor S2pecNet::classify(const Tensor& h) const { return head_.forward(h); }

ModelOutput S2pecNet::forward_features(const Tensor& raw, const Tensor& power) const {
  ModelOutput out;
  out.raw_input = raw;
  out.power_input = power;
  if (cfg_.uses_raw()) out.h_raw = encode_raw(raw);
  if (cfg_.uses_power()) out.h_power = encode_power(power);
  switch (cfg_.fusion) {
    case FusionMode::kRawOnly: out.fused = out.h_raw; break;
    case FusionMode::kPowerOnly: out.fused = out.h_power; break;
    case FusionMode::kConcat: out.fused = coarse_fuse(out.h_raw, out.h_power); break;
    case FusionMode::kTsf: {
      Tensor h_fused = coarse_fuse(out.h_raw, out.h_power);
      out.attention = attention(tsf_pool(h_fused));
      out.fused = apply_attention(*out.attention, h_fused);
      break;
    }
  }
  if (cfg_.decoders_active()) {
    out.recon_raw = decode_raw(out.fused);
    out.recon_power = decode_power(out.fused);
  }
  out.logit = classify(out.fused);
  return out;
}

ModelOutput S2pecNet::forward(const std::vector<const Waveform*>& waves) const {
  Tensor raw, power;
  if (cfg_.uses_raw()) raw = raw_features(waveform_batch(waves));
  if (cfg_.uses_power()) power = power_features(waves);
  return forward_features(raw, power);
}

Tensor stack_spectrograms(const std::vector<const Tensor*>& specs) {
  if (specs.empty()) throw ContractError("empty spectrogram batch");
  const Shape s = specs[0]->shape();
  if (s.size() != 2) throw ContractError("spectrograms must be rank 2, got " + shape_str(s));
  std::vector<double> v;
  v.reserve(static_cast<size_t>(shape_numel(s)) * specs.size());
  for (const auto* t : specs) {
    if (t->shape() != s) throw ContractError("spectrogram batch with unequal shapes");
    v.insert(v.end(), t->values().begin(), t->values().end());
  }
  return Tensor({static_cast<int64_t>(specs.size()), 1, s[0], s[1]}, std::move(v));
}

}  // namespace s2pec
