#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "s2pec/features.hpp"
#include "s2pec/nn.hpp"

namespace s2pec {

// Throughout the model, batched tensors are NCHW with H the spectral axis
// (F) and W the frame axis (T). A feature map is (N, C, F, T).

enum class FusionMode { kTsf, kConcat, kRawOnly, kPowerOnly };

std::string to_string(FusionMode mode);
FusionMode fusion_mode_from_string(const std::string& s);

struct BlockSpec {
  int64_t channels;
  Pair stride;
};

struct ModelConfig {
  // Common feature-map dims shared by both encoders.
  int64_t channels = 64;
  int64_t freq = 23;
  int64_t time = 29;

  // First-order branch: stem + residual blocks.
  int64_t raw_stem_channels = 16;
  std::vector<BlockSpec> raw_blocks = {{16, {1, 2}}, {16, {1, 1}}, {32, {2, 2}},
                                       {32, {1, 1}}, {64, {1, 2}}, {64, {1, 1}}};

  // Second-order branch: ResNet-18 stem and stages 1-3 (two basic blocks
  // each); stage 4 is replaced by the projection.
  int64_t power_stem_channels = 32;
  int64_t power_stem_kernel = 7;
  Pair power_stem_stride = {2, 2};
  Pair power_pool = {1, 2};
  std::vector<BlockSpec> power_blocks = {{32, {1, 1}}, {32, {1, 1}},  {64, {1, 2}},
                                         {64, {1, 1}}, {128, {2, 2}}, {128, {1, 1}}};

  int64_t attention_hidden = 32;
  std::vector<int64_t> decoder_channels = {32, 16};
  int64_t head_attention_hidden = 32;
  int64_t head_hidden = 64;

  FusionMode fusion = FusionMode::kTsf;
  bool decoders_enabled = true;
  uint64_t init_seed = 0;

  int64_t input_length = kDefaultTargetLength;
  SincFrontendConfig sinc;
  LfccConfig lfcc;

  // Small configuration used for desk-scale training and tests.
  static ModelConfig tiny();

  void validate() const;
  int64_t raw_bins() const { return sinc.n_filters; }
  int64_t raw_frames() const { return sinc.frames(input_length); }
  int64_t power_bins() const { return lfcc.dims(); }
  int64_t power_frames() const { return lfcc.frames(input_length); }
  bool uses_raw() const { return fusion != FusionMode::kPowerOnly; }
  bool uses_power() const { return fusion != FusionMode::kRawOnly; }
  bool decoders_active() const {
    return decoders_enabled && (fusion == FusionMode::kTsf || fusion == FusionMode::kConcat);
  }
};

struct TsfContext {
  Tensor spectral;  // (N, C, F, 1): max over frames of |h|
  Tensor temporal;  // (N, C, 1, T): max over bins of |h|
};

struct AttentionMap {
  Tensor spectral;  // (N, C, F, 1), entries in (0, 1)
  Tensor temporal;  // (N, C, 1, T), entries in (0, 1)
  Tensor combined;  // (N, C, F, T) per-channel outer product
};

// Pooling of |h| along each axis. Throws ContractError unless h is rank 4.
TsfContext tsf_pool(const Tensor& h);
// combined[n,c,f,t] = spectral[n,c,f,0] * temporal[n,c,0,t]
Tensor combine_attention(const Tensor& spectral, const Tensor& temporal);
// Elementwise gate; dims must match exactly.
Tensor apply_attention(const AttentionMap& a, const Tensor& h_fused);

struct ModelOutput {
  Tensor logit;                      // (N), higher => more bona fide
  std::optional<Tensor> recon_raw;   // (N, 1, raw_bins, raw_frames)
  std::optional<Tensor> recon_power; // (N, 1, power_bins, power_frames)
  Tensor fused;                      // H_attentive, (N, C, F, T)
  Tensor h_raw, h_power;             // encoder outputs (undefined if bypassed)
  std::optional<AttentionMap> attention;
  Tensor raw_input, power_input;     // the spectrogram batches that were encoded
};

namespace model {

class ResidualBlock : public nn::Module {
 public:
  ResidualBlock(int64_t in, int64_t out, Pair stride, Rng& rng);
  Tensor forward(const Tensor& x) const;

 private:
  nn::Conv2d conv1_, conv2_;
  nn::BatchNorm bn1_, bn2_;
  std::unique_ptr<nn::Conv2d> proj_;
  std::unique_ptr<nn::BatchNorm> proj_bn_;
};

// Adaptive resampling to (F, T) followed by 1x1 conv to C and batch norm.
class Projection : public nn::Module {
 public:
  Projection(int64_t in, const ModelConfig& cfg, Rng& rng);
  Tensor forward(const Tensor& x) const;

 private:
  int64_t freq_, time_;
  nn::Conv2d conv_;
  nn::BatchNorm bn_;
};

class RawEncoder : public nn::Module {
 public:
  RawEncoder(const ModelConfig& cfg, Rng& rng);
  // Returns the output of the final residual block in *last_block if given.
  Tensor forward(const Tensor& x, Tensor* last_block = nullptr) const;

 private:
  nn::Conv2d stem_;
  nn::BatchNorm stem_bn_;
  std::vector<std::unique_ptr<ResidualBlock>> blocks_;
  Projection proj_;
};

class PowerEncoder : public nn::Module {
 public:
  PowerEncoder(const ModelConfig& cfg, Rng& rng);
  Tensor forward(const Tensor& x, Tensor* last_block = nullptr) const;

 private:
  Pair pool_;
  nn::Conv2d stem_;
  nn::BatchNorm stem_bn_;
  std::vector<std::unique_ptr<ResidualBlock>> blocks_;
  Projection proj_;
};

// Channel concat -> 3x3 conv back to C -> batch norm -> SiLU.
class CoarseFusion : public nn::Module {
 public:
  CoarseFusion(int64_t channels, Rng& rng);
  Tensor forward(const Tensor& h_raw, const Tensor& h_power) const;

 private:
  nn::Conv2d conv_;
  nn::BatchNorm bn_;
};

// FC over channels -> batch norm -> SiLU -> FC -> sigmoid, applied at
// every pooled position.
class AttentionBranch : public nn::Module {
 public:
  AttentionBranch(int64_t channels, int64_t hidden, Rng& rng);
  Tensor forward(const Tensor& ctx) const;

 private:
  nn::Conv2d fc1_;
  nn::BatchNorm bn_;
  nn::Conv2d fc2_;
};

class TsfAttention : public nn::Module {
 public:
  TsfAttention(int64_t channels, int64_t hidden, Rng& rng);
  AttentionMap forward(const TsfContext& ctx) const;

 private:
  AttentionBranch spectral_, temporal_;
};

// Transposed-conv upsampling stack ending in an exact resize to the target.
class Decoder : public nn::Module {
 public:
  Decoder(const ModelConfig& cfg, int64_t out_h, int64_t out_w, Rng& rng);
  Tensor forward(const Tensor& h) const;

 private:
  int64_t out_h_, out_w_;
  std::vector<std::unique_ptr<nn::ConvTranspose2d>> ups_;
  std::vector<std::unique_ptr<nn::BatchNorm>> bns_;
  nn::Conv2d out_;
};

// Attentive statistics pooling over (F, T) followed by a two-layer MLP.
class ClassifierHead : public nn::Module {
 public:
  ClassifierHead(const ModelConfig& cfg, Rng& rng);
  Tensor forward(const Tensor& h) const;  // (N)

 private:
  nn::Conv2d att1_, att2_;
  nn::Linear fc1_, fc2_;
};

}  // namespace model

class S2pecNet : public nn::Module {
 public:
  explicit S2pecNet(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const SincFrontend& frontend() const { return frontend_; }

  // (N, 1, 1, L) -> (N, 1, raw_bins, raw_frames)
  Tensor raw_features(const Tensor& wave) const;
  // LFCC of each waveform stacked to (N, 1, power_bins, power_frames).
  Tensor power_features(const std::vector<const Waveform*>& waves) const;

  Tensor encode_raw(const Tensor& x, Tensor* last_block = nullptr) const;
  Tensor encode_power(const Tensor& x, Tensor* last_block = nullptr) const;
  Tensor coarse_fuse(const Tensor& h_raw, const Tensor& h_power) const;
  AttentionMap attention(const TsfContext& ctx) const;
  Tensor decode_raw(const Tensor& h) const;
  Tensor decode_power(const Tensor& h) const;
  Tensor classify(const Tensor& h) const;

  // Everything after feature extraction. Either input may be undefined if
  // the fusion mode does not use it.
  ModelOutput forward_features(const Tensor& raw, const Tensor& power) const;
  ModelOutput forward(const std::vector<const Waveform*>& waves) const;

 private:
  ModelConfig cfg_;
  Rng init_rng_;
  SincFrontend frontend_;
  model::RawEncoder raw_encoder_;
  model::PowerEncoder power_encoder_;
  model::CoarseFusion coarse_;
  model::TsfAttention tsf_;
  model::Decoder raw_decoder_, power_decoder_;
  model::ClassifierHead head_;
};

// Stacks rank-2 spectrograms into (N, 1, bins, frames).
Tensor stack_spectrograms(const std::vector<const Tensor*>& specs);

}  // namespace s2pec
