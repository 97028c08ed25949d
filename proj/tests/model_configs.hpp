#pragma once

#include "s2pec/model.hpp"
#include "s2pec/rng.hpp"
#include "support.hpp"

namespace s2pec::test {

// Tiny preset on short clips: raw 20 x 9, power 60 x 19.
inline ModelConfig small_config() {
  ModelConfig c = ModelConfig::tiny();
  c.input_length = 3200;
  return c;
}

// Frozen configuration for finite-difference checks: common dims
// C=4, F=5, T=6, raw 8 x 9, power 12 x 19.
inline ModelConfig grad_config() {
  ModelConfig c = ModelConfig::tiny();
  c.channels = 4;
  c.freq = 5;
  c.time = 6;
  c.raw_stem_channels = 2;
  c.raw_blocks = {{4, {2, 2}}};
  c.power_stem_channels = 2;
  c.power_blocks = {{4, {2, 2}}};
  c.attention_hidden = 3;
  c.decoder_channels = {4, 2};
  c.head_attention_hidden = 4;
  c.head_hidden = 6;
  c.sinc.n_filters = 8;
  c.sinc.kernel_length = 33;
  c.sinc.stride = 8;
  c.sinc.pool = 40;
  c.lfcc.n_ceps = 4;
  c.lfcc.n_filters = 8;
  c.input_length = 3200;
  c.init_seed = 1234;
  return c;
}

inline Tensor random_raw(Rng& rng, const ModelConfig& c, int64_t n) {
  return random_tensor(rng, {n, 1, c.raw_bins(), c.raw_frames()}, 0.0, 1.0);
}

inline Tensor random_power(Rng& rng, const ModelConfig& c, int64_t n) {
  return random_tensor(rng, {n, 1, c.power_bins(), c.power_frames()}, -3.0, 3.0);
}

}  // namespace s2pec::test
