#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "s2pec/data.hpp"
#include "s2pec/rng.hpp"

namespace s2pec {

// Synthetic attack families:
//   T01  phase-randomised resynthesis below 2 kHz with a vocoder-like
//        low-band gain (artefacts concentrated at low frequencies)
//   T02  narrow-band tonal and noise artefacts injected at 6-7.5 kHz
//   T03  band-limited resynthesis (everything above 4 kHz removed)
inline const std::vector<std::string> kToyAttacks = {"T01", "T02", "T03"};

struct ToySplit {
  int64_t bonafide = 0;
  int64_t spoof_per_attack = 0;
};

struct ToyConfig {
  ToySplit train{200, 100};
  ToySplit dev{100, 50};
  ToySplit eval{100, 50};
  std::vector<std::string> attacks = {"T01", "T02"};
  int64_t length = 64000;  // 4 s at 16 kHz
  int sample_rate = 16000;

  void validate() const;
  const ToySplit& split(Partition p) const;
};

// Single utterances, deterministic in (rng state).
std::vector<double> toy_bonafide(Rng& rng, int64_t length, int sample_rate);
std::vector<double> toy_attack(const std::string& attack, Rng& rng, int64_t length, int sample_rate);

// Writes <out>/<partition>/audio/<utt>.wav and
// <out>/protocols/toy.<partition>.txt for train, dev and eval. Each
// utterance is generated from its own derived stream, so output does not
// depend on generation order.
std::map<Partition, Manifest> synth_toy_dataset(const ToyConfig& cfg, uint64_t seed,
                                                const std::filesystem::path& out_dir);

std::filesystem::path toy_protocol_path(const std::filesystem::path& out_dir, Partition p);

}  // namespace s2pec
