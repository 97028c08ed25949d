#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "s2pec/archive.hpp"
#include "s2pec/data.hpp"
#include "s2pec/model.hpp"

namespace s2pec {

inline constexpr const char* kFeatureFormat = "s2pec-features-v1";

// Feature dump: arrays "<utt_id>/raw" (bins, frames) and "<utt_id>/power"
// (coefficients, frames); meta carries the model config key-values and the
// utterance list. Utterances whose audio fails to load are listed under
// meta.errors.
Archive extract_features(const Manifest& m, const ModelConfig& cfg);

// Exit codes: 0 success, 1 input error, 2 config error (including bad
// flags), 3 internal error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace s2pec
