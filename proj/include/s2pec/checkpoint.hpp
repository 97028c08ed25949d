#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2pec/archive.hpp"
#include "s2pec/model.hpp"

namespace s2pec {

inline constexpr const char* kCheckpointFormat = "s2pec-ckpt-v1";

// Copies of every parameter and buffer, keyed by hierarchical name.
using StateDict = std::vector<NamedArray>;

StateDict state_dict(const nn::Module& m);
// Every name in the module must be present with a matching shape.
void load_state_dict(nn::Module& m, const StateDict& state);

// Archive meta holds {"model": <model config key-values>, "info": info}.
void save_checkpoint(const std::filesystem::path& path, const S2pecNet& net, const nlohmann::json& info = {});

struct LoadedCheckpoint {
  std::unique_ptr<S2pecNet> net;
  nlohmann::json info;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace s2pec
