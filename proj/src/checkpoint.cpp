#include "s2pec/checkpoint.hpp"

#include <algorithm>
#include <map>

#include "s2pec/error.hpp"
#include "s2pec/kvconfig.hpp"

namespace s2pec {

namespace {

std::vector<std::pair<std::string, Tensor>> all_tensors(const nn::Module& m) {
  auto out = m.named_parameters();
  auto buffers = m.named_buffers();
  out.insert(out.end(), buffers.begin(), buffers.end());
  return out;
}

}  // namespace

StateDict state_dict(const nn::Module& m) {
  StateDict out;
  for (const auto& [name, t] : all_tensors(m)) {
    out.push_back({name, t.shape(), std::vector<double>(t.values().begin(), t.values().end())});
  }
  return out;
}

void load_state_dict(nn::Module& m, const StateDict& state) {
  std::map<std::string, const NamedArray*> by_name;
  for (const auto& a : state) by_name[a.name] = &a;
  for (auto& [name, t] : all_tensors(m)) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw InputError("checkpoint is missing tensor '" + name + "'");
    if (it->second->shape != t.shape()) {
      throw InputError("checkpoint tensor '" + name + "' has shape " + shape_str(it->second->shape) +
                       ", model expects " + shape_str(t.shape()));
    }
    auto dst = t.mutable_values();
    std::copy(it->second->values.begin(), it->second->values.end(), dst.begin());
  }
}

void save_checkpoint(const std::filesystem::path& path, const S2pecNet& net, const nlohmann::json& info) {
  Archive a;
  a.format = kCheckpointFormat;
  a.meta["model"] = model_config_to_kv(net.config()).values();
  a.meta["info"] = info.is_null() ? nlohmann::json::object() : info;
  a.arrays = state_dict(net);
  write_archive(path, a);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const Archive a = read_archive(path, kCheckpointFormat);
  KvConfig kv;
  for (const auto& [k, v] : a.meta.at("model").items()) kv.set(k, v.get<std::string>());
  LoadedCheckpoint out;
  out.net = std::make_unique<S2pecNet>(model_config_from_kv(kv));
  load_state_dict(*out.net, a.arrays);
  out.net->set_training(false);
  out.info = a.meta.value("info", nlohmann::json::object());
  return out;
}

}  // namespace s2pec
