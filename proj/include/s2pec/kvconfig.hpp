#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "s2pec/metrics.hpp"
#include "s2pec/model.hpp"
#include "s2pec/toy.hpp"

namespace s2pec {

// Flat key-value configuration.
//
//   # comment
//   include = base.conf        (path relative to the including file)
//   model.fusion = tsf
//
// Lines are applied in order, so later assignments (including those inside
// a later include) override earlier ones. Keys are dotted lower-case names.
class KvConfig {
 public:
  static KvConfig load(const std::filesystem::path& path);
  static KvConfig parse(const std::string& text, const std::filesystem::path& base_dir = {},
                        const std::string& source = "<text>");

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  // "key=value"
  void apply_override(const std::string& assignment);
  void merge(const KvConfig& other);
  void erase(const std::string& key) { values_.erase(key); }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  // Keys present here but absent from `known`, sorted.
  std::vector<std::string> unknown_keys(const std::set<std::string>& known) const;
  std::string to_text() const;

 private:
  void parse_into(const std::string& text, const std::filesystem::path& base_dir, const std::string& source,
                  std::vector<std::filesystem::path>& stack);

  std::map<std::string, std::string> values_;
};

// "model.preset" selects the starting point (default, tiny); every other
// model.*, sinc.* and lfcc.* key overrides a single field.
ModelConfig model_config_from_kv(const KvConfig& kv);
KvConfig model_config_to_kv(const ModelConfig& cfg);
std::set<std::string> model_config_keys();

TdcfParams tdcf_params_from_kv(const KvConfig& kv);
KvConfig tdcf_params_to_kv(const TdcfParams& p);
std::set<std::string> tdcf_params_keys();

ToyConfig toy_config_from_kv(const KvConfig& kv);
KvConfig toy_config_to_kv(const ToyConfig& cfg);
std::set<std::string> toy_config_keys();

// Stable 64-bit FNV-1a hash of the canonical text form, as 16 hex digits.
std::string config_hash(const KvConfig& kv);

}  // namespace s2pec
