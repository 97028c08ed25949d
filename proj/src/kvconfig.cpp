#include "s2pec/kvconfig.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

#include "s2pec/audio.hpp"
#include "s2pec/error.hpp"

namespace s2pec {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* b = v.data();
  const char* e = v.data() + v.size();
  auto res = std::from_chars(b, e, out);
  if (res.ec != std::errc() || res.ptr != e) throw ConfigError("config key '" + key + "': invalid number '" + v + "'");
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// KvConfig
// ---------------------------------------------------------------------------

KvConfig KvConfig::load(const fs::path& path) {
  KvConfig kv;
  std::vector<fs::path> stack;
  std::string text;
  try {
    const auto bytes = read_file_bytes(path);
    text.assign(bytes.begin(), bytes.end());
  } catch (const InputError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  stack.push_back(fs::weakly_canonical(path));
  kv.parse_into(text, path.parent_path(), path.string(), stack);
  return kv;
}

KvConfig KvConfig::parse(const std::string& text, const fs::path& base_dir, const std::string& source) {
  KvConfig kv;
  std::vector<fs::path> stack;
  kv.parse_into(text, base_dir, source, stack);
  return kv;
}

void KvConfig::parse_into(const std::string& text, const fs::path& base_dir, const std::string& source,
                          std::vector<fs::path>& stack) {
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (key == "include") {
      const fs::path inc = fs::path(value).is_absolute() ? fs::path(value) : base_dir / value;
      const fs::path canon = fs::weakly_canonical(inc);
      if (std::find(stack.begin(), stack.end(), canon) != stack.end()) {
        throw ConfigError(where + ": include cycle through " + inc.string());
      }
      std::string sub;
      try {
        const auto bytes = read_file_bytes(inc);
        sub.assign(bytes.begin(), bytes.end());
      } catch (const InputError&) {
        throw ConfigError(where + ": cannot read include " + inc.string());
      }
      stack.push_back(canon);
      parse_into(sub, inc.parent_path(), inc.string(), stack);
      stack.pop_back();
      continue;
    }
    values_[key] = value;
  }
}

void KvConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = trim(assignment.substr(0, eq));
  if (key.empty() || key == "include") throw ConfigError("invalid override key in '" + assignment + "'");
  values_[key] = trim(assignment.substr(eq + 1));
}

void KvConfig::merge(const KvConfig& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string KvConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int64_t KvConfig::get_int(const std::string& key, int64_t fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<int64_t>(key, it->second);
}

uint64_t KvConfig::get_u64(const std::string& key, uint64_t fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<uint64_t>(key, it->second);
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<double>(key, it->second);
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::vector<std::string> KvConfig::unknown_keys(const std::set<std::string>& known) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!known.count(k)) out.push_back(k);
  }
  return out;
}

std::string KvConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string config_hash(const KvConfig& kv) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : kv.to_text()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Typed sections
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) { return format_double(v); }
std::string fmt(int64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

std::string pair_str(Pair p) { return std::to_string(p[0]) + "x" + std::to_string(p[1]); }

Pair parse_pair(const std::string& key, const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) {
    const auto v = parse_number<int64_t>(key, s);
    return {v, v};
  }
  return {parse_number<int64_t>(key, trim(s.substr(0, x))), parse_number<int64_t>(key, trim(s.substr(x + 1)))};
}

std::string blocks_str(const std::vector<BlockSpec>& blocks) {
  std::string out;
  for (size_t i = 0; i < blocks.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(blocks[i].channels) + ":" + pair_str(blocks[i].stride);
  }
  return out;
}

std::vector<BlockSpec> parse_blocks(const std::string& key, const std::string& s) {
  std::vector<BlockSpec> out;
  for (const auto& item : split(s, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      out.push_back({parse_number<int64_t>(key, item), {1, 1}});
    } else {
      out.push_back({parse_number<int64_t>(key, trim(item.substr(0, colon))),
                     parse_pair(key, trim(item.substr(colon + 1)))});
    }
  }
  return out;
}

std::string ints_str(const std::vector<int64_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<int64_t> parse_ints(const std::string& key, const std::string& s) {
  std::vector<int64_t> out;
  for (const auto& item : split(s, ',')) out.push_back(parse_number<int64_t>(key, item));
  return out;
}

}  // namespace

std::set<std::string> model_config_keys() {
  return {"model.preset",          "model.channels",          "model.freq",
          "model.time",            "model.raw_stem_channels", "model.raw_blocks",
          "model.power_stem_channels", "model.power_stem_kernel", "model.power_stem_stride",
          "model.power_pool",      "model.power_blocks",      "model.attention_hidden",
          "model.decoder_channels", "model.head_attention_hidden", "model.head_hidden",
          "model.fusion",          "model.decoders",          "model.init_seed",
          "model.input_length",    "sinc.n_filters",          "sinc.kernel_length",
          "sinc.min_hz",           "sinc.max_hz",             "sinc.stride",
          "sinc.pool",             "sinc.learnable",          "sinc.post",
          "lfcc.frame_ms",         "lfcc.hop_ms",             "lfcc.n_fft",
          "lfcc.n_filters",        "lfcc.n_ceps",             "lfcc.deltas",
          "lfcc.delta_window"};
}

ModelConfig model_config_from_kv(const KvConfig& kv) {
  const std::string preset = kv.get("model.preset", "default");
  ModelConfig c;
  if (preset == "tiny") {
    c = ModelConfig::tiny();
  } else if (preset != "default") {
    throw ConfigError("unknown model.preset '" + preset + "' (default, tiny)");
  }
  c.channels = kv.get_int("model.channels", c.channels);
  c.freq = kv.get_int("model.freq", c.freq);
  c.time = kv.get_int("model.time", c.time);
  c.raw_stem_channels = kv.get_int("model.raw_stem_channels", c.raw_stem_channels);
  if (kv.has("model.raw_blocks")) c.raw_blocks = parse_blocks("model.raw_blocks", kv.get("model.raw_blocks", ""));
  c.power_stem_channels = kv.get_int("model.power_stem_channels", c.power_stem_channels);
  c.power_stem_kernel = kv.get_int("model.power_stem_kernel", c.power_stem_kernel);
  if (kv.has("model.power_stem_stride")) {
    c.power_stem_stride = parse_pair("model.power_stem_stride", kv.get("model.power_stem_stride", ""));
  }
  if (kv.has("model.power_pool")) c.power_pool = parse_pair("model.power_pool", kv.get("model.power_pool", ""));
  if (kv.has("model.power_blocks")) {
    c.power_blocks = parse_blocks("model.power_blocks", kv.get("model.power_blocks", ""));
  }
  c.attention_hidden = kv.get_int("model.attention_hidden", c.attention_hidden);
  if (kv.has("model.decoder_channels")) {
    c.decoder_channels = parse_ints("model.decoder_channels", kv.get("model.decoder_channels", ""));
  }
  c.head_attention_hidden = kv.get_int("model.head_attention_hidden", c.head_attention_hidden);
  c.head_hidden = kv.get_int("model.head_hidden", c.head_hidden);
  c.fusion = fusion_mode_from_string(kv.get("model.fusion", to_string(c.fusion)));
  c.decoders_enabled = kv.get_bool("model.decoders", c.decoders_enabled);
  c.init_seed = kv.get_u64("model.init_seed", c.init_seed);
  c.input_length = kv.get_int("model.input_length", c.input_length);

  c.sinc.n_filters = static_cast<int>(kv.get_int("sinc.n_filters", c.sinc.n_filters));
  c.sinc.kernel_length = static_cast<int>(kv.get_int("sinc.kernel_length", c.sinc.kernel_length));
  c.sinc.min_hz = kv.get_double("sinc.min_hz", c.sinc.min_hz);
  c.sinc.max_hz = kv.get_double("sinc.max_hz", c.sinc.max_hz);
  c.sinc.stride = static_cast<int>(kv.get_int("sinc.stride", c.sinc.stride));
  c.sinc.pool = static_cast<int>(kv.get_int("sinc.pool", c.sinc.pool));
  c.sinc.learnable = kv.get_bool("sinc.learnable", c.sinc.learnable);
  const std::string post = kv.get("sinc.post", c.sinc.post == SincPost::kAbsMax ? "abs_max" : "abs");
  if (post == "abs_max") {
    c.sinc.post = SincPost::kAbsMax;
  } else if (post == "abs") {
    c.sinc.post = SincPost::kAbs;
  } else {
    throw ConfigError("unknown sinc.post '" + post + "' (abs_max, abs)");
  }

  c.lfcc.frame_ms = kv.get_double("lfcc.frame_ms", c.lfcc.frame_ms);
  c.lfcc.hop_ms = kv.get_double("lfcc.hop_ms", c.lfcc.hop_ms);
  c.lfcc.n_fft = static_cast<int>(kv.get_int("lfcc.n_fft", c.lfcc.n_fft));
  c.lfcc.n_filters = static_cast<int>(kv.get_int("lfcc.n_filters", c.lfcc.n_filters));
  c.lfcc.n_ceps = static_cast<int>(kv.get_int("lfcc.n_ceps", c.lfcc.n_ceps));
  c.lfcc.deltas = kv.get_bool("lfcc.deltas", c.lfcc.deltas);
  c.lfcc.delta_window = static_cast<int>(kv.get_int("lfcc.delta_window", c.lfcc.delta_window));
  c.validate();
  return c;
}

KvConfig model_config_to_kv(const ModelConfig& c) {
  KvConfig kv;
  kv.set("model.channels", fmt(c.channels));
  kv.set("model.freq", fmt(c.freq));
  kv.set("model.time", fmt(c.time));
  kv.set("model.raw_stem_channels", fmt(c.raw_stem_channels));
  kv.set("model.raw_blocks", blocks_str(c.raw_blocks));
  kv.set("model.power_stem_channels", fmt(c.power_stem_channels));
  kv.set("model.power_stem_kernel", fmt(c.power_stem_kernel));
  kv.set("model.power_stem_stride", pair_str(c.power_stem_stride));
  kv.set("model.power_pool", pair_str(c.power_pool));
  kv.set("model.power_blocks", blocks_str(c.power_blocks));
  kv.set("model.attention_hidden", fmt(c.attention_hidden));
  kv.set("model.decoder_channels", ints_str(c.decoder_channels));
  kv.set("model.head_attention_hidden", fmt(c.head_attention_hidden));
  kv.set("model.head_hidden", fmt(c.head_hidden));
  kv.set("model.fusion", to_string(c.fusion));
  kv.set("model.decoders", fmt(c.decoders_enabled));
  kv.set("model.init_seed", std::to_string(c.init_seed));
  kv.set("model.input_length", fmt(c.input_length));
  kv.set("sinc.n_filters", fmt(int64_t{c.sinc.n_filters}));
  kv.set("sinc.kernel_length", fmt(int64_t{c.sinc.kernel_length}));
  kv.set("sinc.min_hz", fmt(c.sinc.min_hz));
  kv.set("sinc.max_hz", fmt(c.sinc.max_hz));
  kv.set("sinc.stride", fmt(int64_t{c.sinc.stride}));
  kv.set("sinc.pool", fmt(int64_t{c.sinc.pool}));
  kv.set("sinc.learnable", fmt(c.sinc.learnable));
  kv.set("sinc.post", c.sinc.post == SincPost::kAbsMax ? "abs_max" : "abs");
  kv.set("lfcc.frame_ms", fmt(c.lfcc.frame_ms));
  kv.set("lfcc.hop_ms", fmt(c.lfcc.hop_ms));
  kv.set("lfcc.n_fft", fmt(int64_t{c.lfcc.n_fft}));
  kv.set("lfcc.n_filters", fmt(int64_t{c.lfcc.n_filters}));
  kv.set("lfcc.n_ceps", fmt(int64_t{c.lfcc.n_ceps}));
  kv.set("lfcc.deltas", fmt(c.lfcc.deltas));
  kv.set("lfcc.delta_window", fmt(int64_t{c.lfcc.delta_window}));
  return kv;
}

std::set<std::string> tdcf_params_keys() {
  return {"tdcf.c_miss_asv", "tdcf.c_fa_asv", "tdcf.c_miss_cm",  "tdcf.c_fa_cm",
          "tdcf.pi_tar",     "tdcf.pi_non",   "tdcf.pi_spoof",   "tdcf.p_miss_asv",
          "tdcf.p_fa_asv",   "tdcf.p_miss_spoof_asv"};
}

TdcfParams tdcf_params_from_kv(const KvConfig& kv) {
  TdcfParams p;
  p.c_miss_asv = kv.get_double("tdcf.c_miss_asv", p.c_miss_asv);
  p.c_fa_asv = kv.get_double("tdcf.c_fa_asv", p.c_fa_asv);
  p.c_miss_cm = kv.get_double("tdcf.c_miss_cm", p.c_miss_cm);
  p.c_fa_cm = kv.get_double("tdcf.c_fa_cm", p.c_fa_cm);
  p.pi_tar = kv.get_double("tdcf.pi_tar", p.pi_tar);
  p.pi_non = kv.get_double("tdcf.pi_non", p.pi_non);
  p.pi_spoof = kv.get_double("tdcf.pi_spoof", p.pi_spoof);
  p.p_miss_asv = kv.get_double("tdcf.p_miss_asv", p.p_miss_asv);
  p.p_fa_asv = kv.get_double("tdcf.p_fa_asv", p.p_fa_asv);
  p.p_miss_spoof_asv = kv.get_double("tdcf.p_miss_spoof_asv", p.p_miss_spoof_asv);
  p.validate();
  return p;
}

KvConfig tdcf_params_to_kv(const TdcfParams& p) {
  KvConfig kv;
  kv.set("tdcf.c_miss_asv", fmt(p.c_miss_asv));
  kv.set("tdcf.c_fa_asv", fmt(p.c_fa_asv));
  kv.set("tdcf.c_miss_cm", fmt(p.c_miss_cm));
  kv.set("tdcf.c_fa_cm", fmt(p.c_fa_cm));
  kv.set("tdcf.pi_tar", fmt(p.pi_tar));
  kv.set("tdcf.pi_non", fmt(p.pi_non));
  kv.set("tdcf.pi_spoof", fmt(p.pi_spoof));
  kv.set("tdcf.p_miss_asv", fmt(p.p_miss_asv));
  kv.set("tdcf.p_fa_asv", fmt(p.p_fa_asv));
  kv.set("tdcf.p_miss_spoof_asv", fmt(p.p_miss_spoof_asv));
  return kv;
}

std::set<std::string> toy_config_keys() {
  return {"toy.train_bonafide", "toy.train_spoof_per_attack", "toy.dev_bonafide", "toy.dev_spoof_per_attack",
          "toy.eval_bonafide",  "toy.eval_spoof_per_attack",  "toy.attacks",      "toy.length"};
}

ToyConfig toy_config_from_kv(const KvConfig& kv) {
  ToyConfig c;
  c.train.bonafide = kv.get_int("toy.train_bonafide", c.train.bonafide);
  c.train.spoof_per_attack = kv.get_int("toy.train_spoof_per_attack", c.train.spoof_per_attack);
  c.dev.bonafide = kv.get_int("toy.dev_bonafide", c.dev.bonafide);
  c.dev.spoof_per_attack = kv.get_int("toy.dev_spoof_per_attack", c.dev.spoof_per_attack);
  c.eval.bonafide = kv.get_int("toy.eval_bonafide", c.eval.bonafide);
  c.eval.spoof_per_attack = kv.get_int("toy.eval_spoof_per_attack", c.eval.spoof_per_attack);
  if (kv.has("toy.attacks")) c.attacks = split(kv.get("toy.attacks", ""), ',');
  c.length = kv.get_int("toy.length", c.length);
  c.validate();
  return c;
}

KvConfig toy_config_to_kv(const ToyConfig& c) {
  KvConfig kv;
  kv.set("toy.train_bonafide", fmt(c.train.bonafide));
  kv.set("toy.train_spoof_per_attack", fmt(c.train.spoof_per_attack));
  kv.set("toy.dev_bonafide", fmt(c.dev.bonafide));
  kv.set("toy.dev_spoof_per_attack", fmt(c.dev.spoof_per_attack));
  kv.set("toy.eval_bonafide", fmt(c.eval.bonafide));
  kv.set("toy.eval_spoof_per_attack", fmt(c.eval.spoof_per_attack));
  std::string attacks;
  for (size_t i = 0; i < c.attacks.size(); ++i) attacks += (i ? "," : "") + c.attacks[i];
  kv.set("toy.attacks", attacks);
  kv.set("toy.length", fmt(c.length));
  return kv;
}

}  // namespace s2pec
