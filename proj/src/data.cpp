#include "s2pec/data.hpp"

#include <set>
#include <sstream>

#include <json.hpp>

#include "s2pec/audio.hpp"
#include "s2pec/error.hpp"

namespace s2pec {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Partition p) {
  switch (p) {
    case Partition::kTrain: return "train";
    case Partition::kDev: return "dev";
    case Partition::kEval: return "eval";
  }
  return "train";
}

Partition partition_from_string(const std::string& s) {
  if (s == "train") return Partition::kTrain;
  if (s == "dev") return Partition::kDev;
  if (s == "eval") return Partition::kEval;
  throw ConfigError("unknown partition '" + s + "' (train, dev, eval)");
}

std::vector<ProtocolEntry> parse_protocol_text(const std::string& text, const std::string& source) {
  std::vector<ProtocolEntry> out;
  std::vector<std::string> problems;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<std::string> f;
    for (std::string tok; ls >> tok;) f.push_back(tok);
    if (f.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    if (f.size() != 5) {
      problems.push_back(where + ": expected 5 fields, got " + std::to_string(f.size()));
      continue;
    }
    if (f[4] != "bonafide" && f[4] != "spoof") {
      problems.push_back(where + ": key must be bonafide or spoof, got '" + f[4] + "'");
      continue;
    }
    out.push_back({f[0], f[1], f[2], f[3], label_from_string(f[4])});
  }
  if (!problems.empty()) {
    std::string msg = "malformed protocol lines:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw InputError(msg);
  }
  if (out.empty()) throw InputError("empty protocol: " + source);
  return out;
}

std::vector<ProtocolEntry> parse_protocol(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_protocol_text(std::string(bytes.begin(), bytes.end()), path.string());
}

std::string serialize_protocol(const std::vector<ProtocolEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += e.speaker_id + ' ' + e.utt_id + ' ' + e.system_id + ' ' + e.attack_id + ' ' + to_string(e.key) + '\n';
  }
  return out;
}

PartitionStats partition_stats(const std::vector<ProtocolEntry>& entries) {
  PartitionStats s;
  for (const auto& e : entries) {
    if (e.key == Label::kBonafide) {
      ++s.bonafide;
    } else {
      ++s.spoof;
      ++s.per_attack[e.attack_id];
    }
  }
  return s;
}

PartitionStats partition_stats(const Manifest& m) { return partition_stats(m.entries); }

std::optional<fs::path> resolve_audio(const Manifest& m, const ProtocolEntry& e) {
  for (const char* sub : {"", "flac", "wav"}) {
    for (const char* ext : {".flac", ".wav"}) {
      fs::path p = m.audio_root / sub / (e.utt_id + ext);
      std::error_code ec;
      if (fs::is_regular_file(p, ec)) return p;
    }
  }
  return std::nullopt;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  json j;
  j["format"] = "s2pec-manifest-v1";
  j["partition"] = to_string(m.partition);
  j["audio_root"] = m.audio_root.string();
  json entries = json::array();
  for (const auto& e : m.entries) {
    entries.push_back({e.speaker_id, e.utt_id, e.system_id, e.attack_id, to_string(e.key)});
  }
  j["entries"] = std::move(entries);
  write_text_atomic(path, j.dump(1) + "\n");
}

Manifest read_manifest(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  json j;
  try {
    j = json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& ex) {
    throw InputError("manifest " + path.string() + ": " + ex.what());
  }
  if (j.value("format", "") != "s2pec-manifest-v1") throw InputError("not a manifest file: " + path.string());
  Manifest m;
  m.partition = partition_from_string(j.at("partition").get<std::string>());
  m.audio_root = j.at("audio_root").get<std::string>();
  for (const auto& e : j.at("entries")) {
    m.entries.push_back({e.at(0).get<std::string>(), e.at(1).get<std::string>(), e.at(2).get<std::string>(),
                         e.at(3).get<std::string>(), label_from_string(e.at(4).get<std::string>())});
  }
  return m;
}

Manifest load_manifest(const fs::path& path, const fs::path& audio_root, Partition partition) {
  if (path.extension() == ".json") {
    Manifest m = read_manifest(path);
    if (!audio_root.empty()) m.audio_root = audio_root;
    return m;
  }
  Manifest m;
  m.partition = partition;
  m.entries = parse_protocol(path);
  m.audio_root = audio_root;
  return m;
}

DataReport check_data(const Manifest& m) {
  DataReport r;
  r.entries = static_cast<int64_t>(m.entries.size());
  r.stats = partition_stats(m);
  std::set<std::string> seen;
  double total = 0.0;
  bool first = true;
  for (const auto& e : m.entries) {
    if (!seen.insert(e.utt_id).second) r.findings.push_back({"duplicate_utt", e.utt_id, "utt_id repeated"});
    const bool bona = e.key == Label::kBonafide;
    if (bona != (e.attack_id == "-")) {
      r.findings.push_back({"label_attack_mismatch", e.utt_id,
                            "key " + to_string(e.key) + " with attack '" + e.attack_id +
                                "' violates bonafide <=> attack '-'"});
    }
    const auto path = resolve_audio(m, e);
    if (!path) {
      r.findings.push_back({"missing_audio", e.utt_id, "no audio under " + m.audio_root.string()});
      continue;
    }
    try {
      const DecodedAudio a = decode_audio_file(*path);
      const double secs = a.channels.empty() || a.sample_rate <= 0
                              ? 0.0
                              : static_cast<double>(a.channels[0].size()) / a.sample_rate;
      if (secs <= 0.0) throw InputError("zero-length audio");
      ++r.resolved;
      total += secs;
      r.min_seconds = first ? secs : std::min(r.min_seconds, secs);
      r.max_seconds = first ? secs : std::max(r.max_seconds, secs);
      first = false;
    } catch (const std::exception& ex) {
      r.findings.push_back({"undecodable_audio", e.utt_id, ex.what()});
    }
  }
  if (r.resolved > 0) r.mean_seconds = total / static_cast<double>(r.resolved);
  return r;
}

std::string to_json(const DataReport& r) {
  json j;
  j["entries"] = r.entries;
  j["resolved"] = r.resolved;
  j["bonafide"] = r.stats.bonafide;
  j["spoof"] = r.stats.spoof;
  j["per_attack"] = r.stats.per_attack;
  j["duration_seconds"] = {{"min", r.min_seconds}, {"max", r.max_seconds}, {"mean", r.mean_seconds}};
  json f = json::array();
  for (const auto& x : r.findings) f.push_back({{"kind", x.kind}, {"utt_id", x.utt_id}, {"detail", x.detail}});
  j["issues"] = r.findings.size();
  j["findings"] = std::move(f);
  return j.dump(2);
}

std::vector<ScoreRecord> records_from_manifest(const Manifest& m) {
  std::vector<ScoreRecord> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) out.push_back({e.utt_id, 0.0, e.key, e.attack_id});
  return out;
}

}  // namespace s2pec
