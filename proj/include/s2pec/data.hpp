#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "s2pec/metrics.hpp"

namespace s2pec {

struct ProtocolEntry {
  std::string speaker_id;
  std::string utt_id;
  std::string system_id = "-";  // third protocol field, carried but unused
  std::string attack_id = "-";
  Label key = Label::kBonafide;

  bool operator==(const ProtocolEntry&) const = default;
};

enum class Partition { kTrain, kDev, kEval };

std::string to_string(Partition p);
Partition partition_from_string(const std::string& s);

struct Manifest {
  Partition partition = Partition::kTrain;
  std::vector<ProtocolEntry> entries;
  std::filesystem::path audio_root;
};

// Five whitespace-delimited fields per line: speaker utt system attack key.
// Blank lines are skipped. Malformed lines are collected and reported
// together in one InputError; an empty file is an InputError as well.
std::vector<ProtocolEntry> parse_protocol_text(const std::string& text, const std::string& source = "<text>");
std::vector<ProtocolEntry> parse_protocol(const std::filesystem::path& path);
std::string serialize_protocol(const std::vector<ProtocolEntry>& entries);

struct PartitionStats {
  int64_t bonafide = 0;
  int64_t spoof = 0;
  std::map<std::string, int64_t> per_attack;  // spoof counts keyed by attack id

  bool operator==(const PartitionStats&) const = default;
};

PartitionStats partition_stats(const Manifest& m);
PartitionStats partition_stats(const std::vector<ProtocolEntry>& entries);

// Audio lookup: <root>/<utt>.flac, <root>/<utt>.wav, then the same under
// <root>/flac and <root>/wav.
std::optional<std::filesystem::path> resolve_audio(const Manifest& m, const ProtocolEntry& e);

// Manifest cache: a JSON document with partition, audio_root and entries.
void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

// Loads either a manifest cache (.json) or a protocol file paired with an
// audio root.
Manifest load_manifest(const std::filesystem::path& path, const std::filesystem::path& audio_root,
                       Partition partition);

struct DataFinding {
  std::string kind;  // missing_audio, undecodable_audio, label_attack_mismatch, duplicate_utt
  std::string utt_id;
  std::string detail;
};

struct DataReport {
  int64_t entries = 0;
  int64_t resolved = 0;
  PartitionStats stats;
  double min_seconds = 0.0, max_seconds = 0.0, mean_seconds = 0.0;
  std::vector<DataFinding> findings;
};

DataReport check_data(const Manifest& m);
std::string to_json(const DataReport& r);

std::vector<ScoreRecord> records_from_manifest(const Manifest& m);

}  // namespace s2pec
