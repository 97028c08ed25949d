#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace s2pec {

enum class Label { kBonafide, kSpoof };

std::string to_string(Label l);
Label label_from_string(const std::string& s);

struct ScoreRecord {
  std::string utt_id;
  double score = 0.0;  // higher => bona fide
  std::optional<Label> label;
  std::string attack_id = "-";
};

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

// Requires at least one bona fide and one spoof record (InputError
// otherwise). Records without a label are ignored.
EerResult compute_eer(const std::vector<ScoreRecord>& records);

// Score-level variant used by the ASV operating-point helper.
EerResult compute_eer(const std::vector<double>& bonafide, const std::vector<double>& spoof);

struct TdcfParams {
  double c_miss_asv = 1.0;
  double c_fa_asv = 10.0;
  double c_miss_cm = 1.0;
  double c_fa_cm = 10.0;
  double pi_tar = 0.9405;
  double pi_non = 0.0095;
  double pi_spoof = 0.05;
  // ASV operating point: miss rate on targets, false-alarm rate on
  // non-targets and false-accept rate on spoofs.
  double p_miss_asv = 0.0243;
  double p_fa_asv = 0.0243;
  double p_miss_spoof_asv = 0.2931;

  // ConfigError on non-positive priors, priors not summing to one, rates
  // outside [0, 1] or a degenerate normaliser.
  void validate() const;
};

// Sets the ASV operating point from ASV scores at the ASV EER threshold.
TdcfParams with_asv_scores(TdcfParams p, const std::vector<double>& target, const std::vector<double>& nontarget,
                           const std::vector<double>& spoof);

struct TdcfResult {
  double min_tdcf = 0.0;
  double threshold = 0.0;
};

TdcfResult compute_min_tdcf(const std::vector<ScoreRecord>& records, const TdcfParams& p = {});

// EER per attack id over all bona fide records pooled with that attack's
// spoof records. Attacks with no trials are omitted.
std::map<std::string, double> per_attack_breakdown(const std::vector<ScoreRecord>& records);

// `utt_id attack_id label score` per labeled record, `utt_id score` for
// unlabeled ones. Scores are written in shortest round-trip form.
std::string format_scores(const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> parse_scores(const std::string& text);
void write_score_file(const std::filesystem::path& path, const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> read_score_file(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace s2pec
