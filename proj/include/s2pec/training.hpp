#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2pec/data.hpp"
#include "s2pec/kvconfig.hpp"
#include "s2pec/losses.hpp"
#include "s2pec/metrics.hpp"
#include "s2pec/model.hpp"
#include "s2pec/optim.hpp"

namespace s2pec {

struct TrainConfig {
  ModelConfig model;
  int epochs = 100;
  int batch_size = 48;
  double lr = 3e-4;
  double lr_floor = 1e-6;
  double alpha = 0.1;
  ReconNorm recon_norm = ReconNorm::kL1;
  // Unset: inverse class frequency of the training manifest.
  std::optional<ClassWeights> class_weights;
  std::vector<uint64_t> seeds = {0, 1, 2};
  bool random_crop = true;     // random-offset crop of long training clips
  bool cache_features = true;  // keep deterministic features in memory
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8, weight_decay = 0.0;
  int eval_batch_size = 32;
  TdcfParams tdcf;

  void validate() const;
};

TrainConfig train_config_from_kv(const KvConfig& kv);
KvConfig train_config_to_kv(const TrainConfig& cfg);
std::set<std::string> train_config_keys();

struct StepRecord {
  int epoch = 0;
  int64_t step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double mean_total = 0.0;
  double mean_recon_raw = 0.0;
  double mean_recon_power = 0.0;
  double mean_cls = 0.0;
  double dev_eer = 0.0;
  double dev_min_tdcf = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;
  double best_dev_eer = 1.0;
  std::string config_hash;
  std::filesystem::path checkpoint;  // empty unless an output directory was given
};

struct TrainResult {
  TrainReport report;
  std::unique_ptr<S2pecNet> net;  // best-dev parameters, eval mode
};

struct TrainOptions {
  std::filesystem::path out_dir;     // checkpoint, metrics stream; empty = in-memory only
  bool log_steps = true;             // step records in the metrics stream
  std::function<void(const std::string&)> progress;  // human-readable progress lines
};

// Trains one model with `seed` controlling initialisation, shuffling and
// crops. Selects the epoch with the lowest dev EER.
TrainResult train(const TrainConfig& cfg, uint64_t seed, const Manifest& train_set, const Manifest& dev_set,
                  const TrainOptions& opts = {});

struct EvalReport {
  bool metrics_computed = false;
  double eer = 0.0;
  double eer_threshold = 0.0;
  double min_tdcf = 0.0;
  double tdcf_threshold = 0.0;
  std::map<std::string, double> per_attack_eer;
  uint64_t seed = 0;
  std::string checkpoint_id;
  std::string config_hash;
  int64_t scored = 0;
  std::vector<std::string> errors;  // per-utterance failures
};

nlohmann::json to_json(const EvalReport& r);
nlohmann::json to_json(const TrainReport& r);

// Eval-mode logits for already-loaded waveforms, in batches.
std::vector<double> score_waveforms(const S2pecNet& net, const std::vector<Waveform>& waves, int batch_size = 32);

// Scores every manifest entry (head crop). Labels come from the manifest;
// records of entries whose audio cannot be loaded are omitted and listed in
// report.errors.
EvalReport evaluate(const S2pecNet& net, const Manifest& m, const TdcfParams& tdcf,
                    std::vector<ScoreRecord>* scores = nullptr, int batch_size = 32);
EvalReport evaluate_records(const std::vector<ScoreRecord>& records, const TdcfParams& tdcf);

struct SeedOutcome {
  uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EvalReport report;
};

struct MultiSeedReport {
  std::vector<SeedOutcome> runs;
  double mean_eer = 0.0, best_eer = 0.0;
  double mean_min_tdcf = 0.0, best_min_tdcf = 0.0;
  int succeeded = 0;
};

// "mean(best)" with EER in percent (2 d.p.) and t-DCF to 3 d.p.
std::string format_mean_best(double mean, double best, bool percent);
nlohmann::json to_json(const MultiSeedReport& r);

using SeedRunner = std::function<EvalReport(uint64_t seed)>;
// Runs every seed; a throwing run is recorded as failed and excluded from
// the aggregates.
MultiSeedReport multi_seed(const std::vector<uint64_t>& seeds, const SeedRunner& run);

struct Datasets {
  Manifest train, dev;
  std::optional<Manifest> eval;  // metrics on dev when absent
};

// Train + evaluate per seed, with per-seed output directories under out_dir.
MultiSeedReport multi_seed(const TrainConfig& cfg, const Datasets& data, const TrainOptions& opts = {});

struct AblationVariant {
  std::string name;
  TrainConfig cfg;
};

struct AblationRow {
  std::string name;
  std::map<std::string, std::string> changed;  // config keys differing from the base
  MultiSeedReport result;
};

struct AblationTable {
  std::string preset;
  std::vector<AblationRow> rows;
};

// Presets: alpha_sweep, no_decoders, raw_only, power_only, concat, modality.
std::vector<std::string> ablation_presets();
std::vector<AblationVariant> ablation_variants(const std::string& preset, const TrainConfig& base);

using VariantRunner = std::function<MultiSeedReport(const AblationVariant&)>;
AblationTable ablate(const std::string& preset, const TrainConfig& base, const VariantRunner& run);
AblationTable ablate(const std::string& preset, const TrainConfig& base, const Datasets& data,
                     const TrainOptions& opts = {});

nlohmann::json to_json(const AblationTable& t);
std::string to_markdown(const AblationTable& t);

}  // namespace s2pec
