#include "s2pec/commands.hpp"

#include <cstdlib>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <json.hpp>

#include "s2pec/audio.hpp"
#include "s2pec/checkpoint.hpp"
#include "s2pec/error.hpp"
#include "s2pec/gradcam.hpp"
#include "s2pec/kvconfig.hpp"
#include "s2pec/toy.hpp"
#include "s2pec/training.hpp"

namespace s2pec {

namespace fs = std::filesystem;
using nlohmann::json;

Archive extract_features(const Manifest& m, const ModelConfig& cfg) {
  S2pecNet net(cfg);
  net.set_training(false);
  NoGradGuard ng;
  Archive a;
  a.format = kFeatureFormat;
  a.meta["model"] = model_config_to_kv(cfg).values();
  a.meta["partition"] = to_string(m.partition);
  json utts = json::array(), errors = json::array();
  for (const auto& e : m.entries) {
    try {
      const auto path = resolve_audio(m, e);
      if (!path) throw InputError("missing audio");
      const Waveform w = load_waveform(*path, cfg.input_length);
      const RawSpectrogram raw = sinc_frontend(w, net.frontend());
      const PowerSpectrogram power = lfcc(w, cfg.lfcc);
      a.arrays.push_back({e.utt_id + "/raw", raw.values.shape(),
                          std::vector<double>(raw.values.values().begin(), raw.values.values().end())});
      a.arrays.push_back({e.utt_id + "/power", power.values.shape(),
                          std::vector<double>(power.values.values().begin(), power.values.values().end())});
      utts.push_back(e.utt_id);
    } catch (const InputError& ex) {
      errors.push_back({{"utt_id", e.utt_id}, {"error", ex.what()}});
    }
  }
  a.meta["utterances"] = utts;
  a.meta["errors"] = errors;
  return a;
}

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

std::set<std::string> data_keys() {
  return {"data.dir",          "data.train_protocol", "data.train_audio", "data.dev_protocol",
          "data.dev_audio",    "data.eval_protocol",  "data.eval_audio",  "toy.seed"};
}

KvConfig resolve_config(const Common& c) {
  KvConfig kv;
  std::string path = c.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("S2PEC_CONFIG")) path = env;
  }
  if (!path.empty()) kv = KvConfig::load(path);
  for (const auto& o : c.overrides) kv.apply_override(o);
  std::set<std::string> known = train_config_keys();
  for (const auto& k : toy_config_keys()) known.insert(k);
  for (const auto& k : data_keys()) known.insert(k);
  const auto unknown = kv.unknown_keys(known);
  if (!unknown.empty()) {
    std::string msg = "unknown config key(s):";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  return kv;
}

void write_snapshot(const fs::path& dir, const KvConfig& kv, const std::vector<std::string>& args) {
  std::string cmd;
  for (const auto& a : args) cmd += (cmd.empty() ? "" : " ") + a;
  write_text_atomic(dir / "config.resolved.conf", "# s2pec " + cmd + "\n" + kv.to_text());
}

// Flags override data.* keys; a data directory in the synth-data layout
// fills whatever is still unset.
struct DataFlags {
  std::string dir, train_protocol, train_audio, dev_protocol, dev_audio, eval_protocol, eval_audio;

  void add(CLI::App* app, bool with_train) {
    app->add_option("--data-dir", dir, "Dataset directory in the synth-data layout");
    if (with_train) {
      app->add_option("--train-protocol", train_protocol, "Training protocol file or manifest");
      app->add_option("--train-audio", train_audio, "Training audio directory");
    }
    app->add_option("--dev-protocol", dev_protocol, "Development protocol file or manifest");
    app->add_option("--dev-audio", dev_audio, "Development audio directory");
    app->add_option("--eval-protocol", eval_protocol, "Evaluation protocol file or manifest");
    app->add_option("--eval-audio", eval_audio, "Evaluation audio directory");
  }

  void apply(KvConfig& kv) const {
    auto put = [&](const char* key, const std::string& v) {
      if (!v.empty()) kv.set(key, v);
    };
    put("data.dir", dir);
    put("data.train_protocol", train_protocol);
    put("data.train_audio", train_audio);
    put("data.dev_protocol", dev_protocol);
    put("data.dev_audio", dev_audio);
    put("data.eval_protocol", eval_protocol);
    put("data.eval_audio", eval_audio);
  }
};

std::optional<Manifest> manifest_from_kv(const KvConfig& kv, Partition p, bool required) {
  const std::string name = to_string(p);
  std::string proto = kv.get("data." + name + "_protocol", "");
  std::string audio = kv.get("data." + name + "_audio", "");
  const std::string dir = kv.get("data.dir", "");
  if (!dir.empty()) {
    if (proto.empty() && fs::exists(toy_protocol_path(dir, p))) proto = toy_protocol_path(dir, p).string();
    if (audio.empty()) audio = (fs::path(dir) / name / "audio").string();
  }
  if (proto.empty()) {
    if (required) throw ConfigError("no " + name + " protocol (set --" + name + "-protocol or --data-dir)");
    return std::nullopt;
  }
  return load_manifest(proto, audio, p);
}

Datasets datasets_from_kv(const KvConfig& kv) {
  Datasets d;
  d.train = *manifest_from_kv(kv, Partition::kTrain, true);
  d.dev = *manifest_from_kv(kv, Partition::kDev, true);
  d.eval = manifest_from_kv(kv, Partition::kEval, false);
  return d;
}

int cmd_synth(const KvConfig& kv, const fs::path& out_dir, uint64_t seed, std::ostream& out) {
  const ToyConfig cfg = toy_config_from_kv(kv);
  const auto parts = synth_toy_dataset(cfg, seed, out_dir);
  json j = json::object();
  for (const auto& [p, m] : parts) {
    const auto s = partition_stats(m);
    j[to_string(p)] = {{"bonafide", s.bonafide}, {"spoof", s.spoof}, {"per_attack", s.per_attack}};
  }
  out << j.dump(2) << "\n";
  return 0;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-spectrogram audio anti-spoofing toolkit", "s2pec"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("-c,--config", common.config_path, "Config file (default: $S2PEC_CONFIG)");
  app.add_option("--set", common.overrides, "Override a config key: key=value (repeatable)")
      ->allow_extra_args(false);

  std::string out_path;
  uint64_t seed = 0;
  bool seed_given = false;

  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic toy dataset");
  synth->add_option("-o,--out", out_path, "Output directory")->required();
  synth->add_option("--seed", seed, "Generation seed");

  auto* extract = app.add_subcommand("extract-features", "Dump raw and power spectrograms");
  std::string protocol, audio_root, partition = "eval";
  extract->add_option("--protocol", protocol, "Protocol file or manifest")->required();
  extract->add_option("--audio-root", audio_root, "Audio directory");
  extract->add_option("--partition", partition, "train, dev or eval");
  extract->add_option("-o,--out", out_path, "Output feature file")->required();

  auto* train_cmd = app.add_subcommand("train", "Train one model per seed with best-dev selection");
  DataFlags train_data;
  train_data.add(train_cmd, true);
  train_cmd->add_option("-o,--out", out_path, "Output directory")->required();
  train_cmd->add_option("--seed", seed, "Train a single seed instead of train.seeds")
      ->each([&](const std::string&) { seed_given = true; });

  auto* eval_cmd = app.add_subcommand("evaluate", "Score a labeled manifest and compute metrics");
  std::string checkpoint, scores_in;
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file");
  eval_cmd->add_option("--scores", scores_in, "Evaluate an existing score file instead of a checkpoint");
  eval_cmd->add_option("--protocol", protocol, "Protocol file or manifest");
  eval_cmd->add_option("--audio-root", audio_root, "Audio directory");
  eval_cmd->add_option("--partition", partition, "train, dev or eval");
  eval_cmd->add_option("-o,--out", out_path, "Output directory")->required();

  auto* score_cmd = app.add_subcommand("score", "Emit `utt_id score` lines for audio files or a manifest");
  std::vector<std::string> files;
  score_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  score_cmd->add_option("--protocol", protocol, "Protocol file or manifest (alternative to files)");
  score_cmd->add_option("--audio-root", audio_root, "Audio directory for --protocol");
  score_cmd->add_option("-o,--out", out_path, "Output score file")->required();
  score_cmd->add_option("files", files, "Audio files");

  auto* ablate_cmd = app.add_subcommand("ablate", "Run an ablation preset");
  std::string preset;
  ablate_cmd->add_option("preset", preset, "alpha_sweep, no_decoders, raw_only, power_only, concat, modality")
      ->required();
  DataFlags ablate_data;
  ablate_data.add(ablate_cmd, true);
  ablate_cmd->add_option("-o,--out", out_path, "Output directory")->required();

  auto* cam_cmd = app.add_subcommand("gradcam", "Grad-CAM saliency on both spectrograms");
  std::string audio_file, target = "spoof";
  cam_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  cam_cmd->add_option("--audio", audio_file, "Audio file")->required();
  cam_cmd->add_option("--target", target, "spoof or bonafide")->check(CLI::IsMember({"spoof", "bonafide"}));
  cam_cmd->add_option("-o,--out", out_path, "Output directory")->required();

  auto* check_cmd = app.add_subcommand("check-data", "Validate a manifest against its audio");
  check_cmd->add_option("--protocol", protocol, "Protocol file or manifest")->required();
  check_cmd->add_option("--audio-root", audio_root, "Audio directory");
  check_cmd->add_option("--partition", partition, "train, dev or eval");
  check_cmd->add_option("-o,--out", out_path, "Write the JSON report here as well");

  std::vector<const char*> argv{"s2pec"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\nRun with --help for usage.\n";
    return 2;
  }

  KvConfig kv = resolve_config(common);
  auto progress = [&err](const std::string& s) { err << s << "\n"; };

  if (synth->parsed()) {
    if (!kv.has("toy.seed") || synth->count("--seed")) kv.set("toy.seed", std::to_string(seed));
    const uint64_t s = kv.get_u64("toy.seed", 0);
    fs::create_directories(out_path);
    write_snapshot(out_path, kv, args);
    return cmd_synth(kv, out_path, s, out);
  }

  if (extract->parsed()) {
    const ModelConfig mc = model_config_from_kv(kv);
    const Manifest m = load_manifest(protocol, audio_root, partition_from_string(partition));
    const Archive a = extract_features(m, mc);
    write_archive(out_path, a);
    if (fs::path(out_path).has_parent_path()) write_snapshot(fs::path(out_path).parent_path(), kv, args);
    out << json({{"utterances", a.meta["utterances"].size()}, {"errors", a.meta["errors"]}}).dump(2) << "\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    train_data.apply(kv);
    TrainConfig cfg = train_config_from_kv(kv);
    if (seed_given) cfg.seeds = {seed};
    const Datasets data = datasets_from_kv(kv);
    fs::create_directories(out_path);
    write_snapshot(out_path, kv, args);
    TrainOptions opts;
    opts.out_dir = out_path;
    opts.progress = progress;
    const MultiSeedReport r = multi_seed(cfg, data, opts);
    const json j = to_json(r);
    write_text_atomic(fs::path(out_path) / "summary.json", j.dump(2) + "\n");
    out << j.dump(2) << "\n";
    return r.succeeded > 0 ? 0 : 3;
  }

  if (eval_cmd->parsed()) {
    const TdcfParams tdcf = tdcf_params_from_kv(kv);
    fs::create_directories(out_path);
    write_snapshot(out_path, kv, args);
    EvalReport r;
    std::vector<ScoreRecord> scores;
    if (!scores_in.empty()) {
      scores = read_score_file(scores_in);
      r = evaluate_records(scores, tdcf);
    } else {
      if (checkpoint.empty() || protocol.empty()) {
        throw ConfigError("evaluate needs --checkpoint and --protocol, or --scores");
      }
      auto ck = load_checkpoint(checkpoint);
      const Manifest m = load_manifest(protocol, audio_root, partition_from_string(partition));
      r = evaluate(*ck.net, m, tdcf, &scores, static_cast<int>(kv.get_int("train.eval_batch_size", 32)));
      r.checkpoint_id = checkpoint;
      r.config_hash = ck.info.value("config_hash", "");
      r.seed = ck.info.value("seed", uint64_t{0});
    }
    write_score_file(fs::path(out_path) / "scores.txt", scores);
    const json j = to_json(r);
    write_text_atomic(fs::path(out_path) / "report.json", j.dump(2) + "\n");
    out << j.dump(2) << "\n";
    for (const auto& e : r.errors) err << "error " << e << "\n";
    return 0;
  }

  if (score_cmd->parsed()) {
    auto ck = load_checkpoint(checkpoint);
    const int64_t len = ck.net->config().input_length;
    std::vector<std::pair<std::string, fs::path>> inputs;
    if (!protocol.empty()) {
      const Manifest m = load_manifest(protocol, audio_root, Partition::kEval);
      for (const auto& e : m.entries) {
        const auto p = resolve_audio(m, e);
        inputs.emplace_back(e.utt_id, p ? *p : m.audio_root / e.utt_id);
      }
    }
    for (const auto& f : files) inputs.emplace_back(fs::path(f).stem().string(), f);
    if (inputs.empty()) throw ConfigError("score needs audio files or --protocol");
    std::vector<Waveform> waves;
    std::vector<std::string> ids;
    int failures = 0;
    for (const auto& [id, path] : inputs) {
      try {
        waves.push_back(load_waveform(path, len));
        ids.push_back(id);
      } catch (const InputError& ex) {
        err << "error " << id << " " << path.string() << ": " << ex.what() << "\n";
        ++failures;
      }
    }
    std::vector<ScoreRecord> records;
    if (!waves.empty()) {
      const auto s = score_waveforms(*ck.net, waves, static_cast<int>(kv.get_int("train.eval_batch_size", 32)));
      for (size_t i = 0; i < s.size(); ++i) records.push_back({ids[i], s[i], std::nullopt, "-"});
    }
    write_score_file(out_path, records);
    if (fs::path(out_path).has_parent_path()) write_snapshot(fs::path(out_path).parent_path(), kv, args);
    if (records.empty()) {
      err << "error: no input could be scored\n";
      return 1;
    }
    if (failures > 0) err << "warning: " << failures << " of " << inputs.size() << " input(s) failed\n";
    return 0;
  }

  if (ablate_cmd->parsed()) {
    ablate_data.apply(kv);
    const TrainConfig cfg = train_config_from_kv(kv);
    const Datasets data = datasets_from_kv(kv);
    fs::create_directories(out_path);
    write_snapshot(out_path, kv, args);
    TrainOptions opts;
    opts.out_dir = out_path;
    opts.progress = progress;
    const AblationTable t = ablate(preset, cfg, data, opts);
    write_text_atomic(fs::path(out_path) / "ablation.json", to_json(t).dump(2) + "\n");
    const std::string md = to_markdown(t);
    write_text_atomic(fs::path(out_path) / "ablation.md", md);
    out << md;
    return 0;
  }

  if (cam_cmd->parsed()) {
    auto ck = load_checkpoint(checkpoint);
    const Waveform raw = load_audio(audio_file);
    const int64_t min_len = std::max<int64_t>(ck.net->config().lfcc.frame_samples(), ck.net->config().sinc.kernel_length);
    if (raw.length() < min_len) {
      throw InputError(audio_file + " has " + std::to_string(raw.length()) + " samples; at least " +
                       std::to_string(min_len) + " are needed");
    }
    const Waveform w = load_waveform(audio_file, ck.net->config().input_length);
    const GradCamResult r = grad_cam(*ck.net, w, target == "spoof" ? CamTarget::kSpoof : CamTarget::kBonafide);
    fs::create_directories(out_path);
    write_snapshot(out_path, kv, args);
    const std::string prefix = fs::path(audio_file).stem().string();
    const auto written = write_grad_cam(r, out_path, prefix);
    json j = {{"logit", r.logit},
              {"raw_upper_third_mass", upper_third_mass(r.raw)},
              {"power_upper_third_mass", upper_third_mass(r.power)},
              {"files", json::array()}};
    for (const auto& p : written) j["files"].push_back(p.string());
    write_text_atomic(fs::path(out_path) / (prefix + "_gradcam.json"), j.dump(2) + "\n");
    out << j.dump(2) << "\n";
    return 0;
  }

  if (check_cmd->parsed()) {
    const Manifest m = load_manifest(protocol, audio_root, partition_from_string(partition));
    const DataReport r = check_data(m);
    const std::string j = to_json(r);
    if (!out_path.empty()) {
      write_text_atomic(out_path, j + "\n");
      if (fs::path(out_path).has_parent_path()) write_snapshot(fs::path(out_path).parent_path(), kv, args);
    }
    out << j << "\n";
    return 0;
  }
  return 3;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const InputError& e) {
    err << "input error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace s2pec
