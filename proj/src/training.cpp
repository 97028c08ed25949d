#include "s2pec/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "s2pec/audio.hpp"
#include "s2pec/checkpoint.hpp"
#include "s2pec/error.hpp"

namespace s2pec {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// TrainConfig
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  model.validate();
  if (epochs <= 0) throw ConfigError("train.epochs must be positive");
  if (batch_size <= 0) throw ConfigError("train.batch_size must be positive");
  if (eval_batch_size <= 0) throw ConfigError("train.eval_batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be > 0");
  if (!(lr_floor >= 0.0) || lr_floor > lr) throw ConfigError("train.lr_floor must lie in [0, lr]");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("train.alpha must be >= 0");
  if (seeds.empty()) throw ConfigError("train.seeds must list at least one seed");
  if (class_weights && (!(class_weights->bonafide >= 0.0) || !(class_weights->spoof >= 0.0))) {
    throw ConfigError("train.class_weights must be non-negative");
  }
  tdcf.validate();
}

std::set<std::string> train_config_keys() {
  std::set<std::string> keys = {"train.epochs",     "train.batch_size",    "train.lr",
                                "train.lr_floor",   "train.alpha",         "train.recon_norm",
                                "train.class_weights", "train.seeds",      "train.random_crop",
                                "train.cache_features", "train.beta1",     "train.beta2",
                                "train.adam_eps",   "train.weight_decay",  "train.eval_batch_size"};
  for (const auto& k : model_config_keys()) keys.insert(k);
  for (const auto& k : tdcf_params_keys()) keys.insert(k);
  return keys;
}

TrainConfig train_config_from_kv(const KvConfig& kv) {
  TrainConfig c;
  c.model = model_config_from_kv(kv);
  c.tdcf = tdcf_params_from_kv(kv);
  c.epochs = static_cast<int>(kv.get_int("train.epochs", c.epochs));
  c.batch_size = static_cast<int>(kv.get_int("train.batch_size", c.batch_size));
  c.lr = kv.get_double("train.lr", c.lr);
  c.lr_floor = kv.get_double("train.lr_floor", c.lr_floor);
  c.alpha = kv.get_double("train.alpha", c.alpha);
  c.recon_norm = recon_norm_from_string(kv.get("train.recon_norm", to_string(c.recon_norm)));
  const std::string w = kv.get("train.class_weights", "auto");
  if (w != "auto") {
    const auto comma = w.find(',');
    if (comma == std::string::npos) throw ConfigError("train.class_weights must be 'auto' or 'w_bonafide,w_spoof'");
    KvConfig tmp;
    tmp.set("a", w.substr(0, comma));
    tmp.set("b", w.substr(comma + 1));
    c.class_weights = ClassWeights{tmp.get_double("a", 0.0), tmp.get_double("b", 0.0)};
  }
  if (kv.has("train.seeds")) {
    c.seeds.clear();
    std::string s = kv.get("train.seeds", "");
    size_t pos = 0;
    while (pos <= s.size()) {
      const size_t comma = std::min(s.find(',', pos), s.size());
      KvConfig tmp;
      tmp.set("train.seeds", s.substr(pos, comma - pos));
      c.seeds.push_back(tmp.get_u64("train.seeds", 0));
      pos = comma + 1;
    }
  }
  c.random_crop = kv.get_bool("train.random_crop", c.random_crop);
  c.cache_features = kv.get_bool("train.cache_features", c.cache_features);
  c.beta1 = kv.get_double("train.beta1", c.beta1);
  c.beta2 = kv.get_double("train.beta2", c.beta2);
  c.adam_eps = kv.get_double("train.adam_eps", c.adam_eps);
  c.weight_decay = kv.get_double("train.weight_decay", c.weight_decay);
  c.eval_batch_size = static_cast<int>(kv.get_int("train.eval_batch_size", c.eval_batch_size));
  c.validate();
  return c;
}

KvConfig train_config_to_kv(const TrainConfig& c) {
  KvConfig kv = model_config_to_kv(c.model);
  kv.merge(tdcf_params_to_kv(c.tdcf));
  kv.set("train.epochs", std::to_string(c.epochs));
  kv.set("train.batch_size", std::to_string(c.batch_size));
  kv.set("train.lr", format_double(c.lr));
  kv.set("train.lr_floor", format_double(c.lr_floor));
  kv.set("train.alpha", format_double(c.alpha));
  kv.set("train.recon_norm", to_string(c.recon_norm));
  kv.set("train.class_weights", c.class_weights ? format_double(c.class_weights->bonafide) + "," +
                                                      format_double(c.class_weights->spoof)
                                                : "auto");
  std::string seeds;
  for (size_t i = 0; i < c.seeds.size(); ++i) seeds += (i ? "," : "") + std::to_string(c.seeds[i]);
  kv.set("train.seeds", seeds);
  kv.set("train.random_crop", c.random_crop ? "true" : "false");
  kv.set("train.cache_features", c.cache_features ? "true" : "false");
  kv.set("train.beta1", format_double(c.beta1));
  kv.set("train.beta2", format_double(c.beta2));
  kv.set("train.adam_eps", format_double(c.adam_eps));
  kv.set("train.weight_decay", format_double(c.weight_decay));
  kv.set("train.eval_batch_size", std::to_string(c.eval_batch_size));
  return kv;
}

// ---------------------------------------------------------------------------
// Feature bank
// ---------------------------------------------------------------------------

namespace {

struct BatchInput {
  Tensor raw, power;
  std::vector<double> y;
};

// Loads audio on demand and keeps features that cannot change (LFCC always,
// sinc output when the front-end is frozen) for utterances whose crop is
// deterministic.
class FeatureBank {
 public:
  FeatureBank(const Manifest& m, const ModelConfig& mc, bool cache, bool strict) : mc_(mc), cache_(cache) {
    std::vector<std::string> missing;
    for (const auto& e : m.entries) {
      auto p = resolve_audio(m, e);
      if (!p) {
        missing.push_back(e.utt_id);
        continue;
      }
      items_.push_back({e, *p, -1, {}, {}});
    }
    if (!missing.empty()) {
      std::string msg = std::to_string(missing.size()) + " utterance(s) without audio under " +
                        m.audio_root.string() + ", e.g. " + missing.front();
      if (strict) throw InputError(msg);
      for (const auto& u : missing) errors_.push_back(u + ": missing audio");
    }
  }

  size_t size() const { return items_.size(); }
  const ProtocolEntry& entry(size_t i) const { return items_[i].entry; }
  const std::vector<std::string>& errors() const { return errors_; }

  // crop_seed == nullopt selects the deterministic head crop.
  BatchInput batch(const S2pecNet& net, const std::vector<size_t>& idx, std::optional<uint64_t> crop_seed) {
    BatchInput in;
    std::vector<Waveform> waves(idx.size());
    std::vector<const Waveform*> wp;
    const bool need_raw = mc_.uses_raw(), need_power = mc_.uses_power();
    const bool learnable = mc_.sinc.learnable;
    for (size_t k = 0; k < idx.size(); ++k) {
      Item& it = items_[idx[k]];
      const bool fixed = crop_seed == std::nullopt || (it.native_len >= 0 && it.native_len <= mc_.input_length);
      const bool have_power = !need_power || (fixed && it.power.defined());
      const bool have_raw = !need_raw || (!learnable && fixed && it.raw.defined());
      if (!have_power || !have_raw || (need_raw && learnable)) {
        Waveform w = load_audio(it.path);
        it.native_len = w.length();
        std::optional<Rng> rng;
        if (crop_seed) rng.emplace(Rng::derived(*crop_seed, static_cast<uint64_t>(idx[k])));
        w.samples = fit_length(w.samples, mc_.input_length, crop_seed ? CropMode::kRandom : CropMode::kHead,
                               rng ? &*rng : nullptr);
        waves[k] = std::move(w);
      }
      in.y.push_back(it.entry.key == Label::kBonafide ? 1.0 : 0.0);
    }
    for (auto& w : waves) wp.push_back(&w);

    if (need_power) {
      std::vector<Tensor> specs(idx.size());
      std::vector<const Tensor*> ptrs;
      for (size_t k = 0; k < idx.size(); ++k) {
        Item& it = items_[idx[k]];
        const bool fixed = crop_seed == std::nullopt || it.native_len <= mc_.input_length;
        if (it.power.defined() && fixed) {
          specs[k] = it.power;
        } else {
          specs[k] = lfcc(waves[k], mc_.lfcc).values;
          if (cache_ && fixed) it.power = specs[k];
        }
        ptrs.push_back(&specs[k]);
      }
      in.power = stack_spectrograms(ptrs);
    }
    if (need_raw) {
      if (learnable) {
        in.raw = net.raw_features(waveform_batch(wp));
      } else {
        std::vector<Tensor> specs(idx.size());
        std::vector<const Tensor*> ptrs;
        for (size_t k = 0; k < idx.size(); ++k) {
          Item& it = items_[idx[k]];
          const bool fixed = crop_seed == std::nullopt || it.native_len <= mc_.input_length;
          if (it.raw.defined() && fixed) {
            specs[k] = it.raw;
          } else {
            NoGradGuard ng;
            Tensor y = net.raw_features(waveform_batch({&waves[k]}));
            specs[k] = reshape(y, {y.dim(2), y.dim(3)});
            if (cache_ && fixed) it.raw = specs[k];
          }
          ptrs.push_back(&specs[k]);
        }
        in.raw = stack_spectrograms(ptrs);
      }
    }
    return in;
  }

 private:
  struct Item {
    ProtocolEntry entry;
    fs::path path;
    int64_t native_len;
    Tensor power, raw;
  };
  ModelConfig mc_;
  bool cache_;
  std::vector<Item> items_;
  std::vector<std::string> errors_;
};

std::vector<ScoreRecord> score_bank(const S2pecNet& net, FeatureBank& bank, int batch_size,
                                    std::vector<std::string>* errors) {
  if (net.training()) throw ContractError("scoring requires an eval-mode model");
  NoGradGuard ng;
  std::vector<ScoreRecord> out;
  const size_t n = bank.size();
  for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
    std::vector<size_t> idx;
    for (size_t i = start; i < std::min(n, start + static_cast<size_t>(batch_size)); ++i) idx.push_back(i);
    std::vector<double> logits;
    std::vector<size_t> kept;
    try {
      BatchInput in = bank.batch(net, idx, std::nullopt);
      const Tensor logit = net.forward_features(in.raw, in.power).logit;
      const auto l = logit.values();
      logits.assign(l.begin(), l.end());
      kept = idx;
    } catch (const std::exception&) {
      // Fall back to one utterance at a time to isolate bad files.
      for (size_t i : idx) {
        try {
          BatchInput in = bank.batch(net, {i}, std::nullopt);
          logits.push_back(net.forward_features(in.raw, in.power).logit.item());
          kept.push_back(i);
        } catch (const std::exception& ex) {
          if (!errors) throw;
          errors->push_back(bank.entry(i).utt_id + ": " + ex.what());
        }
      }
    }
    for (size_t k = 0; k < kept.size(); ++k) {
      const auto& e = bank.entry(kept[k]);
      out.push_back({e.utt_id, logits[k], e.key, e.attack_id});
    }
  }
  return out;
}

void fill_metrics(EvalReport& r, const std::vector<ScoreRecord>& records, const TdcfParams& tdcf) {
  r.scored = static_cast<int64_t>(records.size());
  int64_t nb = 0, ns = 0;
  for (const auto& s : records) {
    if (!s.label) continue;
    (*s.label == Label::kBonafide ? nb : ns)++;
  }
  if (nb == 0 || ns == 0) return;
  const auto eer = compute_eer(records);
  const auto dcf = compute_min_tdcf(records, tdcf);
  r.metrics_computed = true;
  r.eer = eer.eer;
  r.eer_threshold = eer.threshold;
  r.min_tdcf = dcf.min_tdcf;
  r.tdcf_threshold = dcf.threshold;
  r.per_attack_eer = per_attack_breakdown(records);
}

class MetricsStream {
 public:
  explicit MetricsStream(const fs::path& path) {
    if (path.empty()) return;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, std::ios::trunc);
    if (!out_) throw InputError("cannot write " + path.string());
  }
  void write(const json& j) {
    if (!out_.is_open()) return;
    out_ << j.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

json breakdown_json(const LossBreakdown& b) {
  return {{"l_recon_raw", b.l_recon_raw}, {"l_recon_power", b.l_recon_power}, {"l_cls", b.l_cls},
          {"alpha", b.alpha},             {"total", b.total}};
}

double param_norm(const S2pecNet& net) {
  double acc = 0.0;
  for (const auto& p : net.parameters()) {
    for (double v : p.values()) acc += v * v;
  }
  return std::sqrt(acc);
}

}  // namespace

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainResult train(const TrainConfig& cfg, uint64_t seed, const Manifest& train_set, const Manifest& dev_set,
                  const TrainOptions& opts) {
  cfg.validate();
  ModelConfig mc = cfg.model;
  mc.init_seed = seed;
  auto net = std::make_unique<S2pecNet>(mc);
  net->set_training(true);

  FeatureBank train_bank(train_set, mc, cfg.cache_features, true);
  FeatureBank dev_bank(dev_set, mc, cfg.cache_features, true);
  if (train_bank.size() == 0) throw InputError("training manifest is empty");

  const PartitionStats stats = partition_stats(train_set);
  const ClassWeights w = cfg.class_weights ? *cfg.class_weights
                                           : inverse_frequency_weights(static_cast<double>(stats.bonafide),
                                                                       static_cast<double>(stats.spoof));

  KvConfig resolved = train_config_to_kv(cfg);
  resolved.set("model.init_seed", std::to_string(seed));
  TrainReport report;
  report.seed = seed;
  report.config_hash = config_hash(resolved);

  MetricsStream stream(opts.out_dir.empty() ? fs::path() : opts.out_dir / "metrics.jsonl");
  if (!opts.out_dir.empty()) {
    write_text_atomic(opts.out_dir / "config.resolved.conf", resolved.to_text());
  }
  auto progress = [&](const std::string& s) {
    if (opts.progress) opts.progress(s);
  };

  AdamConfig ac;
  ac.lr = cfg.lr;
  ac.beta1 = cfg.beta1;
  ac.beta2 = cfg.beta2;
  ac.eps = cfg.adam_eps;
  ac.weight_decay = cfg.weight_decay;
  Adam opt(net->parameters(), ac);

  StateDict best;
  int64_t step = 0;
  const size_t n = train_bank.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = cosine_annealing_lr(cfg.lr, cfg.lr_floor, epoch, cfg.epochs);
    opt.set_lr(lr);
    net->set_training(true);

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng shuffle = Rng::derived(seed, 0x5348554600000000ull + static_cast<uint64_t>(epoch));
    for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    const uint64_t crop_seed = Rng::derived(seed, 0x43524f5000000000ull + static_cast<uint64_t>(epoch)).next_u64();

    EpochRecord er;
    er.epoch = epoch;
    er.lr = lr;
    int batches = 0;
    for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size)) {
      std::vector<size_t> idx(order.begin() + static_cast<int64_t>(start),
                              order.begin() + static_cast<int64_t>(std::min(n, start + cfg.batch_size)));
      BatchInput in = train_bank.batch(*net, idx, cfg.random_crop ? std::optional<uint64_t>(crop_seed)
                                                                  : std::nullopt);
      ModelOutput out = net->forward_features(in.raw, in.power);
      Tensor loss = wbce_logits(out.logit, in.y, w.bonafide, w.spoof);
      const double lcls = loss.item();
      double l1 = 0.0, l2 = 0.0;
      if (out.recon_raw && out.recon_power) {
        Tensor r1 = recon_loss(*out.recon_raw, out.raw_input.detach(), cfg.recon_norm);
        Tensor r2 = recon_loss(*out.recon_power, out.power_input.detach(), cfg.recon_norm);
        l1 = r1.item();
        l2 = r2.item();
        if (cfg.alpha > 0.0) loss = loss + (r1 + r2) * cfg.alpha;
      }
      LossBreakdown b;
      try {
        b = total_loss(l1, l2, lcls, cfg.alpha);
      } catch (const TrainingAbort& ex) {
        json dump = {{"epoch", epoch}, {"step", step}, {"lr", lr}, {"error", ex.what()},
                     {"param_norm", param_norm(*net)}};
        json utts = json::array();
        for (size_t i : idx) utts.push_back(train_bank.entry(i).utt_id);
        dump["batch"] = utts;
        if (!opts.out_dir.empty()) write_text_atomic(opts.out_dir / "abort_dump.json", dump.dump(2) + "\n");
        stream.write({{"type", "abort"}, {"seed", seed}, {"diagnostic", dump}});
        throw;
      }
      loss.backward();
      opt.step();
      opt.zero_grad();

      report.steps.push_back({epoch, step, lr, b});
      if (opts.log_steps) {
        json j = {{"type", "step"}, {"seed", seed}, {"epoch", epoch}, {"step", step}, {"lr", lr}};
        j.update(breakdown_json(b));
        stream.write(j);
      }
      er.mean_total += b.total;
      er.mean_recon_raw += b.l_recon_raw;
      er.mean_recon_power += b.l_recon_power;
      er.mean_cls += b.l_cls;
      ++batches;
      ++step;
    }
    er.mean_total /= batches;
    er.mean_recon_raw /= batches;
    er.mean_recon_power /= batches;
    er.mean_cls /= batches;

    net->set_training(false);
    EvalReport dev;
    fill_metrics(dev, score_bank(*net, dev_bank, cfg.eval_batch_size, nullptr), cfg.tdcf);
    er.dev_eer = dev.eer;
    er.dev_min_tdcf = dev.min_tdcf;
    er.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.epochs.push_back(er);

    if (dev.metrics_computed && (report.best_epoch < 0 || dev.eer < report.best_dev_eer)) {
      report.best_epoch = epoch;
      report.best_dev_eer = dev.eer;
      best = state_dict(*net);
      if (!opts.out_dir.empty()) {
        report.checkpoint = opts.out_dir / "best.ckpt";
        save_checkpoint(report.checkpoint, *net,
                        {{"seed", seed}, {"epoch", epoch}, {"dev_eer", dev.eer}, {"config_hash", report.config_hash}});
      }
    }
    stream.write({{"type", "epoch"},
                  {"seed", seed},
                  {"epoch", epoch},
                  {"lr", lr},
                  {"mean_total", er.mean_total},
                  {"mean_l_recon_raw", er.mean_recon_raw},
                  {"mean_l_recon_power", er.mean_recon_power},
                  {"mean_l_cls", er.mean_cls},
                  {"dev_eer", er.dev_eer},
                  {"dev_min_tdcf", er.dev_min_tdcf},
                  {"best_epoch", report.best_epoch},
                  {"seconds", er.seconds}});
    char line[200];
    std::snprintf(line, sizeof(line), "seed %llu epoch %d/%d lr %.3g loss %.4f dev EER %.4f min t-DCF %.4f (%.1fs)",
                  static_cast<unsigned long long>(seed), epoch + 1, cfg.epochs, lr, er.mean_total, er.dev_eer,
                  er.dev_min_tdcf, er.seconds);
    progress(line);
  }
  if (report.best_epoch < 0) {
    // Dev set without both classes: keep the final parameters.
    report.best_epoch = cfg.epochs - 1;
    if (!opts.out_dir.empty()) {
      report.checkpoint = opts.out_dir / "best.ckpt";
      save_checkpoint(report.checkpoint, *net, {{"seed", seed}, {"epoch", report.best_epoch},
                                                {"config_hash", report.config_hash}});
    }
  } else {
    load_state_dict(*net, best);
  }
  net->set_training(false);
  return {std::move(report), std::move(net)};
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

std::vector<double> score_waveforms(const S2pecNet& net, const std::vector<Waveform>& waves, int batch_size) {
  if (net.training()) throw ContractError("scoring requires an eval-mode model");
  NoGradGuard ng;
  std::vector<double> out;
  for (size_t start = 0; start < waves.size(); start += static_cast<size_t>(batch_size)) {
    std::vector<const Waveform*> ptrs;
    for (size_t i = start; i < std::min(waves.size(), start + static_cast<size_t>(batch_size)); ++i) {
      ptrs.push_back(&waves[i]);
    }
    const Tensor logit = net.forward(ptrs).logit;
    const auto l = logit.values();
    out.insert(out.end(), l.begin(), l.end());
  }
  return out;
}

EvalReport evaluate(const S2pecNet& net, const Manifest& m, const TdcfParams& tdcf, std::vector<ScoreRecord>* scores,
                    int batch_size) {
  FeatureBank bank(m, net.config(), false, false);
  EvalReport r;
  r.errors = bank.errors();
  auto records = score_bank(net, bank, batch_size, &r.errors);
  fill_metrics(r, records, tdcf);
  if (scores) *scores = std::move(records);
  return r;
}

EvalReport evaluate_records(const std::vector<ScoreRecord>& records, const TdcfParams& tdcf) {
  EvalReport r;
  fill_metrics(r, records, tdcf);
  return r;
}

json to_json(const EvalReport& r) {
  json j = {{"metrics_computed", r.metrics_computed}, {"scored", r.scored},
            {"seed", r.seed},                         {"checkpoint_id", r.checkpoint_id},
            {"config_hash", r.config_hash}};
  if (r.metrics_computed) {
    j["eer"] = r.eer;
    j["eer_threshold"] = r.eer_threshold;
    j["min_tdcf"] = r.min_tdcf;
    j["tdcf_threshold"] = r.tdcf_threshold;
    j["per_attack_eer"] = r.per_attack_eer;
  }
  j["errors"] = r.errors;
  return j;
}

json to_json(const TrainReport& r) {
  json epochs = json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"lr", e.lr},
                      {"mean_total", e.mean_total},
                      {"mean_l_recon_raw", e.mean_recon_raw},
                      {"mean_l_recon_power", e.mean_recon_power},
                      {"mean_l_cls", e.mean_cls},
                      {"dev_eer", e.dev_eer},
                      {"dev_min_tdcf", e.dev_min_tdcf},
                      {"seconds", e.seconds}});
  }
  return {{"seed", r.seed},
          {"best_epoch", r.best_epoch},
          {"best_dev_eer", r.best_dev_eer},
          {"config_hash", r.config_hash},
          {"checkpoint", r.checkpoint.string()},
          {"steps", r.steps.size()},
          {"epochs", epochs}};
}

// ---------------------------------------------------------------------------
// Multi-seed
// ---------------------------------------------------------------------------

std::string format_mean_best(double mean, double best, bool percent) {
  char buf[64];
  if (percent) {
    std::snprintf(buf, sizeof(buf), "%.2f(%.2f)", 100.0 * mean, 100.0 * best);
  } else {
    std::snprintf(buf, sizeof(buf), "%.3f(%.3f)", mean, best);
  }
  return buf;
}

MultiSeedReport multi_seed(const std::vector<uint64_t>& seeds, const SeedRunner& run) {
  if (seeds.empty()) throw ConfigError("multi_seed needs at least one seed");
  MultiSeedReport r;
  double sum_eer = 0.0, sum_dcf = 0.0;
  r.best_eer = std::numeric_limits<double>::infinity();
  r.best_min_tdcf = std::numeric_limits<double>::infinity();
  for (uint64_t s : seeds) {
    SeedOutcome o;
    o.seed = s;
    try {
      o.report = run(s);
      o.report.seed = s;
      o.ok = o.report.metrics_computed;
      if (!o.ok) o.error = "metrics not computed";
    } catch (const std::exception& ex) {
      o.ok = false;
      o.error = ex.what();
    }
    if (o.ok) {
      ++r.succeeded;
      sum_eer += o.report.eer;
      sum_dcf += o.report.min_tdcf;
      r.best_eer = std::min(r.best_eer, o.report.eer);
      r.best_min_tdcf = std::min(r.best_min_tdcf, o.report.min_tdcf);
    }
    r.runs.push_back(std::move(o));
  }
  if (r.succeeded > 0) {
    r.mean_eer = sum_eer / r.succeeded;
    r.mean_min_tdcf = sum_dcf / r.succeeded;
  } else {
    r.best_eer = r.best_min_tdcf = std::numeric_limits<double>::quiet_NaN();
    r.mean_eer = r.mean_min_tdcf = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

MultiSeedReport multi_seed(const TrainConfig& cfg, const Datasets& data, const TrainOptions& opts) {
  return multi_seed(cfg.seeds, [&](uint64_t seed) {
    TrainOptions o = opts;
    if (!opts.out_dir.empty()) o.out_dir = opts.out_dir / ("seed_" + std::to_string(seed));
    TrainResult tr = train(cfg, seed, data.train, data.dev, o);
    const Manifest& target = data.eval ? *data.eval : data.dev;
    std::vector<ScoreRecord> scores;
    EvalReport r = evaluate(*tr.net, target, cfg.tdcf, &scores, cfg.eval_batch_size);
    r.seed = seed;
    r.config_hash = tr.report.config_hash;
    r.checkpoint_id = tr.report.checkpoint.empty()
                          ? "seed" + std::to_string(seed) + "@epoch" + std::to_string(tr.report.best_epoch)
                          : tr.report.checkpoint.string();
    if (!o.out_dir.empty()) {
      write_score_file(o.out_dir / ("scores." + to_string(target.partition) + ".txt"), scores);
      json j = to_json(r);
      j["train"] = to_json(tr.report);
      write_text_atomic(o.out_dir / "report.json", j.dump(2) + "\n");
    }
    return r;
  });
}

json to_json(const MultiSeedReport& r) {
  json runs = json::array();
  for (const auto& o : r.runs) {
    json j = {{"seed", o.seed}, {"ok", o.ok}};
    if (!o.error.empty()) j["error"] = o.error;
    if (o.ok) j["report"] = to_json(o.report);
    runs.push_back(j);
  }
  json j = {{"succeeded", r.succeeded}, {"failed", static_cast<int>(r.runs.size()) - r.succeeded}, {"runs", runs}};
  if (r.succeeded > 0) {
    j["mean_eer"] = r.mean_eer;
    j["best_eer"] = r.best_eer;
    j["mean_min_tdcf"] = r.mean_min_tdcf;
    j["best_min_tdcf"] = r.best_min_tdcf;
    j["eer_display"] = format_mean_best(r.mean_eer, r.best_eer, true);
    j["min_tdcf_display"] = format_mean_best(r.mean_min_tdcf, r.best_min_tdcf, false);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

std::vector<std::string> ablation_presets() {
  return {"alpha_sweep", "no_decoders", "raw_only", "power_only", "concat", "modality"};
}

std::vector<AblationVariant> ablation_variants(const std::string& preset, const TrainConfig& base) {
  std::vector<AblationVariant> v;
  auto with_fusion = [&](const std::string& name, FusionMode m) {
    AblationVariant a{name, base};
    a.cfg.model.fusion = m;
    v.push_back(a);
  };
  if (preset == "alpha_sweep") {
    for (double a : {1.0, 0.1, 0.01}) {
      AblationVariant x{"alpha=" + format_double(a), base};
      x.cfg.alpha = a;
      v.push_back(x);
    }
  } else if (preset == "no_decoders") {
    AblationVariant on{"with_decoders", base};
    on.cfg.model.decoders_enabled = true;
    AblationVariant off{"without_decoders", base};
    off.cfg.model.decoders_enabled = false;
    v.push_back(on);
    v.push_back(off);
  } else if (preset == "raw_only") {
    with_fusion("raw", FusionMode::kRawOnly);
    with_fusion("fused", FusionMode::kTsf);
  } else if (preset == "power_only") {
    with_fusion("power", FusionMode::kPowerOnly);
    with_fusion("fused", FusionMode::kTsf);
  } else if (preset == "concat") {
    with_fusion("concatenation", FusionMode::kConcat);
    with_fusion("tsf", FusionMode::kTsf);
  } else if (preset == "modality") {
    with_fusion("raw", FusionMode::kRawOnly);
    with_fusion("power", FusionMode::kPowerOnly);
    with_fusion("fused", FusionMode::kTsf);
  } else {
    std::string all;
    for (const auto& p : ablation_presets()) all += (all.empty() ? "" : ", ") + p;
    throw ConfigError("unknown ablation preset '" + preset + "' (" + all + ")");
  }
  return v;
}

AblationTable ablate(const std::string& preset, const TrainConfig& base, const VariantRunner& run) {
  base.validate();
  const auto variants = ablation_variants(preset, base);
  const auto base_kv = train_config_to_kv(base).values();
  AblationTable t;
  t.preset = preset;
  for (const auto& v : variants) {
    AblationRow row;
    row.name = v.name;
    const KvConfig kv = train_config_to_kv(v.cfg);
    for (const auto& [k, val] : kv.values()) {
      auto it = base_kv.find(k);
      if (it == base_kv.end() || it->second != val) row.changed[k] = val;
    }
    row.result = run(v);
    t.rows.push_back(std::move(row));
  }
  return t;
}

AblationTable ablate(const std::string& preset, const TrainConfig& base, const Datasets& data,
                     const TrainOptions& opts) {
  return ablate(preset, base, [&](const AblationVariant& v) {
    TrainOptions o = opts;
    if (!opts.out_dir.empty()) o.out_dir = opts.out_dir / v.name;
    if (o.progress) o.progress("variant " + v.name);
    return multi_seed(v.cfg, data, o);
  });
}

json to_json(const AblationTable& t) {
  json rows = json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"name", r.name}, {"changed", r.changed}, {"result", to_json(r.result)}});
  }
  return {{"preset", t.preset}, {"rows", rows}};
}

std::string to_markdown(const AblationTable& t) {
  auto cell = [](const MultiSeedReport& r, bool eer) {
    if (r.succeeded == 0) return std::string("n/a");
    return eer ? format_mean_best(r.mean_eer, r.best_eer, true) : format_mean_best(r.mean_min_tdcf, r.best_min_tdcf, false);
  };
  std::string out;
  if (t.preset == "modality" || t.preset == "raw_only" || t.preset == "power_only") {
    // One column per input representation.
    out += "| metric |";
    for (const auto& r : t.rows) out += " " + r.name + " |";
    out += "\n|---|";
    for (size_t i = 0; i < t.rows.size(); ++i) out += "---|";
    out += "\n| EER (%) |";
    for (const auto& r : t.rows) out += " " + cell(r.result, true) + " |";
    out += "\n| min t-DCF |";
    for (const auto& r : t.rows) out += " " + cell(r.result, false) + " |";
    out += "\n";
    std::set<std::string> attacks;
    for (const auto& r : t.rows) {
      for (const auto& o : r.result.runs) {
        for (const auto& [a, e] : o.report.per_attack_eer) attacks.insert(a);
      }
    }
    for (const auto& a : attacks) {
      out += "| " + a + " EER (%) |";
      for (const auto& r : t.rows) {
        double sum = 0.0;
        int n = 0;
        for (const auto& o : r.result.runs) {
          auto it = o.report.per_attack_eer.find(a);
          if (o.ok && it != o.report.per_attack_eer.end()) {
            sum += it->second;
            ++n;
          }
        }
        char buf[32];
        if (n > 0) {
          std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * sum / n);
        } else {
          std::snprintf(buf, sizeof(buf), "n/a");
        }
        out += std::string(" ") + buf + " |";
      }
      out += "\n";
    }
    return out;
  }
  out += "| variant | changed | EER (%) | min t-DCF |\n|---|---|---|---|\n";
  for (const auto& r : t.rows) {
    std::string changed;
    for (const auto& [k, v] : r.changed) changed += (changed.empty() ? "" : ", ") + k + "=" + v;
    if (changed.empty()) changed = "(base)";
    out += "| " + r.name + " | " + changed + " | " + cell(r.result, true) + " | " + cell(r.result, false) + " |\n";
  }
  return out;
}

}  // namespace s2pec
