#include <doctest.h>

#include <cmath>
#include <fstream>

#include "model_configs.hpp"
#include "s2pec/checkpoint.hpp"
#include "s2pec/error.hpp"
#include "s2pec/toy.hpp"
#include "s2pec/training.hpp"

using namespace s2pec;
using namespace s2pec::test;

namespace fs = std::filesystem;

namespace {

TrainConfig quick_config() {
  TrainConfig c;
  c.model = small_config();
  c.epochs = 2;
  c.batch_size = 6;
  c.lr = 2e-3;
  c.lr_floor = 1e-4;
  c.eval_batch_size = 8;
  c.seeds = {0};
  return c;
}

struct ToyData {
  TempDir dir{"train_toy"};
  Datasets data;
  ToyData() {
    ToyConfig t;
    t.train = {8, 4};
    t.dev = {6, 3};
    t.eval = {0, 0};
    t.length = 4000;
    auto parts = synth_toy_dataset(t, 9, dir.path());
    data.train = parts.at(Partition::kTrain);
    data.dev = parts.at(Partition::kDev);
  }
};

ToyData& toy() {
  static ToyData d;
  return d;
}

EvalReport stub_report(double eer, double tdcf) {
  EvalReport r;
  r.metrics_computed = true;
  r.eer = eer;
  r.min_tdcf = tdcf;
  return r;
}

std::vector<double> params_of(const nn::Module& m, const std::string& prefix) {
  std::vector<double> out;
  for (const auto& [name, p] : m.named_parameters()) {
    if (name.rfind(prefix, 0) == 0) out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return out;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("train config defaults, validation and key-value round trip") {
    TrainConfig d;
    CHECK(d.epochs == 100);
    CHECK(d.batch_size == 48);
    CHECK(d.lr == 3e-4);
    CHECK(d.alpha == 0.1);
    CHECK(d.model.fusion == FusionMode::kTsf);
    CHECK(d.model.decoders_enabled);

    TrainConfig bad;
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.lr = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.alpha = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);

    TrainConfig c = quick_config();
    c.class_weights = ClassWeights{0.7, 0.3};
    c.seeds = {4, 5};
    const TrainConfig back = train_config_from_kv(KvConfig::parse(train_config_to_kv(c).to_text()));
    CHECK(train_config_to_kv(back).values() == train_config_to_kv(c).values());
    CHECK(train_config_to_kv(c).unknown_keys(train_config_keys()).empty());
  }

  TEST_CASE("multi-seed aggregation") {
    const std::map<uint64_t, double> eers = {{1, 0.8}, {2, 1.0}, {3, 1.2}};
    const MultiSeedReport r = multi_seed({1, 2, 3}, [&](uint64_t s) { return stub_report(eers.at(s), 0.01 * eers.at(s)); });
    CHECK(r.succeeded == 3);
    CHECK(r.mean_eer == doctest::Approx(1.0));
    CHECK(r.best_eer == 0.8);
    CHECK(r.best_min_tdcf == doctest::Approx(0.008));

    const MultiSeedReport one = multi_seed({7}, [](uint64_t) { return stub_report(0.05, 0.1); });
    CHECK(one.mean_eer == one.best_eer);
    CHECK(one.mean_min_tdcf == one.best_min_tdcf);

    const MultiSeedReport partial = multi_seed({1, 2}, [](uint64_t s) {
      if (s == 2) throw TrainingAbort("diverged");
      return stub_report(0.2, 0.3);
    });
    CHECK(partial.succeeded == 1);
    CHECK_FALSE(partial.runs[1].ok);
    CHECK(partial.runs[1].error.find("diverged") != std::string::npos);
    CHECK(partial.mean_eer == 0.2);

    CHECK(format_mean_best(0.0084, 0.0077, true) == "0.84(0.77)");
    CHECK(format_mean_best(0.027, 0.024, false) == "0.027(0.024)");
    const auto j = to_json(r);
    CHECK(j.contains("mean_eer"));
    CHECK(j.contains("best_eer"));
    CHECK(j.contains("mean_min_tdcf"));
    CHECK(j.contains("best_min_tdcf"));
  }

  TEST_CASE("ablation presets") {
    const TrainConfig base = quick_config();
    std::vector<double> alphas;
    for (const auto& v : ablation_variants("alpha_sweep", base)) alphas.push_back(v.cfg.alpha);
    CHECK(alphas == std::vector<double>{1.0, 0.1, 0.01});

    auto runner = [](const AblationVariant&) { return multi_seed({0}, [](uint64_t) { return stub_report(0.1, 0.2); }); };
    const AblationTable nd = ablate("no_decoders", base, runner);
    REQUIRE(nd.rows.size() == 2);
    CHECK(nd.rows[0].changed.empty());
    REQUIRE(nd.rows[1].changed.size() == 1);
    CHECK(nd.rows[1].changed.begin()->first == "model.decoders");

    const AblationTable mod = ablate("modality", base, runner);
    REQUIRE(mod.rows.size() == 3);
    CHECK(mod.rows[0].name == "raw");
    CHECK(mod.rows[1].name == "power");
    CHECK(mod.rows[2].name == "fused");
    const std::string md = to_markdown(mod);
    CHECK(md.find("| metric | raw | power | fused |") != std::string::npos);

    for (const auto& p : ablation_presets()) CHECK_FALSE(ablation_variants(p, base).empty());
    CHECK_THROWS_AS(ablation_variants("everything", base), ConfigError);
  }

  TEST_CASE("evaluation of stub scores") {
    std::vector<ScoreRecord> perfect;
    for (const auto& r : records_from_manifest(toy().data.dev))
      perfect.push_back({r.utt_id, *r.label == Label::kBonafide ? 1.0 : -1.0, r.label, r.attack_id});
    const EvalReport e = evaluate_records(perfect, TdcfParams{});
    CHECK(e.metrics_computed);
    CHECK(e.eer == 0.0);
    CHECK(e.min_tdcf == 0.0);
    CHECK(e.per_attack_eer.size() == 2);

    std::vector<ScoreRecord> unlabeled = perfect;
    for (auto& r : unlabeled) r.label.reset();
    CHECK_FALSE(evaluate_records(unlabeled, TdcfParams{}).metrics_computed);
  }

  TEST_CASE("training run writes its artefacts and is reproducible") {
    TempDir a("run_a"), b("run_b");
    const TrainConfig cfg = quick_config();
    TrainOptions oa, ob;
    oa.out_dir = a.path();
    ob.out_dir = b.path();
    const TrainResult ra = train(cfg, 3, toy().data.train, toy().data.dev, oa);
    const TrainResult rb = train(cfg, 3, toy().data.train, toy().data.dev, ob);

    REQUIRE(ra.report.epochs.size() == 2);
    CHECK(ra.report.epochs[0].lr == doctest::Approx(cfg.lr).epsilon(1e-12));
    CHECK(ra.report.epochs[1].lr == doctest::Approx(cfg.lr_floor).epsilon(1e-12));
    CHECK(fs::exists(a.path() / "best.ckpt"));
    CHECK(fs::exists(a.path() / "metrics.jsonl"));
    CHECK(fs::exists(a.path() / "config.resolved.conf"));
    CHECK(ra.report.steps.size() == rb.report.steps.size());
    for (size_t i = 0; i < ra.report.steps.size(); ++i) CHECK(ra.report.steps[i].loss.total == rb.report.steps[i].loss.total);
    CHECK(read_file_bytes(a.path() / "metrics.jsonl").size() > 0);

    // evaluation determinism and checkpoint round trip
    std::vector<ScoreRecord> s1, s2, s3;
    const EvalReport e1 = evaluate(*ra.net, toy().data.dev, TdcfParams{}, &s1);
    const EvalReport e2 = evaluate(*ra.net, toy().data.dev, TdcfParams{}, &s2);
    CHECK(format_scores(s1) == format_scores(s2));
    CHECK(e1.eer == e2.eer);
    const LoadedCheckpoint loaded = load_checkpoint(a.path() / "best.ckpt");
    evaluate(*loaded.net, toy().data.dev, TdcfParams{}, &s3);
    CHECK(format_scores(s1) == format_scores(s3));
    CHECK(s1.size() == toy().data.dev.entries.size());
    for (size_t i = 0; i < s1.size(); ++i) CHECK(*s1[i].label == toy().data.dev.entries[i].key);

    // the resolved config reproduces the run, with the seed driving init
    const TrainConfig snap = train_config_from_kv(KvConfig::load(a.path() / "config.resolved.conf"));
    TrainConfig want = cfg;
    want.model.init_seed = 3;
    CHECK(train_config_to_kv(snap).values() == train_config_to_kv(want).values());
  }

  TEST_CASE("alpha zero leaves decoders untouched") {
    TrainConfig cfg = quick_config();
    cfg.alpha = 0.0;
    cfg.epochs = 1;
    ModelConfig init_cfg = cfg.model;
    init_cfg.init_seed = 1;  // train() seeds initialisation with the run seed
    const S2pecNet init(init_cfg);
    const TrainResult r = train(cfg, 1, toy().data.train, toy().data.dev);
    for (const auto& s : r.report.steps) {
      CHECK(s.loss.total == s.loss.l_cls);
      CHECK(s.loss.l_recon_raw > 0.0);
      CHECK(s.loss.l_recon_power > 0.0);
    }
    CHECK(params_of(*r.net, "raw_decoder.") == params_of(init, "raw_decoder."));
    CHECK(params_of(*r.net, "power_decoder.") == params_of(init, "power_decoder."));
    CHECK(params_of(*r.net, "head.") != params_of(init, "head."));
  }

  TEST_CASE("divergence aborts with a diagnostic dump") {
    TempDir dir("abort");
    TrainConfig cfg = quick_config();
    cfg.lr = 1e250;
    cfg.lr_floor = 1e249;
    cfg.epochs = 2;
    TrainOptions o;
    o.out_dir = dir.path();
    CHECK_THROWS_AS(train(cfg, 0, toy().data.train, toy().data.dev, o), TrainingAbort);
    CHECK(fs::exists(dir.path() / "abort_dump.json"));
  }

  TEST_CASE("state dict mismatch is rejected") {
    S2pecNet a(small_config());
    ModelConfig other = small_config();
    other.channels = 6;
    S2pecNet b(other);
    CHECK_THROWS_AS(load_state_dict(b, state_dict(a)), InputError);
    StateDict partial = state_dict(a);
    partial.pop_back();
    CHECK_THROWS_AS(load_state_dict(a, partial), InputError);
  }
}
