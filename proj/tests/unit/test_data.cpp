#include <doctest.h>

#include <cmath>
#include <fstream>

#include "s2pec/archive.hpp"
#include "s2pec/audio.hpp"
#include "s2pec/data.hpp"
#include "s2pec/error.hpp"
#include "s2pec/features.hpp"
#include "s2pec/kvconfig.hpp"
#include "s2pec/toy.hpp"
#include "support.hpp"

using namespace s2pec;
using s2pec::test::TempDir;

namespace fs = std::filesystem;

namespace {

std::vector<ProtocolEntry> random_entries(Rng& rng, int n) {
  std::vector<ProtocolEntry> out;
  for (int i = 0; i < n; ++i) {
    ProtocolEntry e;
    e.speaker_id = "SPK" + std::to_string(rng.below(50));
    e.utt_id = "UTT_" + std::to_string(i) + "_" + std::to_string(rng.below(100000));
    e.system_id = rng.below(3) == 0 ? "-" : "SYS" + std::to_string(rng.below(9));
    e.key = rng.below(2) == 0 ? Label::kBonafide : Label::kSpoof;
    e.attack_id = e.key == Label::kBonafide ? "-" : "A" + std::to_string(1 + rng.below(19));
    out.push_back(e);
  }
  return out;
}

ToyConfig small_toy() {
  ToyConfig c;
  c.train = {6, 3};
  c.dev = {4, 2};
  c.eval = {0, 0};
  c.length = 4000;
  return c;
}

// Utterance-level mean of every LFCC row.
std::vector<double> lfcc_means(const std::vector<double>& x) {
  Waveform w;
  w.samples = x;
  const PowerSpectrogram p = lfcc(w);
  std::vector<double> m(static_cast<size_t>(p.bins()), 0.0);
  for (int64_t r = 0; r < p.bins(); ++r) {
    for (int64_t t = 0; t < p.frames(); ++t) m[static_cast<size_t>(r)] += p.values.at({r, t});
    m[static_cast<size_t>(r)] /= static_cast<double>(p.frames());
  }
  return m;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("protocol field mapping") {
    const auto e = parse_protocol_text("SPK01 UTT001 - - bonafide\nSPK02 UTT002 - A07 spoof\n");
    REQUIRE(e.size() == 2);
    CHECK(e[0].key == Label::kBonafide);
    CHECK(e[0].attack_id == "-");
    CHECK(e[1].speaker_id == "SPK02");
    CHECK(e[1].key == Label::kSpoof);
    CHECK(e[1].attack_id == "A07");
  }

  TEST_CASE("malformed protocol lines are reported together") {
    try {
      parse_protocol_text("A B - - bonafide\nA C - spoof\n\nA D - A01 fake\nA E - A01 spoof\n", "p.txt");
      FAIL("expected InputError");
    } catch (const InputError& ex) {
      const std::string msg = ex.what();
      CHECK(msg.find("p.txt:2") != std::string::npos);
      CHECK(msg.find("p.txt:4") != std::string::npos);
      CHECK(msg.find("p.txt:1") == std::string::npos);
      CHECK(msg.find("p.txt:5") == std::string::npos);
    }
    CHECK_THROWS_AS(parse_protocol_text("\n  \n"), InputError);
    TempDir dir("proto");
    write_text_atomic(dir.path() / "empty.txt", "");
    CHECK_THROWS_AS(parse_protocol(dir.path() / "empty.txt"), InputError);
    CHECK_THROWS_AS(parse_protocol(dir.path() / "absent.txt"), InputError);
  }

  TEST_CASE("protocol round trip is identity") {
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
      const auto e = random_entries(rng, 1 + static_cast<int>(rng.below(40)));
      CHECK(parse_protocol_text(serialize_protocol(e)) == e);
    }
  }

  TEST_CASE("partition stats") {
    const auto e = parse_protocol_text("S U1 - - bonafide\nS U2 - A01 spoof\nS U3 - A01 spoof\nS U4 - A02 spoof\n");
    const PartitionStats s = partition_stats(e);
    CHECK(s.bonafide == 1);
    CHECK(s.spoof == 3);
    CHECK(s.per_attack.at("A01") == 2);
    CHECK(s.per_attack.at("A02") == 1);
    const PartitionStats z = partition_stats(Manifest{});
    CHECK(z.bonafide == 0);
    CHECK(z.spoof == 0);
    CHECK(z.per_attack.empty());
  }

  TEST_CASE("manifest cache round trip") {
    TempDir dir("manifest");
    Rng rng(2);
    Manifest m;
    m.partition = Partition::kDev;
    m.audio_root = dir.path() / "audio";
    m.entries = random_entries(rng, 12);
    write_manifest(dir.path() / "m.json", m);
    const Manifest back = read_manifest(dir.path() / "m.json");
    CHECK(back.partition == Partition::kDev);
    CHECK(back.audio_root == m.audio_root);
    CHECK(back.entries == m.entries);
    const Manifest via = load_manifest(dir.path() / "m.json", {}, Partition::kTrain);
    CHECK(via.entries == m.entries);
    CHECK(partition_from_string(to_string(Partition::kEval)) == Partition::kEval);
  }

  TEST_CASE("toy dataset is deterministic and self-consistent") {
    TempDir a("toy_a"), b("toy_b");
    const ToyConfig cfg = small_toy();
    const auto ma = synth_toy_dataset(cfg, 42, a.path());
    synth_toy_dataset(cfg, 42, b.path());
    for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
      if (!entry.is_regular_file()) continue;
      const fs::path rel = fs::relative(entry.path(), a.path());
      CAPTURE(rel.string());
      CHECK(read_file_bytes(entry.path()) == read_file_bytes(b.path() / rel));
    }
    const auto train = parse_protocol(toy_protocol_path(a.path(), Partition::kTrain));
    const PartitionStats s = partition_stats(train);
    CHECK(s.bonafide == 6);
    CHECK(s.spoof == 6);
    CHECK(s.per_attack.at("T01") == 3);
    CHECK(s.per_attack.at("T02") == 3);
    CHECK(train == ma.at(Partition::kTrain).entries);
    CHECK(partition_stats(parse_protocol(toy_protocol_path(a.path(), Partition::kDev))).bonafide == 4);

    Manifest m = ma.at(Partition::kTrain);
    const DataReport r = check_data(m);
    CHECK(r.findings.empty());
    CHECK(r.resolved == 12);
    CHECK(r.min_seconds == doctest::Approx(0.25));

    TempDir c("toy_c");
    synth_toy_dataset(cfg, 43, c.path());
    const fs::path first = fs::path("train") / "audio" / (train[0].utt_id + ".wav");
    CHECK(read_file_bytes(a.path() / first) != read_file_bytes(c.path() / first));
  }

  TEST_CASE("toy utterances are well formed") {
    for (const std::string& kind : {std::string("bona"), std::string("T01"), std::string("T02"), std::string("T03")}) {
      Rng rng(7);
      const auto x = kind == "bona" ? toy_bonafide(rng, 16000, 16000) : toy_attack(kind, rng, 16000, 16000);
      REQUIRE(x.size() == 16000);
      double peak = 0.0, energy = 0.0;
      for (double v : x) {
        peak = std::max(peak, std::abs(v));
        energy += v * v;
      }
      CAPTURE(kind);
      CHECK(peak <= 1.0);
      CHECK(energy > 0.0);
    }
    Rng rng(1);
    CHECK_THROWS_AS(toy_attack("T09", rng, 16000, 16000), ConfigError);
    ToyConfig bad;
    bad.attacks = {"T01", "X"};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("toy phase-randomised attack is separable from bona fide in LFCC") {
    // Regression fixture: 40 utterances per class, streams derived from
    // seed 2024; the number of LFCC rows with |d| > 1 was counted once on
    // this set and is frozen below.
    constexpr int kFrozenSeparableRows = 6;
    const int n = 40;
    std::vector<std::vector<double>> bona, spoof;
    for (int i = 0; i < n; ++i) {
      Rng rb = Rng::derived(2024, static_cast<uint64_t>(2 * i));
      Rng rs = Rng::derived(2024, static_cast<uint64_t>(2 * i + 1));
      bona.push_back(lfcc_means(toy_bonafide(rb, 16000, 16000)));
      spoof.push_back(lfcc_means(toy_attack("T01", rs, 16000, 16000)));
    }
    int separable = 0;
    for (size_t r = 0; r < bona[0].size(); ++r) {
      double mb = 0.0, ms = 0.0;
      for (int i = 0; i < n; ++i) {
        mb += bona[i][r] / n;
        ms += spoof[i][r] / n;
      }
      double vb = 0.0, vs = 0.0;
      for (int i = 0; i < n; ++i) {
        vb += std::pow(bona[i][r] - mb, 2) / (n - 1);
        vs += std::pow(spoof[i][r] - ms, 2) / (n - 1);
      }
      const double d = (mb - ms) / std::sqrt(0.5 * (vb + vs));
      if (std::abs(d) > 1.0) ++separable;
    }
    MESSAGE("LFCC rows with |d| > 1: " << separable);
    CHECK(separable >= 5);
    CHECK(separable == kFrozenSeparableRows);
  }

  TEST_CASE("check_data findings") {
    TempDir dir("check");
    ToyConfig cfg = small_toy();
    auto parts = synth_toy_dataset(cfg, 5, dir.path());
    Manifest m = parts.at(Partition::kTrain);

    fs::remove(*resolve_audio(m, m.entries[1]));
    DataReport r = check_data(m);
    REQUIRE(r.findings.size() == 1);
    CHECK(r.findings[0].kind == "missing_audio");
    CHECK(r.findings[0].utt_id == m.entries[1].utt_id);

    Manifest bad = parts.at(Partition::kDev);
    size_t idx = 0;
    while (bad.entries[idx].key != Label::kBonafide) ++idx;
    bad.entries[idx].attack_id = "T01";
    r = check_data(bad);
    REQUIRE(r.findings.size() == 1);
    CHECK(r.findings[0].kind == "label_attack_mismatch");
    CHECK(r.findings[0].detail.find("bonafide") != std::string::npos);

    Manifest dup = parts.at(Partition::kDev);
    dup.entries.push_back(dup.entries[0]);
    r = check_data(dup);
    REQUIRE(r.findings.size() == 1);
    CHECK(r.findings[0].kind == "duplicate_utt");

    Manifest junk = parts.at(Partition::kDev);
    write_text_atomic(*resolve_audio(junk, junk.entries[0]), "garbage");
    r = check_data(junk);
    REQUIRE(r.findings.size() == 1);
    CHECK(r.findings[0].kind == "undecodable_audio");
  }

  TEST_CASE("manifest labels carry into score records") {
    Rng rng(3);
    Manifest m;
    m.entries = random_entries(rng, 30);
    const auto recs = records_from_manifest(m);
    REQUIRE(recs.size() == m.entries.size());
    for (size_t i = 0; i < recs.size(); ++i) {
      CHECK(recs[i].utt_id == m.entries[i].utt_id);
      CHECK(*recs[i].label == m.entries[i].key);
      CHECK(recs[i].attack_id == m.entries[i].attack_id);
    }
  }

  TEST_CASE("archive round trip and corruption") {
    Archive a;
    a.format = "test-v1";
    a.meta = {{"k", 3}};
    a.arrays.push_back({"x", {2, 3}, {1, 2, 3, 4, 5, 1e-310}});
    a.arrays.push_back({"y/z", {}, {-0.0}});
    const auto bytes = encode_archive(a);
    const Archive b = decode_archive(bytes);
    CHECK(b.format == "test-v1");
    CHECK(b.meta["k"] == 3);
    REQUIRE(b.arrays.size() == 2);
    CHECK(b.find("x")->values == a.arrays[0].values);
    CHECK(b.find("x")->shape == Shape{2, 3});
    CHECK(std::signbit(b.find("y/z")->values[0]));
    CHECK(b.find("nope") == nullptr);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 8);
    CHECK_THROWS_AS(decode_archive(truncated), InputError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_archive(bad_magic), InputError);

    TempDir dir("arc");
    write_archive(dir.path() / "a.bin", a);
    CHECK(read_archive(dir.path() / "a.bin", "test-v1").arrays.size() == 2);
    CHECK_THROWS_AS(read_archive(dir.path() / "a.bin", "other"), InputError);
  }

  TEST_CASE("flat config includes, overrides and validation") {
    TempDir dir("kv");
    write_text_atomic(dir.path() / "base.conf", "# base\nmodel.channels = 16\ntrain.lr = 0.001\n");
    write_text_atomic(dir.path() / "run.conf", "include = base.conf\nmodel.channels = 32\n");
    KvConfig kv = KvConfig::load(dir.path() / "run.conf");
    CHECK(kv.get_int("model.channels", 0) == 32);
    CHECK(kv.get_double("train.lr", 0.0) == 0.001);
    kv.apply_override("train.lr=0.01");
    CHECK(kv.get_double("train.lr", 0.0) == 0.01);
    CHECK_THROWS_AS(kv.apply_override("novalue"), ConfigError);

    write_text_atomic(dir.path() / "a.conf", "include = b.conf\n");
    write_text_atomic(dir.path() / "b.conf", "include = a.conf\n");
    CHECK_THROWS_AS(KvConfig::load(dir.path() / "a.conf"), ConfigError);
    CHECK_THROWS_AS(KvConfig::parse("just words\n"), ConfigError);

    KvConfig typo;
    typo.set("model.chanels", "3");
    CHECK(typo.unknown_keys(model_config_keys()) == std::vector<std::string>{"model.chanels"});

    KvConfig bad_num;
    bad_num.set("model.channels", "lots");
    CHECK_THROWS_AS(model_config_from_kv(bad_num), ConfigError);

    // model config survives a text round trip
    ModelConfig c = ModelConfig::tiny();
    c.fusion = FusionMode::kConcat;
    c.sinc.n_filters = 17;
    const KvConfig text = KvConfig::parse(model_config_to_kv(c).to_text());
    const ModelConfig back = model_config_from_kv(text);
    CHECK(model_config_to_kv(back).values() == model_config_to_kv(c).values());
    CHECK(config_hash(text) == config_hash(model_config_to_kv(c)));
    KvConfig other = text;
    other.set("model.channels", "9");
    CHECK(config_hash(other) != config_hash(text));
  }
}
