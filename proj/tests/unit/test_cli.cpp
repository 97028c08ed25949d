#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "model_configs.hpp"
#include "s2pec/archive.hpp"
#include "s2pec/audio.hpp"
#include "s2pec/checkpoint.hpp"
#include "s2pec/commands.hpp"
#include "s2pec/gradcam.hpp"

using namespace s2pec;
using namespace s2pec::test;

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string read_text(const fs::path& p) {
  const auto b = read_file_bytes(p);
  return {b.begin(), b.end()};
}

// A synthesised toy set plus an untrained small checkpoint, shared by the
// cases below.
struct Fixture {
  TempDir dir{"cli"};
  fs::path data, ckpt;
  Fixture() {
    data = dir.path() / "toy";
    const Run r = cli({"synth-data", "-o", data.string(), "--seed", "3", "--set", "toy.train_bonafide=4", "--set",
                       "toy.train_spoof_per_attack=2", "--set", "toy.dev_bonafide=2", "--set", "toy.dev_spoof_per_attack=1",
                       "--set", "toy.eval_bonafide=2", "--set", "toy.eval_spoof_per_attack=1", "--set", "toy.length=4000"});
    REQUIRE(r.code == 0);
    ckpt = dir.path() / "net.ckpt";
    S2pecNet net(small_config());
    net.set_training(false);
    save_checkpoint(ckpt, net);
  }
  fs::path audio(const std::string& part, int i) const {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(data / part / "audio")) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files.at(static_cast<size_t>(i));
  }
};

Fixture& fx() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit codes for bad invocations") {
    CHECK(cli({}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({"synth-data"}).code == 2);
    CHECK(cli({"synth-data", "-o", "x", "--bogus"}).code == 2);
    const Run help = cli({"--help"});
    CHECK(help.code == 0);
    for (const char* sub : {"synth-data", "extract-features", "train", "evaluate", "score", "ablate", "gradcam", "check-data"})
      CHECK(help.out.find(sub) != std::string::npos);
    CHECK(cli({"train", "--help"}).code == 0);
    CHECK(cli({"check-data", "--protocol", "/nonexistent/protocol.txt"}).code == 1);
    const Run typo = cli({"check-data", "--protocol", "p.txt", "--set", "model.chanels=3"});
    CHECK(typo.code == 2);
    CHECK(typo.err.find("model.chanels") != std::string::npos);
    CHECK(cli({"ablate", "everything", "--data-dir", fx().data.string(), "-o", (fx().dir.path() / "abl").string()}).code == 2);
  }

  TEST_CASE("config file from the environment") {
    const fs::path conf = fx().dir.path() / "env.conf";
    write_text_atomic(conf, "train.nonsense = 1\n");
    setenv("S2PEC_CONFIG", conf.string().c_str(), 1);
    const Run r = cli({"check-data", "--protocol", (fx().data / "protocols" / "toy.dev.txt").string(), "--audio-root",
                       (fx().data / "dev" / "audio").string()});
    unsetenv("S2PEC_CONFIG");
    CHECK(r.code == 2);
  }

  TEST_CASE("synth-data writes protocols and a config snapshot") {
    CHECK(fs::exists(fx().data / "protocols" / "toy.train.txt"));
    const std::string snap = read_text(fx().data / "config.resolved.conf");
    CHECK(snap.rfind("# s2pec synth-data", 0) == 0);
    CHECK(snap.find("toy.train_bonafide = 4") != std::string::npos);
  }

  TEST_CASE("check-data reports findings") {
    const std::string proto = (fx().data / "protocols" / "toy.dev.txt").string();
    const std::string root = (fx().data / "dev" / "audio").string();
    Run r = cli({"check-data", "--protocol", proto, "--audio-root", root, "--partition", "dev"});
    REQUIRE(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["issues"] == 0);

    const fs::path copy = fx().dir.path() / "dev_copy";
    fs::create_directories(copy);
    fs::copy(root, copy, fs::copy_options::recursive);
    fs::remove(*fs::directory_iterator(copy));
    r = cli({"check-data", "--protocol", proto, "--audio-root", copy.string(), "--partition", "dev"});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["issues"] == 1);
    CHECK(j["findings"][0]["kind"] == "missing_audio");
  }

  TEST_CASE("score emits one line per file and reports corrupt input") {
    const fs::path out1 = fx().dir.path() / "s1" / "scores.txt", out2 = fx().dir.path() / "s2" / "scores.txt";
    std::vector<std::string> files = {fx().audio("eval", 0).string(), fx().audio("eval", 1).string(),
                                      fx().audio("eval", 2).string()};
    std::vector<std::string> a = {"score", "--checkpoint", fx().ckpt.string(), "-o", out1.string()};
    a.insert(a.end(), files.begin(), files.end());
    REQUIRE(cli(a).code == 0);
    const std::string t1 = read_text(out1);
    CHECK(std::count(t1.begin(), t1.end(), '\n') == 3);
    a[4] = out2.string();
    REQUIRE(cli(a).code == 0);
    CHECK(read_text(out2) == t1);
    CHECK(fs::exists(out1.parent_path() / "config.resolved.conf"));

    const fs::path bad = fx().dir.path() / "corrupt.wav";
    write_text_atomic(bad, "RIFF????WAVEjunk");
    std::vector<std::string> b = {"score", "--checkpoint", fx().ckpt.string(), "-o", (fx().dir.path() / "s3.txt").string(),
                                  files[0], bad.string(), files[2]};
    const Run r = cli(b);
    CHECK(r.code == 0);
    CHECK(r.err.find("error corrupt") != std::string::npos);
    CHECK(r.err.find("warning: 1 of 3") != std::string::npos);
    const std::string t3 = read_text(fx().dir.path() / "s3.txt");
    CHECK(std::count(t3.begin(), t3.end(), '\n') == 2);

    CHECK(cli({"score", "--checkpoint", fx().ckpt.string(), "-o", (fx().dir.path() / "s4.txt").string(), bad.string()}).code == 1);
    CHECK(cli({"score", "--checkpoint", (fx().dir.path() / "missing.ckpt").string(), "-o", "x.txt", files[0]}).code == 1);
  }

  TEST_CASE("evaluate from a checkpoint and from a score file") {
    const fs::path out = fx().dir.path() / "eval";
    Run r = cli({"evaluate", "--checkpoint", fx().ckpt.string(), "--protocol", (fx().data / "protocols" / "toy.eval.txt").string(),
                 "--audio-root", (fx().data / "eval" / "audio").string(), "--partition", "eval", "-o", out.string()});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(read_text(out / "report.json"));
    CHECK(j["metrics_computed"] == true);
    CHECK(j["eer"].get<double>() >= 0.0);
    CHECK(j["per_attack_eer"].size() == 2);

    const fs::path out2 = fx().dir.path() / "eval2";
    r = cli({"evaluate", "--scores", (out / "scores.txt").string(), "-o", out2.string()});
    REQUIRE(r.code == 0);
    const auto j2 = nlohmann::json::parse(read_text(out2 / "report.json"));
    CHECK(j2["eer"] == j["eer"]);
    CHECK(j2["min_tdcf"] == j["min_tdcf"]);
    CHECK(cli({"evaluate", "-o", out2.string()}).code == 2);
  }

  TEST_CASE("extract-features dumps both representations") {
    const fs::path out = fx().dir.path() / "feat" / "dev.s2f";
    const Run r = cli({"extract-features", "--protocol", (fx().data / "protocols" / "toy.dev.txt").string(), "--audio-root",
                       (fx().data / "dev" / "audio").string(), "-o", out.string(), "--set", "model.preset=tiny", "--set",
                       "model.input_length=3200"});
    REQUIRE(r.code == 0);
    const Archive a = read_archive(out, kFeatureFormat);
    const ModelConfig c = small_config();
    CHECK(a.arrays.size() == 2 * 4);
    for (const auto& arr : a.arrays) {
      if (arr.name.ends_with("/raw")) CHECK(arr.shape == Shape{c.raw_bins(), c.raw_frames()});
      if (arr.name.ends_with("/power")) CHECK(arr.shape == Shape{c.power_bins(), c.power_frames()});
    }
  }

  TEST_CASE("gradcam writes normalised saliency arrays") {
    const fs::path out = fx().dir.path() / "cam";
    const fs::path wav = fx().audio("eval", 0);
    const Run r = cli({"gradcam", "--checkpoint", fx().ckpt.string(), "--audio", wav.string(), "-o", out.string()});
    REQUIRE(r.code == 0);
    const ModelConfig c = small_config();
    const std::string stem = wav.stem().string();
    for (const auto& [branch, dims] : std::vector<std::pair<std::string, Shape>>{
             {"raw", {c.raw_bins(), c.raw_frames()}}, {"power", {c.power_bins(), c.power_frames()}}}) {
      std::vector<int64_t> shape;
      const auto sal = decode_npy(read_file_bytes(out / (stem + "_" + branch + "_saliency.npy")), &shape);
      CHECK(shape == dims);
      double mx = 0.0;
      for (double v : sal) {
        CHECK(v >= 0.0);
        mx = std::max(mx, v);
      }
      CHECK((mx == 1.0 || mx == 0.0));
      std::vector<int64_t> sshape;
      decode_npy(read_file_bytes(out / (stem + "_" + branch + "_spectrogram.npy")), &sshape);
      CHECK(sshape == dims);
      CHECK(fs::exists(out / (stem + "_" + branch + ".ppm")));
    }

    const fs::path tiny = fx().dir.path() / "short.wav";
    write_wav_pcm16(tiny, std::vector<double>(100, 0.1), 16000);
    CHECK(cli({"gradcam", "--checkpoint", fx().ckpt.string(), "--audio", tiny.string(), "-o", out.string()}).code == 1);
  }

  TEST_CASE("npy round trip") {
    const std::vector<double> v = {1.5, -2.0, 0.0, 3.25, 1e-9, 7.0};
    std::vector<int64_t> shape;
    CHECK(decode_npy(encode_npy(v, {2, 3}), &shape) == v);
    CHECK(shape == std::vector<int64_t>{2, 3});
  }
}
