#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "s2pec/error.hpp"
#include "s2pec/metrics.hpp"
#include "support.hpp"

using namespace s2pec;

namespace {

std::vector<ScoreRecord> make(const std::vector<double>& bona, const std::vector<double>& spoof,
                              const std::string& attack = "A01") {
  std::vector<ScoreRecord> r;
  int i = 0;
  for (double s : bona) r.push_back({"b" + std::to_string(i++), s, Label::kBonafide, "-"});
  for (double s : spoof) r.push_back({"s" + std::to_string(i++), s, Label::kSpoof, attack});
  return r;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("eer worked examples") {
    CHECK(compute_eer(make({0.9, 0.8}, {0.1, 0.2})).eer == 0.0);
    CHECK(compute_eer(make({0.6, 0.4, 0.8}, {0.5, 0.3, 0.7})).eer == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(compute_eer(make({0.3, 0.3}, {0.3, 0.3, 0.3})).eer == 0.5);
    CHECK(compute_eer(make({0.1}, {0.9})).eer == 1.0);
    CHECK_THROWS_AS(compute_eer(make({0.1, 0.2}, {})), InputError);
    CHECK_THROWS_AS(compute_eer(make({}, {0.1})), InputError);
  }

  TEST_CASE("eer threshold separates a perfect split") {
    const EerResult r = compute_eer(make({0.9, 0.8}, {0.1, 0.2}));
    CHECK(r.threshold > 0.2);
    CHECK(r.threshold <= 0.8);
  }

  TEST_CASE("eer matches the brute-force oracle and is rank invariant") {
    Rng rng(1);
    for (int i = 0; i < 300; ++i) {
      const int nb = 1 + static_cast<int>(rng.below(20)), ns = 1 + static_cast<int>(rng.below(20));
      const bool coarse = rng.below(2) == 0;
      std::vector<double> b(nb), s(ns);
      for (auto& v : b) v = coarse ? static_cast<double>(rng.below(5)) : rng.normal(0.5, 1.0);
      for (auto& v : s) v = coarse ? static_cast<double>(rng.below(5)) : rng.normal(0.0, 1.0);
      const double e = compute_eer(make(b, s)).eer;
      CHECK(std::abs(e - oracle::eer(b, s)) <= 1e-12 * std::max(1.0, e));
      // strictly increasing transform
      std::vector<double> tb(b), ts(s);
      for (auto& v : tb) v = std::exp(v) + v * v * v;
      for (auto& v : ts) v = std::exp(v) + v * v * v;
      CHECK(compute_eer(make(tb, ts)).eer == e);
      // swap roles: flip labels and negate scores
      std::vector<double> nb_(s), ns_(b);
      for (auto& v : nb_) v = -v;
      for (auto& v : ns_) v = -v;
      CHECK(std::abs(compute_eer(make(nb_, ns_)).eer - e) < 1e-12);
    }
  }

  TEST_CASE("min t-DCF matches the brute-force oracle") {
    Rng rng(2);
    const TdcfParams p;
    for (int i = 0; i < 300; ++i) {
      const int nb = 1 + static_cast<int>(rng.below(25)), ns = 1 + static_cast<int>(rng.below(25));
      std::vector<double> b(nb), s(ns);
      for (auto& v : b) v = std::round(rng.normal(1.0, 1.0) * 4) / 4;
      for (auto& v : s) v = rng.normal(0.0, 1.0);
      const TdcfResult r = compute_min_tdcf(make(b, s), p);
      const double o = oracle::min_tdcf(b, s, p);
      CHECK(std::abs(r.min_tdcf - o) <= 1e-12 * std::max(1.0, o));
      CHECK(r.min_tdcf >= 0.0);
      CHECK(r.min_tdcf <= 1.0 + 1e-12);
      // the reported threshold attains the minimum
      const auto at = oracle::rates_at(b, s, r.threshold);
      const double c1 = p.pi_tar * (p.c_miss_cm - p.c_miss_asv * p.p_miss_asv) - p.pi_non * p.c_fa_asv * p.p_fa_asv;
      const double c2 = p.c_fa_cm * p.pi_spoof * (1.0 - p.p_miss_spoof_asv);
      CHECK((c1 * at.miss + c2 * at.fa) / std::min(c1, c2) == doctest::Approx(r.min_tdcf).epsilon(1e-12));
    }
  }

  TEST_CASE("min t-DCF is zero exactly for separable scores") {
    CHECK(compute_min_tdcf(make({0.9, 0.8}, {0.1, 0.2})).min_tdcf == 0.0);
    CHECK(compute_min_tdcf(make({0.9, 0.1}, {0.5})).min_tdcf > 0.0);
    CHECK(compute_min_tdcf(make({0.5}, {0.5})).min_tdcf > 0.0);
  }

  TEST_CASE("t-DCF parameter validation") {
    TdcfParams p;
    p.pi_tar = 0.0;
    CHECK_THROWS_AS(compute_min_tdcf(make({1}, {0}), p), ConfigError);
    p = {};
    p.pi_spoof = 0.5;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.p_miss_spoof_asv = 1.0;  // spoofs never pass ASV: no CM false-alarm cost
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = {};
    p.p_fa_asv = 1.5;
    CHECK_THROWS_AS(p.validate(), ConfigError);
  }

  TEST_CASE("ASV operating point from scores") {
    const TdcfParams p = with_asv_scores({}, {3, 4, 5, 6}, {0, 1, 2, 3.5}, {1.5, 4.5, 5.5, 0.5});
    // EER threshold between 3 and 3.5: one target miss of four at 3.5
    CHECK(p.p_miss_asv == doctest::Approx(0.25));
    CHECK(p.p_fa_asv == doctest::Approx(0.25));
    CHECK(p.p_miss_spoof_asv == doctest::Approx(0.5));
  }

  TEST_CASE("per-attack breakdown") {
    std::vector<ScoreRecord> r = make({0.9, 0.7, 0.3}, {0.1, 0.2}, "A01");
    const auto one = per_attack_breakdown(r);
    REQUIRE(one.size() == 1);
    CHECK(one.at("A01") == compute_eer(r).eer);

    for (double s : {0.8, 0.4, 0.95}) r.push_back({"x", s, Label::kSpoof, "A02"});
    const auto two = per_attack_breakdown(r);
    CHECK(two.at("A01") == 0.0);

    Rng rng(3);
    std::vector<ScoreRecord> big;
    for (int i = 0; i < 60; ++i) big.push_back({"b", rng.normal(1, 1), Label::kBonafide, "-"});
    const std::vector<std::string> attacks = {"A07", "A08", "A09"};
    for (int i = 0; i < 90; ++i) big.push_back({"s", rng.normal(0.3 * (i % 3), 1), Label::kSpoof, attacks[i % 3]});
    const auto br = per_attack_breakdown(big);
    CHECK(br.size() == 3);
    for (const auto& a : attacks) {
      std::vector<double> b, s;
      for (const auto& x : big) {
        if (*x.label == Label::kBonafide) b.push_back(x.score);
        else if (x.attack_id == a) s.push_back(x.score);
      }
      CHECK(std::abs(br.at(a) - oracle::eer(b, s)) < 1e-12);
    }
  }

  TEST_CASE("score file round trip") {
    std::vector<ScoreRecord> r = make({0.1, 1e-300, -3.25}, {1.0 / 3.0, 123456.789});
    r.push_back({"unlabeled", 0.5, std::nullopt, "-"});
    const auto back = parse_scores(format_scores(r));
    REQUIRE(back.size() == r.size());
    for (size_t i = 0; i < r.size(); ++i) {
      CHECK(back[i].utt_id == r[i].utt_id);
      CHECK(back[i].score == r[i].score);
      CHECK(back[i].label == r[i].label);
      if (r[i].label) CHECK(back[i].attack_id == r[i].attack_id);
    }
    CHECK_THROWS_AS(parse_scores("u1 A01 spoof notanumber\n"), InputError);
    CHECK_THROWS_AS(parse_scores("u1 A01 maybe 0.5\n"), InputError);
    CHECK(label_from_string("bonafide") == Label::kBonafide);
    CHECK_THROWS_AS(label_from_string("real"), InputError);
  }

  TEST_CASE("non-finite scores are rejected") {
    CHECK_THROWS_AS(compute_eer(make({std::nan("")}, {0.0})), InputError);
  }
}
