#include "s2pec/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "s2pec/audio.hpp"
#include "s2pec/error.hpp"

namespace s2pec {

std::string to_string(Label l) { return l == Label::kBonafide ? "bonafide" : "spoof"; }

Label label_from_string(const std::string& s) {
  if (s == "bonafide") return Label::kBonafide;
  if (s == "spoof") return Label::kSpoof;
  throw InputError("unknown label '" + s + "' (bonafide, spoof)");
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void split(const std::vector<ScoreRecord>& records, std::vector<double>& bona, std::vector<double>& spoof) {
  for (const auto& r : records) {
    if (!r.label) continue;
    if (!std::isfinite(r.score)) throw InputError("non-finite score for " + r.utt_id);
    (*r.label == Label::kBonafide ? bona : spoof).push_back(r.score);
  }
}

// Miss (bona < t) and false-alarm (spoof >= t) rates at every distinct score
// plus +inf, in increasing threshold order.
struct RateCurve {
  std::vector<double> thresholds, miss, fa;
};

RateCurve rate_curve(std::vector<double> bona, std::vector<double> spoof) {
  if (bona.empty() || spoof.empty()) {
    throw InputError("metrics need at least one bona fide and one spoof trial (got " +
                     std::to_string(bona.size()) + " and " + std::to_string(spoof.size()) + ")");
  }
  std::sort(bona.begin(), bona.end());
  std::sort(spoof.begin(), spoof.end());
  std::vector<double> all(bona);
  all.insert(all.end(), spoof.begin(), spoof.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  all.push_back(kInf);

  RateCurve c;
  c.thresholds = all;
  c.miss.reserve(all.size());
  c.fa.reserve(all.size());
  const double nb = static_cast<double>(bona.size()), ns = static_cast<double>(spoof.size());
  size_t ib = 0, is = 0;
  for (double t : all) {
    while (ib < bona.size() && bona[ib] < t) ++ib;
    while (is < spoof.size() && spoof[is] < t) ++is;
    c.miss.push_back(static_cast<double>(ib) / nb);
    c.fa.push_back(static_cast<double>(spoof.size() - is) / ns);
  }
  return c;
}

// A finite threshold with the same rates as +inf.
double finite_threshold(const RateCurve& c, size_t k) {
  if (std::isfinite(c.thresholds[k])) return c.thresholds[k];
  return k == 0 ? 0.0 : std::nextafter(c.thresholds[k - 1], kInf);
}

EerResult eer_from_curve(const RateCurve& c) {
  size_t k = 0;
  while (k < c.miss.size() && c.miss[k] < c.fa[k]) ++k;
  // miss reaches 1 and fa reaches 0 at +inf, so k is always found.
  if (k == 0) return {c.miss[0], finite_threshold(c, 0)};
  const double d0 = c.miss[k - 1] - c.fa[k - 1];
  const double d1 = c.miss[k] - c.fa[k];
  const double t = -d0 / (d1 - d0);
  EerResult r;
  r.eer = c.miss[k - 1] + t * (c.miss[k] - c.miss[k - 1]);
  const double lo = c.thresholds[k - 1];
  const double hi = c.thresholds[k];
  r.threshold = std::isfinite(hi) ? lo + t * (hi - lo) : lo;
  return r;
}

}  // namespace

EerResult compute_eer(const std::vector<double>& bonafide, const std::vector<double>& spoof) {
  return eer_from_curve(rate_curve(bonafide, spoof));
}

EerResult compute_eer(const std::vector<ScoreRecord>& records) {
  std::vector<double> bona, spoof;
  split(records, bona, spoof);
  return compute_eer(bona, spoof);
}

void TdcfParams::validate() const {
  for (double v : {c_miss_asv, c_fa_asv, c_miss_cm, c_fa_cm}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("t-DCF costs must be finite and >= 0");
  }
  if (!(pi_tar > 0.0) || !(pi_non > 0.0) || !(pi_spoof > 0.0)) throw ConfigError("t-DCF priors must be positive");
  if (std::abs(pi_tar + pi_non + pi_spoof - 1.0) > 1e-9) throw ConfigError("t-DCF priors must sum to 1");
  for (double v : {p_miss_asv, p_fa_asv, p_miss_spoof_asv}) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("ASV operating-point rates must lie in [0, 1]");
  }
  const double c1 = pi_tar * (c_miss_cm - c_miss_asv * p_miss_asv) - pi_non * c_fa_asv * p_fa_asv;
  const double c2 = c_fa_cm * pi_spoof * (1.0 - p_miss_spoof_asv);
  if (!(c1 > 0.0) || !(c2 > 0.0)) {
    throw ConfigError("degenerate t-DCF parameters: C1=" + format_double(c1) + ", C2=" + format_double(c2));
  }
}

TdcfParams with_asv_scores(TdcfParams p, const std::vector<double>& target, const std::vector<double>& nontarget,
                           const std::vector<double>& spoof) {
  const double t = compute_eer(target, nontarget).threshold;
  auto below = [t](const std::vector<double>& v) {
    return static_cast<double>(std::count_if(v.begin(), v.end(), [t](double s) { return s < t; })) /
           static_cast<double>(v.size());
  };
  if (spoof.empty()) throw InputError("ASV spoof scores are empty");
  p.p_miss_asv = below(target);
  p.p_fa_asv = 1.0 - below(nontarget);
  p.p_miss_spoof_asv = below(spoof);
  p.validate();
  return p;
}

TdcfResult compute_min_tdcf(const std::vector<ScoreRecord>& records, const TdcfParams& p) {
  p.validate();
  std::vector<double> bona, spoof;
  split(records, bona, spoof);
  const RateCurve c = rate_curve(std::move(bona), std::move(spoof));
  const double c1 = p.pi_tar * (p.c_miss_cm - p.c_miss_asv * p.p_miss_asv) - p.pi_non * p.c_fa_asv * p.p_fa_asv;
  const double c2 = p.c_fa_cm * p.pi_spoof * (1.0 - p.p_miss_spoof_asv);
  const double norm = std::min(c1, c2);
  TdcfResult best{kInf, 0.0};
  for (size_t k = 0; k < c.thresholds.size(); ++k) {
    const double v = (c1 * c.miss[k] + c2 * c.fa[k]) / norm;
    if (v < best.min_tdcf) best = {v, finite_threshold(c, k)};
  }
  return best;
}

std::map<std::string, double> per_attack_breakdown(const std::vector<ScoreRecord>& records) {
  std::vector<double> bona;
  std::map<std::string, std::vector<double>> spoof;
  for (const auto& r : records) {
    if (!r.label) continue;
    if (*r.label == Label::kBonafide) {
      bona.push_back(r.score);
    } else {
      spoof[r.attack_id].push_back(r.score);
    }
  }
  std::map<std::string, double> out;
  if (bona.empty()) return out;
  for (const auto& [attack, s] : spoof) {
    if (s.empty()) continue;
    out[attack] = compute_eer(bona, s).eer;
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const std::string& s, size_t line) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InputError("score file line " + std::to_string(line) + ": invalid score '" + s + "'");
  }
  return v;
}

}  // namespace

std::string format_scores(const std::vector<ScoreRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.utt_id;
    if (r.label) {
      out += ' ';
      out += r.attack_id;
      out += ' ';
      out += to_string(*r.label);
    }
    out += ' ';
    out += format_double(r.score);
    out += '\n';
  }
  return out;
}

std::vector<ScoreRecord> parse_scores(const std::string& text) {
  std::vector<ScoreRecord> out;
  std::istringstream in(text);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<std::string> f;
    for (std::string tok; ls >> tok;) f.push_back(tok);
    if (f.empty()) continue;
    ScoreRecord r;
    r.utt_id = f[0];
    if (f.size() == 2) {
      r.score = parse_double(f[1], lineno);
    } else if (f.size() == 4) {
      r.attack_id = f[1];
      r.label = label_from_string(f[2]);
      r.score = parse_double(f[3], lineno);
    } else {
      throw InputError("score file line " + std::to_string(lineno) + ": expected 2 or 4 fields, got " +
                       std::to_string(f.size()));
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_score_file(const std::filesystem::path& path, const std::vector<ScoreRecord>& records) {
  write_text_atomic(path, format_scores(records));
}

std::vector<ScoreRecord> read_score_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_scores(std::string(bytes.begin(), bytes.end()));
}

}  // namespace s2pec
