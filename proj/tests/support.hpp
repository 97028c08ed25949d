#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "s2pec/rng.hpp"
#include "s2pec/tensor.hpp"

namespace s2pec::test {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool rg = false) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), rg);
}

inline double rel_diff(double a, double b) {
  const double d = std::abs(a - b);
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : d / s;
}

// ||a - n|| / max(||a||, ||n||); 0 when both vanish.
inline double norm_rel_error(const std::vector<double>& a, const std::vector<double>& n) {
  double d = 0.0, na = 0.0, nn = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double s = std::sqrt(std::max(na, nn));
  return s == 0.0 ? 0.0 : std::sqrt(d) / s;
}

struct GradCheck {
  std::vector<double> analytic, numeric;
  double error = 0.0;
};

// Central differences of the scalar f() w.r.t. every entry of `param`,
// compared with the gradient left on `param` by f().backward().
inline GradCheck grad_check(Tensor param, const std::function<Tensor()>& f, double step) {
  GradCheck g;
  param.zero_grad();
  Tensor y = f();
  y.backward();
  const auto ga = param.grad();
  g.analytic.assign(ga.begin(), ga.end());
  if (g.analytic.empty()) g.analytic.assign(static_cast<size_t>(param.numel()), 0.0);
  auto v = param.mutable_values();
  g.numeric.resize(v.size());
  {
    NoGradGuard ng;
    for (size_t i = 0; i < v.size(); ++i) {
      const double keep = v[i];
      v[i] = keep + step;
      const double up = f().item();
      v[i] = keep - step;
      const double down = f().item();
      v[i] = keep;
      g.numeric[i] = (up - down) / (2.0 * step);
    }
  }
  param.zero_grad();
  g.error = norm_rel_error(g.analytic, g.numeric);
  return g;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::hash<std::string>{}(tag) ^ static_cast<uint64_t>(reinterpret_cast<uintptr_t>(this)));
    path_ = std::filesystem::temp_directory_path() / ("s2pec_" + tag + "_" + std::to_string(rng.next_u64() % 1000000007));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace s2pec::test
