#include "s2pec/nn.hpp"

#include <cmath>

#include "s2pec/error.hpp"

namespace s2pec::nn {

Tensor Module::register_parameter(std::string name, Tensor t) {
  t.set_requires_grad(true);
  params_.emplace_back(std::move(name), t);
  return t;
}

Tensor Module::register_buffer(std::string name, Tensor t) {
  buffers_.emplace_back(std::move(name), t);
  return t;
}

void Module::register_module(std::string name, Module& child) { children_.emplace_back(std::move(name), &child); }

void Module::collect(const std::string& prefix, bool buffers,
                     std::vector<std::pair<std::string, Tensor>>& out) const {
  for (const auto& [name, t] : buffers ? buffers_ : params_) out.emplace_back(prefix + name, t);
  for (const auto& [name, child] : children_) child->collect(prefix + name + ".", buffers, out);
}

std::vector<std::pair<std::string, Tensor>> Module::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  collect("", false, out);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Module::named_buffers() const {
  std::vector<std::pair<std::string, Tensor>> out;
  collect("", true, out);
  return out;
}

std::vector<Tensor> Module::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void Module::set_training(bool training) {
  training_ = training;
  for (auto& [name, child] : children_) child->set_training(training);
}

void Module::zero_grad() {
  for (auto& t : parameters()) t.zero_grad();
}

int64_t Module::parameter_count() const {
  int64_t n = 0;
  for (const auto& t : parameters()) n += t.numel();
  return n;
}

Tensor fan_in_uniform(Shape shape, int64_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<int64_t>(fan_in, 1)));
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = rng.uniform(-bound, bound);
  return t;
}

Conv2d::Conv2d(int64_t in, int64_t out, Pair kernel, Pair stride, Pair pad, bool bias, Rng& rng)
    : stride_(stride), pad_(pad) {
  const int64_t fan_in = in * kernel[0] * kernel[1];
  weight_ = register_parameter("weight", fan_in_uniform({out, in, kernel[0], kernel[1]}, fan_in, rng));
  if (bias) bias_ = register_parameter("bias", Tensor({out}));
}

Tensor Conv2d::forward(const Tensor& x) const { return conv2d(x, weight_, bias_, stride_, pad_); }

ConvTranspose2d::ConvTranspose2d(int64_t in, int64_t out, Pair kernel, Pair stride, Pair pad, bool bias,
                                 Rng& rng)
    : stride_(stride), pad_(pad) {
  const int64_t fan_in = out * kernel[0] * kernel[1];
  weight_ = register_parameter("weight", fan_in_uniform({in, out, kernel[0], kernel[1]}, fan_in, rng));
  if (bias) bias_ = register_parameter("bias", Tensor({out}));
}

Tensor ConvTranspose2d::forward(const Tensor& x) const {
  return conv_transpose2d(x, weight_, bias_, stride_, pad_);
}

Linear::Linear(int64_t in, int64_t out, bool bias, Rng& rng, bool zero_bias) {
  weight_ = register_parameter("weight", fan_in_uniform({out, in}, in, rng));
  if (bias) {
    bias_ = register_parameter("bias", zero_bias ? Tensor({out}) : fan_in_uniform({out}, in, rng));
  }
}

Tensor Linear::forward(const Tensor& x) const { return linear(x, weight_, bias_); }

BatchNorm::BatchNorm(int64_t channels, double momentum, double eps) : momentum_(momentum), eps_(eps) {
  gamma_ = register_parameter("weight", Tensor({channels}, 1.0));
  beta_ = register_parameter("bias", Tensor({channels}, 0.0));
  running_mean_ = register_buffer("running_mean", Tensor({channels}, 0.0));
  running_var_ = register_buffer("running_var", Tensor({channels}, 1.0));
}

Tensor BatchNorm::forward(const Tensor& x) const {
  return batch_norm(x, gamma_, beta_, running_mean_, running_var_, training(), momentum_, eps_);
}

}  // namespace s2pec::nn
