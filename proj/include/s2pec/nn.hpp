#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "s2pec/rng.hpp"
#include "s2pec/tensor.hpp"

namespace s2pec::nn {

// Base for layers holding named parameters, buffers, and child modules.
// Modules are neither copyable nor movable: children register by address.
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  // Hierarchical "child.sub.name" keys.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<std::pair<std::string, Tensor>> named_buffers() const;
  std::vector<Tensor> parameters() const;

  void set_training(bool training);
  bool training() const { return training_; }
  void zero_grad();
  int64_t parameter_count() const;

 protected:
  // Returned handles share storage with the registry.
  Tensor register_parameter(std::string name, Tensor t);
  Tensor register_buffer(std::string name, Tensor t);
  void register_module(std::string name, Module& child);

 private:
  void collect(const std::string& prefix, bool buffers,
               std::vector<std::pair<std::string, Tensor>>& out) const;

  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::pair<std::string, Tensor>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
  bool training_ = true;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
Tensor fan_in_uniform(Shape shape, int64_t fan_in, Rng& rng);

class Conv2d : public Module {
 public:
  Conv2d(int64_t in, int64_t out, Pair kernel, Pair stride, Pair pad, bool bias, Rng& rng);
  Tensor forward(const Tensor& x) const;
  int64_t out_channels() const { return weight_.dim(0); }

 private:
  Tensor weight_;
  Tensor bias_;
  Pair stride_, pad_;
};

class ConvTranspose2d : public Module {
 public:
  ConvTranspose2d(int64_t in, int64_t out, Pair kernel, Pair stride, Pair pad, bool bias, Rng& rng);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor weight_;
  Tensor bias_;
  Pair stride_, pad_;
};

class Linear : public Module {
 public:
  Linear(int64_t in, int64_t out, bool bias, Rng& rng, bool zero_bias = false);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor weight_;
  Tensor bias_;
};

// Normalises axis 1. Forward in training mode updates the running
// statistics; parameters and buffers share storage with the registry.
class BatchNorm : public Module {
 public:
  explicit BatchNorm(int64_t channels, double momentum = 0.1, double eps = 1e-5);
  Tensor forward(const Tensor& x) const;

 private:
  Tensor gamma_, beta_;
  mutable Tensor running_mean_, running_var_;
  double momentum_, eps_;
};

}  // namespace s2pec::nn
