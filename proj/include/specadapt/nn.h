// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef SPECADAPT_NN_H_
#define SPECADAPT_NN_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "specadapt/autodiff.h"
#include "specadapt/common.h"
#include "specadapt/tensor.h"

namespace specadapt {

// Named parameter tensors with stable iteration order. Training mutates the
// tensors in place between steps; forward passes wrap them in fresh leaves.
class ParamMap {
 public:
  Tensor& Add(const std::string& name, Tensor t);
  Tensor& Get(const std::string& name);
  const Tensor& Get(const std::string& name) const;
  bool Has(const std::string& name) const;
  std::size_t size() const { return items_.size(); }

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }

  std::uint64_t Hash() const;
  std::int64_t TotalParams() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

// Wraps every parameter in a Leaf and keeps the (name -> Var) association so
// gradients can be read back in parameter order.
class ParamVars {
 public:
  explicit ParamVars(ParamMap& params);
  const ad::Var& operator[](const std::string& name) const;
  const std::vector<ad::Var>& vars() const { return vars_; }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::vector<ad::Var> vars_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

// Adam with optional decoupled weight decay (AdamW when weight_decay > 0).
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void Step(ParamMap& params, const std::vector<Tensor>& grads, double lr);
  std::int64_t step_count() const { return t_; }

 private:
  struct Slot {
    Tensor m, v;
  };
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Slot> slots_;
};

double GlobalNorm(const std::vector<Tensor>& grads);
void ClipGlobalNorm(std::vector<Tensor>& grads, double max_norm);

// Gaussian init scaled by 1/sqrt(fan_in).
Tensor HeInit(std::vector<int> shape, int fan_in, Rng& rng, double gain = 1.0);

}  // namespace specadapt

#endif  // SPECADAPT_NN_H_
