// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "specadapt/nn.h"

#include <cmath>
#include <stdexcept>

namespace specadapt {

Tensor& ParamMap::Add(const std::string& name, Tensor t) {
  if (Has(name)) throw std::logic_error("duplicate parameter name: " + name);
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

Tensor& ParamMap::Get(const std::string& name) {
  for (auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw std::out_of_range("missing parameter: " + name);
}

const Tensor& ParamMap::Get(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw std::out_of_range("missing parameter: " + name);
}

bool ParamMap::Has(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return true;
  }
  return false;
}

std::uint64_t ParamMap::Hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [n, t] : items_) {
    h = HashString(n, h);
    h = t.HashValues(h);
  }
  return h;
}

std::int64_t ParamMap::TotalParams() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

ParamVars::ParamVars(ParamMap& params) {
  names_.reserve(params.size());
  vars_.reserve(params.size());
  for (auto& [name, t] : params.items()) {
    names_.push_back(name);
    vars_.push_back(ad::Leaf(t));
  }
}

const ad::Var& ParamVars::operator[](const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return vars_[i];
  }
  throw std::out_of_range("missing parameter var: " + name);
}

void Adam::Step(ParamMap& params, const std::vector<Tensor>& grads, double lr) {
  auto& items = params.items();
  if (grads.size() != items.size()) {
    throw std::invalid_argument("optimizer grads/params size mismatch");
  }
  if (slots_.empty()) {
    slots_.resize(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      slots_[i].m = Tensor::Zeros(items[i].second.shape());
      slots_[i].v = Tensor::Zeros(items[i].second.shape());
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < items.size(); ++i) {
    Tensor& p = items[i].second;
    const Tensor& g = grads[i];
    if (!g.SameShape(p)) throw std::invalid_argument("grad shape mismatch for " + items[i].first);
    Tensor& m = slots_[i].m;
    Tensor& v = slots_[i].v;
    for (std::int64_t k = 0; k < p.numel(); ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      double mhat = m[k] / bc1;
      double vhat = v[k] / bc2;
      double update = mhat / (std::sqrt(vhat) + cfg_.eps);
      if (cfg_.weight_decay > 0) update += cfg_.weight_decay * p[k];
      p[k] -= lr * update;
    }
  }
}

double GlobalNorm(const std::vector<Tensor>& grads) {
  double acc = 0;
  for (const auto& g : grads) {
    for (std::int64_t i = 0; i < g.numel(); ++i) acc += g[i] * g[i];
  }
  return std::sqrt(acc);
}

void ClipGlobalNorm(std::vector<Tensor>& grads, double max_norm) {
  double norm = GlobalNorm(grads);
  if (norm <= max_norm || norm == 0.0) return;
  double scale = max_norm / norm;
  for (auto& g : grads) {
    for (std::int64_t i = 0; i < g.numel(); ++i) g[i] *= scale;
  }
}

Tensor HeInit(std::vector<int> shape, int fan_in, Rng& rng, double gain) {
  Tensor t(std::move(shape));
  double scale = gain / std::sqrt(static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.Normal();
  return t;
}

}  // namespace specadapt
