#include "mattnet/autodiff/param_store.hpp"

#include <cmath>

#include "mattnet/errors.hpp"

namespace mattnet::ad {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (!value.requires_grad()) {
    value = Tensor::from(value.shape(), std::vector<double>(value.values().begin(), value.values().end()), true);
  }
  auto [it, inserted] = params_.emplace(name, std::move(value));
  if (!inserted) throw UsageError("duplicate parameter name '" + name + "'");
  return it->second;
}

Tensor& ParamStore::add_uniform(const std::string& name, Shape shape, double bound, Rng& rng) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return add(name, Tensor::from(std::move(shape), std::move(v), true));
}

Tensor& ParamStore::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor::zeros(std::move(shape), true));
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

void ParamStore::remove(const std::string& name) {
  if (params_.erase(name) == 0) throw UsageError("unknown parameter '" + name + "'");
}

void ParamStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

void ParamStore::clear_grad() {
  for (auto& [_, t] : params_) t.clear_grad();
}

double ParamStore::grad_norm() const {
  double ss = 0.0;
  for (const auto& [_, t] : params_) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) ss += g * g;
  }
  return std::sqrt(ss);
}

void ParamStore::scale_grads(double factor) {
  for (auto& [_, t] : params_) {
    if (!t.has_grad()) continue;
    for (double& g : t.mutable_grad()) g *= factor;
  }
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& [name, t] : params_) {
    out.add(name, Tensor::from(t.shape(), std::vector<double>(t.values().begin(), t.values().end()), true));
  }
  return out;
}

void adam_step(ParamStore& params, AdamState& state, double lr) {
  for (const auto& [name, t] : params) {
    if (!t.has_grad()) throw UsageError("adam_step: parameter '" + name + "' has no gradient");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& [name, t] : params) {
    auto& m = state.first[name];
    auto& v = state.second[name];
    if (m.size() != t.size()) m.assign(t.size(), 0.0);
    if (v.size() != t.size()) v.assign(t.size(), 0.0);
    auto values = t.mutable_values();
    const auto grad = t.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      values[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
    t.clear_grad();
  }
}

}  // namespace mattnet::ad
