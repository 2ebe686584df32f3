#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mattnet/autodiff/tensor.hpp"
#include "mattnet/rng.hpp"

namespace mattnet::ad {

/// Named learned tensors. Iteration is in name order, which keeps
/// checkpoints and optimizer updates deterministic.
class ParamStore {
 public:
  /// Adds a parameter; throws UsageError on duplicate names.
  Tensor& add(const std::string& name, Tensor value);
  Tensor& add_uniform(const std::string& name, Shape shape, double bound, Rng& rng);
  Tensor& add_zeros(const std::string& name, Shape shape);

  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  /// Throws UsageError when `name` is not registered.
  void remove(const std::string& name);

  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  void clear_grad();
  /// Global L2 norm of all present grads.
  double grad_norm() const;
  void scale_grads(double factor);

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Deep copy (fresh nodes, no grads).
  ParamStore clone() const;

 private:
  std::map<std::string, Tensor> params_;
};

/// Adam moments and hyper-parameters.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<double>> first;
  std::map<std::string, std::vector<double>> second;
};

/// One bias-corrected Adam update over every parameter, then clears grads.
/// Throws UsageError naming the first parameter without a grad.
void adam_step(ParamStore& params, AdamState& state, double lr);

}  // namespace mattnet::ad
