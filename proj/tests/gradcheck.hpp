#pragma once

// Central finite-difference oracle for gradient tests. Independent of the
// reverse pass: it only perturbs leaf values and re-evaluates the forward.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mattnet/autodiff/param_store.hpp"
#include "mattnet/autodiff/tensor.hpp"

namespace mattnet::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<name>[<index>]"
  std::size_t checked = 0;
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-4) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline GradCheckResult grad_check(const std::function<ad::Tensor()>& loss_fn,
                                  std::vector<std::pair<std::string, ad::Tensor>> leaves, double h = 1e-5) {
  for (auto& [_, t] : leaves) t.zero_grad();
  ad::backward(loss_fn());
  GradCheckResult result;
  for (auto& [name, t] : leaves) {
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto values = t.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double plus, minus;
      {
        ad::NoGradGuard guard;
        values[i] = saved + h;
        plus = loss_fn().item();
        values[i] = saved - h;
        minus = loss_fn().item();
      }
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * h);
      const double err = relative_error(analytic[i], numeric);
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return result;
}

inline GradCheckResult grad_check(const std::function<ad::Tensor()>& loss_fn, ad::ParamStore& params,
                                  double h = 1e-5) {
  std::vector<std::pair<std::string, ad::Tensor>> leaves;
  for (auto& [name, t] : params) leaves.emplace_back(name, t);
  return grad_check(loss_fn, std::move(leaves), h);
}

inline ad::Tensor random_leaf(ad::Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> v(ad::shape_size(shape));
  for (double& x : v) x = scale * rng.normal();
  return ad::Tensor::from(std::move(shape), std::move(v), true);
}

}  // namespace mattnet::testing
