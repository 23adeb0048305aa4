#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "repcali/errors.hpp"
#include "repcali/random.hpp"
#include "repcali/tensor.hpp"

namespace repcali {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
};

/// Compares reverse-mode gradients of `loss` w.r.t. each tensor in `params`
/// against central differences. The loss closure must read the tensors'
/// current values. At most `max_coords_per_tensor` coordinates are probed per
/// tensor (0 = all); sampled coordinates are drawn from `seed`.
template <class T>
GradCheckResult grad_check_tensors(const std::function<BasicTensor<T>()>& loss, std::vector<BasicTensor<T>> params,
                                   double h, std::size_t max_coords_per_tensor = 0, std::uint64_t seed = 0) {
  if (!(h > 0.0)) throw ValueError("grad_check: step must be positive");
  std::vector<bool> saved_flags;
  for (auto& p : params) {
    saved_flags.push_back(p.requires_grad());
    p.set_requires_grad(true);
    p.zero_grad();
  }
  std::vector<std::vector<T>> analytic;
  {
    Tape<T> tape;
    TapeGuard<T> guard(tape);
    auto y = loss();
    if (y.numel() != 1) throw ShapeError("grad_check: function must be scalar-valued");
    if (!std::isfinite(static_cast<double>(y.item()))) throw ValueError("grad_check: non-finite function value");
    backward(tape, y);
    for (auto& p : params) {
      if (p.has_grad()) {
        analytic.emplace_back(p.grad().begin(), p.grad().end());
      } else {
        analytic.emplace_back(p.numel(), T(0));
      }
    }
  }
  auto eval = [&] {
    NoGradGuard<T> off;
    const double v = static_cast<double>(loss().item());
    if (!std::isfinite(v)) throw ValueError("grad_check: non-finite function value under perturbation");
    return v;
  };
  SplitMix64 rng(seed);
  GradCheckResult res;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto data = params[t].mutable_data();
    std::vector<std::size_t> coords(data.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (max_coords_per_tensor != 0 && coords.size() > max_coords_per_tensor) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (auto i : coords) {
      const T orig = data[i];
      data[i] = static_cast<T>(orig + h);
      const double fp = eval();
      data[i] = static_cast<T>(orig - h);
      const double fm = eval();
      data[i] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double a = static_cast<double>(analytic[t][i]);
      const double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
      ++res.coords_checked;
      if (err > res.max_rel_error) {
        res.max_rel_error = err;
        res.worst_tensor = t;
        res.worst_index = i;
      }
    }
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    params[t].zero_grad();
    params[t].set_requires_grad(saved_flags[t]);
  }
  return res;
}

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
template <class T = double>
double grad_check(const std::function<BasicTensor<T>(const BasicTensor<T>&)>& f, const BasicTensor<T>& x,
                  double h = 1e-3) {
  BasicTensor<T> leaf = x.clone();
  return grad_check_tensors<T>([&] { return f(leaf); }, {leaf}, h).max_rel_error;
}

}  // namespace repcali
