#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "repcali/model.hpp"

namespace repcali {

struct AdamOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient-norm clip; <= 0 disables
};

/// Adam over the trainable entries of a registry. Moment buffers are created
/// lazily and only for parameters whose trainable flag is set.
template <class T>
class Adam {
 public:
  explicit Adam(AdamOptions opt = {}) : opt_(opt) {}

  const AdamOptions& options() const { return opt_; }
  std::size_t step_count() const { return t_; }
  std::size_t buffer_count() const { return m_.size(); }
  bool has_buffer(const std::string& name) const { return m_.count(name) != 0; }

  /// Global L2 norm over the gradients of trainable parameters.
  static double grad_norm(ParamRegistry<T>& reg) {
    double sq = 0.0;
    for (auto& [name, p] : reg.entries()) {
      if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
      for (T g : p.tensor.grad()) sq += static_cast<double>(g) * g;
    }
    return std::sqrt(sq);
  }

  /// One update; returns the pre-clip gradient norm.
  double step(ParamRegistry<T>& reg) {
    const double norm = grad_norm(reg);
    const double clip = opt_.clip_norm > 0.0 && norm > opt_.clip_norm ? opt_.clip_norm / norm : 1.0;
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : reg.entries()) {
      if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
      auto& m = m_[name];
      auto& v = v_[name];
      const std::size_t n = p.tensor.numel();
      if (m.empty()) {
        m.assign(n, 0.0f);
        v.assign(n, 0.0f);
      }
      auto w = p.tensor.mutable_data();
      const auto g = p.tensor.grad();
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = static_cast<double>(g[i]) * clip;
        m[i] = static_cast<float>(opt_.beta1 * m[i] + (1.0 - opt_.beta1) * gi);
        v[i] = static_cast<float>(opt_.beta2 * v[i] + (1.0 - opt_.beta2) * gi * gi);
        const double mh = m[i] / bc1, vh = v[i] / bc2;
        w[i] = static_cast<T>(w[i] - opt_.lr * mh / (std::sqrt(vh) + opt_.eps));
      }
    }
    return norm;
  }

 private:
  AdamOptions opt_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<float>> m_, v_;
};

}  // namespace repcali
