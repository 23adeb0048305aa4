#pragma once

// Finite-difference checks of every differentiable primitive and of the full
// model loss under each tuning method, evaluated in double precision.

#include <functional>
#include <string>
#include <vector>

#include "repcali/grad_check.hpp"
#include "repcali/methods.hpp"
#include "repcali/model.hpp"
#include "repcali/ops.hpp"

namespace repcali {

struct GradSuiteEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coords = 0;
  std::string worst;  // tensor holding the worst coordinate
};

namespace detail {

inline BasicTensor<double> suite_tensor(Shape shape, SplitMix64& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return BasicTensor<double>(std::move(shape), std::move(v));
}

inline GradSuiteEntry suite_entry(const std::string& name, const std::function<BasicTensor<double>()>& f,
                                  const std::vector<BasicTensor<double>>& params, const std::vector<std::string>& names,
                                  double h, std::size_t max_coords, std::uint64_t seed) {
  auto r = grad_check_tensors<double>(f, params, h, max_coords, seed);
  return {name, r.max_rel_error, r.coords_checked, names.empty() ? "" : names.at(r.worst_tensor)};
}

}  // namespace detail

/// Toy model used for the whole-model checks.
inline ModelConfig grad_suite_model_config() {
  ModelConfig c;
  c.layers = 2;
  c.d_h = 16;
  c.heads = 2;
  c.ffn_mult = 2;
  c.vocab = 12;
  c.n_max = 12;
  c.dropout = 0.0;
  return c;
}

/// Loss of `spec` attached to a fresh model, checked over every tensor of the
/// registry (base and injected). Injected tensors are perturbed away from
/// their initial values first so zero-initialized paths carry signal.
inline GradSuiteEntry grad_check_model(const TuningMethodSpec& spec, std::uint64_t seed, std::size_t max_coords,
                                       const ModelConfig& cfg = grad_suite_model_config(),
                                       std::size_t injected_coords = 0) {
  Seq2SeqModel<float> base(cfg, seed);
  attach(base, spec, seed + 1);
  auto m = base.cast<double>();
  m.set_training(false);
  SplitMix64 rng(seed + 2);
  std::vector<BasicTensor<double>> base_params, injected_params;
  std::vector<std::string> base_names, injected_names;
  for (auto& [name, p] : m.params().entries()) {
    if (p.injected) {
      for (auto& v : p.tensor.mutable_data()) v += rng.normal(0.0, 0.1);
      injected_params.push_back(p.tensor);
      injected_names.push_back(name);
    } else {
      base_params.push_back(p.tensor);
      base_names.push_back(name);
    }
  }
  IntTensor src({2, 5}, 0), y_in({2, 4}, 0), y_out({2, 4}, 0);
  for (auto& t : src.data) t = 4 + static_cast<int>(rng.below(cfg.vocab - 4));
  for (auto& t : y_in.data) t = 4 + static_cast<int>(rng.below(cfg.vocab - 4));
  for (auto& t : y_out.data) t = 4 + static_cast<int>(rng.below(cfg.vocab - 4));
  src.data[9] = kPad;  // exercise the key mask
  y_out.data[7] = kPad;
  auto loss = [&] { return ops::cross_entropy(m.forward(src, y_in), y_out, kPad); };
  // base tensors are sampled; injected tensors are small and checked in full
  auto e = detail::suite_entry("model+" + to_string(spec.kind), loss, base_params, base_names, 1e-5, max_coords,
                               seed + 3);
  if (!injected_params.empty()) {
    auto inj = detail::suite_entry("", loss, injected_params, injected_names, 1e-5, injected_coords, seed + 4);
    e.coords += inj.coords;
    if (inj.max_rel_error > e.max_rel_error) {
      e.max_rel_error = inj.max_rel_error;
      e.worst = inj.worst;
    }
  }
  return e;
}

inline std::vector<GradSuiteEntry> run_grad_suite(std::uint64_t seed = 1, std::size_t model_coords = 6) {
  using detail::suite_entry;
  using detail::suite_tensor;
  using D = BasicTensor<double>;
  std::vector<GradSuiteEntry> out;
  SplitMix64 rng(seed);
  const double h = 1e-5;

  {
    auto x = suite_tensor({4, 8}, rng), g = suite_tensor({8}, rng, 0.5, 1.5), b = suite_tensor({8}, rng);
    auto w = suite_tensor({4, 8}, rng);
    out.push_back(suite_entry("layer_norm", [&] { return ops::sum(ops::mul(ops::layer_norm(x, g, b, 1e-5), w)); },
                              {x, g, b}, {"x", "gain", "bias"}, h, 0, seed));
  }
  {
    auto x = suite_tensor({3, 7}, rng, -3, 3), w = suite_tensor({3, 7}, rng);
    out.push_back(suite_entry("softmax", [&] { return ops::sum(ops::mul(ops::softmax(x), w)); }, {x}, {"x"}, h, 0, seed));
  }
  {
    auto table = suite_tensor({6, 4}, rng), w = suite_tensor({2, 3, 4}, rng);
    IntTensor ids({2, 3}, std::vector<int>{5, 0, 5, 2, 2, 1});
    out.push_back(suite_entry("embedding_lookup",
                              [&] { return ops::sum(ops::mul(ops::embedding_lookup(table, ids), w)); }, {table},
                              {"table"}, h, 0, seed));
  }
  {
    auto logits = suite_tensor({2, 3, 5}, rng, -2, 2);
    IntTensor t({2, 3}, std::vector<int>{0, 4, -1, 1, 3, 3});
    out.push_back(suite_entry("cross_entropy", [&] { return ops::cross_entropy(logits, t, -1); }, {logits}, {"logits"},
                              h, 0, seed));
  }
  {
    auto x = suite_tensor({2, 3, 5}, rng), w = suite_tensor({5, 4}, rng), b = suite_tensor({4}, rng);
    auto r = suite_tensor({2, 3, 4}, rng);
    out.push_back(suite_entry("linear", [&] { return ops::sum(ops::mul(ops::linear(x, w, b), r)); }, {x, w, b},
                              {"x", "weight", "bias"}, h, 0, seed));
  }
  for (const char* act : {"relu", "tanh", "gelu"}) {
    auto x = suite_tensor({12}, rng, -2, 2), w = suite_tensor({12}, rng);
    const std::string a = act;
    auto f = [&]() -> D {
      const D y = a == "relu" ? ops::relu(x) : a == "tanh" ? ops::tanh(x) : ops::gelu(x);
      return ops::sum(ops::mul(y, w));
    };
    out.push_back(suite_entry(a, f, {x}, {"x"}, h, 0, seed));
  }
  {
    auto a = suite_tensor({3, 4}, rng), b = suite_tensor({3, 4}, rng);
    out.push_back(suite_entry("add_sub_mul_scale_mean",
                              [&] { return ops::mean(ops::mul(ops::sub(a, b), ops::scale(ops::add(a, b), 0.7))); },
                              {a, b}, {"a", "b"}, h, 0, seed));
  }
  {
    auto p = suite_tensor({2, 4}, rng), x = suite_tensor({2, 3, 4}, rng), w = suite_tensor({2, 5, 4}, rng);
    out.push_back(suite_entry("concat_seq", [&] { return ops::sum(ops::mul(ops::concat_seq(p, x), w)); }, {p, x},
                              {"prefix", "x"}, h, 0, seed));
  }
  {
    auto q = suite_tensor({2, 3, 8}, rng), k = suite_tensor({2, 5, 8}, rng), v = suite_tensor({2, 5, 8}, rng);
    auto w = suite_tensor({2, 3, 8}, rng);
    std::vector<std::uint8_t> mask{0, 0, 0, 0, 1, 0, 0, 1, 0, 0};
    ops::AttentionOptions opt;
    opt.heads = 2;
    opt.causal = true;
    opt.visible_prefix = 2;
    opt.key_mask = mask;
    out.push_back(suite_entry("attention", [&] { return ops::sum(ops::mul(ops::attention(q, k, v, opt), w)); },
                              {q, k, v}, {"q", "k", "v"}, h, 0, seed));
  }
  for (auto kind : all_method_kinds()) {
    TuningMethodSpec spec;
    spec.kind = kind;
    spec.d_m = 4;
    spec.prefix_len = 3;
    spec.prompt_len = 2;
    if (kind != MethodKind::repcali) spec.calibration.reset();
    out.push_back(grad_check_model(spec, seed + 10, model_coords));
  }
  {
    TuningMethodSpec spec;
    spec.kind = MethodKind::repcali;
    spec.calibration->seed_mode = SeedMode::constant_ones;
    spec.calibration->lambda = 0.5;
    auto e = grad_check_model(spec, seed + 20, model_coords);
    e.name = "model+repcali(constant_ones,lambda=0.5)";
    out.push_back(e);
  }
  {
    // default toy width; every tensor sampled
    ModelConfig toy;
    toy.dropout = 0.0;
    TuningMethodSpec spec;
    spec.kind = MethodKind::repcali;
    auto e = grad_check_model(spec, seed + 30, model_coords, toy, 64);
    e.name = "toy_model+repcali";
    out.push_back(e);
  }
  return out;
}

}  // namespace repcali
