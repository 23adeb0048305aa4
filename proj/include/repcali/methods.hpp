#pragma once

// Fine-tuning strategies: which tensors get injected into a base model, which
// parameters train, and the closed-form parameter counts they should have.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "repcali/calibration.hpp"
#include "repcali/errors.hpp"
#include "repcali/model.hpp"

namespace repcali {

enum class MethodKind { full, repcali, adapter, lora, prefix, prompt, bitfit, frozen };

inline const std::vector<MethodKind>& all_method_kinds() {
  static const std::vector<MethodKind> kinds{MethodKind::full,   MethodKind::repcali, MethodKind::adapter,
                                             MethodKind::lora,   MethodKind::prefix,  MethodKind::prompt,
                                             MethodKind::bitfit, MethodKind::frozen};
  return kinds;
}

inline std::string to_string(MethodKind k) {
  switch (k) {
    case MethodKind::full: return "full";
    case MethodKind::repcali: return "repcali";
    case MethodKind::adapter: return "adapter";
    case MethodKind::lora: return "lora";
    case MethodKind::prefix: return "prefix";
    case MethodKind::prompt: return "prompt";
    case MethodKind::bitfit: return "bitfit";
    case MethodKind::frozen: return "frozen";
  }
  return "?";
}

inline MethodKind method_kind_from_string(const std::string& s) {
  for (auto k : all_method_kinds())
    if (to_string(k) == s) return k;
  throw ValueError("unknown method kind '" + s + "'");
}

struct TuningMethodSpec {
  MethodKind kind = MethodKind::repcali;
  std::size_t d_m = 8;         // adapter bottleneck, LoRA rank, prefix reparameterization width
  std::size_t prefix_len = 4;  // n for prefix-tuning
  std::size_t prompt_len = 4;  // n for prompt tuning
  bool freeze_decoder = false;
  // Attached for kind == repcali; optional on top of kind == full.
  std::optional<CalibrationOptions> calibration = CalibrationOptions{};

  bool operator==(const TuningMethodSpec&) const = default;

  bool has_calibration() const { return kind == MethodKind::repcali || (kind == MethodKind::full && calibration); }

  void validate(const ModelConfig& cfg) const {
    const bool uses_dm = kind == MethodKind::adapter || kind == MethodKind::lora || kind == MethodKind::prefix;
    if (uses_dm && (d_m == 0 || d_m >= cfg.d_h)) {
      throw ValueError("method " + to_string(kind) + ": d_m must satisfy 0 < d_m < d_h");
    }
    if (kind == MethodKind::prefix && prefix_len == 0) throw ValueError("prefix: length must be positive");
    if (kind == MethodKind::prompt && prompt_len == 0) throw ValueError("prompt: length must be positive");
    if (kind == MethodKind::repcali && !calibration) throw ValueError("repcali: calibration options required");
  }
};

/// Injects the method's tensors into `model` and sets trainable flags.
/// full: everything; bitfit: base bias tensors; frozen: nothing; otherwise the
/// injected tensors only. freeze_decoder then clears every decoder flag.
template <class T>
void attach(Seq2SeqModel<T>& model, const TuningMethodSpec& spec, std::uint64_t seed) {
  if (model.method_attached() || model.injections().any()) {
    throw StateError("attach: model already has a tuning method attached");
  }
  spec.validate(model.config());
  SplitMix64 rng(seed ^ 0xA5A5A5A5F00DBEEFull);
  switch (spec.kind) {
    case MethodKind::adapter: model.add_adapters(spec.d_m, rng); break;
    case MethodKind::lora: model.add_lora(spec.d_m, rng); break;
    case MethodKind::prefix: model.add_prefix(spec.prefix_len, spec.d_m, rng); break;
    case MethodKind::prompt: model.add_prompt(spec.prompt_len, rng); break;
    default: break;
  }
  if (spec.has_calibration()) model.add_calibration(*spec.calibration, rng);

  for (auto& [name, p] : model.params().entries()) {
    bool on = false;
    switch (spec.kind) {
      case MethodKind::full: on = true; break;
      case MethodKind::bitfit: on = !p.injected && is_bias_param(name); break;
      case MethodKind::frozen: on = false; break;
      default: on = p.injected; break;
    }
    if (spec.freeze_decoder && is_decoder_param(name)) on = false;
    p.tensor.set_requires_grad(on);
  }
  model.mark_method_attached();
}

/// Closed forms from the published method comparison. `layers` is the total
/// number of transformer layers carrying the injection.
inline std::optional<std::uint64_t> paper_param_formula(MethodKind kind, std::uint64_t layers, std::uint64_t d_h,
                                                        std::uint64_t d_m, std::uint64_t n) {
  switch (kind) {
    case MethodKind::adapter:
    case MethodKind::lora: return layers * 2 * (2 * d_h * d_m);
    case MethodKind::prefix: return n * d_m + d_m * d_m + layers * 2 * d_h * d_m;
    case MethodKind::repcali: return 2 * d_h;
    default: return std::nullopt;  // registry count only
  }
}

struct AuditReport {
  std::string method;
  std::optional<std::uint64_t> formula_count;  // published closed form, where one exists
  std::optional<std::uint64_t> corrected_count;  // calibration block as instantiated
  std::uint64_t registry_count = 0;              // trainable scalars after attach
  std::uint64_t base_count = 0;
  std::uint64_t injected_count = 0;
  double pct_of_base = 0.0;
  bool match_flag = false;
  std::string note;
};

template <class T>
AuditReport audit_params(const Seq2SeqModel<T>& model, const TuningMethodSpec& spec) {
  const auto& cfg = model.config();
  AuditReport r;
  r.method = to_string(spec.kind);
  r.registry_count = model.count_trainable_params();
  r.base_count = model.params().count_base();
  r.injected_count = model.params().count_injected();
  r.pct_of_base = 100.0 * static_cast<double>(r.registry_count) / static_cast<double>(r.base_count);
  const std::uint64_t total_layers = 2 * cfg.layers;
  const std::uint64_t n = spec.kind == MethodKind::prompt ? spec.prompt_len : spec.prefix_len;
  r.formula_count = paper_param_formula(spec.kind, total_layers, cfg.d_h, spec.d_m, n);
  if (spec.kind == MethodKind::repcali) {
    const auto c = repcali_param_count(spec.calibration->seed_mode, cfg.n_max, cfg.d_h);
    r.corrected_count = c.count;
    r.match_flag = r.registry_count == c.count;
    if (r.registry_count != c.paper_literal) {
      r.note = "paper-literal 2*d_h = " + std::to_string(c.paper_literal) + " differs from registry " +
               std::to_string(r.registry_count);
    }
  } else if (r.formula_count) {
    r.match_flag = r.registry_count == *r.formula_count;
    if (!r.match_flag) r.note = "registry differs from closed form";
  } else {
    r.match_flag = true;
    r.note = "registry count only";
  }
  return r;
}

}  // namespace repcali
