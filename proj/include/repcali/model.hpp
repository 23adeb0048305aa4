#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "repcali/calibration.hpp"
#include "repcali/errors.hpp"
#include "repcali/ops.hpp"
#include "repcali/random.hpp"
#include "repcali/tensor.hpp"

namespace repcali {

inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;

struct ModelConfig {
  std::size_t layers = 2;  // per stack: L encoder blocks and L decoder blocks
  std::size_t d_h = 64;
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t vocab = 64;
  std::size_t n_max = 32;
  double dropout = 0.1;

  void validate() const {
    if (layers == 0 || d_h == 0 || heads == 0 || ffn_mult == 0 || vocab == 0 || n_max == 0) {
      throw ValueError("model config: all sizes must be positive");
    }
    if (d_h % heads != 0) throw ValueError("model config: heads must divide d_h");
    if (vocab < 4) throw ValueError("model config: vocab must reserve pad/bos/eos/unk");
    if (dropout < 0.0 || dropout >= 1.0) throw ValueError("model config: dropout must be in [0, 1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

template <class T>
struct Param {
  BasicTensor<T> tensor;
  bool injected = false;
};

/// Named parameter store. Names are unique and iterate in lexicographic order.
template <class T>
class ParamRegistry {
 public:
  BasicTensor<T> add(const std::string& name, BasicTensor<T> tensor, bool injected) {
    if (params_.count(name)) throw StateError("parameter '" + name + "' registered twice");
    tensor.set_requires_grad(true);
    params_.emplace(name, Param<T>{tensor, injected});
    return tensor;
  }

  const std::map<std::string, Param<T>>& entries() const { return params_; }
  std::map<std::string, Param<T>>& entries() { return params_; }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  BasicTensor<T> get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw IndexError("no parameter named '" + name + "'");
    return it->second.tensor;
  }

  std::uint64_t count_all() const {
    std::uint64_t n = 0;
    for (const auto& [_, p] : params_) n += p.tensor.numel();
    return n;
  }
  std::uint64_t count_trainable() const {
    std::uint64_t n = 0;
    for (const auto& [_, p] : params_)
      if (p.tensor.requires_grad()) n += p.tensor.numel();
    return n;
  }
  std::uint64_t count_base() const {
    std::uint64_t n = 0;
    for (const auto& [_, p] : params_)
      if (!p.injected) n += p.tensor.numel();
    return n;
  }
  std::uint64_t count_injected() const { return count_all() - count_base(); }

  void set_all_trainable(bool on) {
    for (auto& [_, p] : params_) p.tensor.set_requires_grad(on);
  }
  void zero_grads() {
    for (auto& [_, p] : params_) p.tensor.zero_grad();
  }

 private:
  std::map<std::string, Param<T>> params_;
};

inline bool is_decoder_param(const std::string& name) { return name.rfind("decoder.", 0) == 0; }
inline bool is_bias_param(const std::string& name) {
  return name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
}

/// Record of the tensors injected by a tuning method; enough to rebuild the
/// same structure in another model instance.
struct Injections {
  std::optional<std::size_t> adapter_dim;
  std::optional<std::size_t> lora_rank;
  std::optional<std::pair<std::size_t, std::size_t>> prefix;  // (length n, d_m)
  std::optional<std::size_t> prompt_len;
  std::optional<CalibrationOptions> calibration;

  bool any() const { return adapter_dim || lora_rank || prefix || prompt_len || calibration; }
};

/// Pre-norm encoder-decoder transformer with learned absolute positions and an
/// untied output projection. The encoder output is exposed as an explicit
/// latent and the decoder accepts any latent of matching width.
template <class T>
class Seq2SeqModel {
 public:
  Seq2SeqModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg), init_rng_(seed), dropout_rng_(seed ^ 0xD1B54A32D192ED03ull) {
    cfg_.validate();
    build();
  }

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry<T>& params() { return reg_; }
  const ParamRegistry<T>& params() const { return reg_; }
  const Injections& injections() const { return inj_; }

  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }
  void reseed_dropout(std::uint64_t seed) { dropout_rng_ = SplitMix64(seed); }

  const std::optional<CalibrationBlock<T>>& calibration() const { return calib_; }
  std::optional<CalibrationBlock<T>>& calibration() { return calib_; }

  std::size_t prompt_len() const { return prompt_.defined() ? prompt_.dim(0) : 0; }

  /// Key-padding flags for the latent of `src`, or empty when nothing is padded.
  std::vector<std::uint8_t> source_mask(const IntTensor& src) const {
    const std::size_t b = src.shape.at(0), t = src.shape.at(1), p = prompt_len();
    bool any = false;
    std::vector<std::uint8_t> mask(b * (p + t), 0);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < t; ++j)
        if (src.data[i * t + j] == kPad) {
          mask[i * (p + t) + p + j] = 1;
          any = true;
        }
    if (!any) mask.clear();
    return mask;
  }

  /// Latent h = Encoder(X), shape [B, prompt_len + T_src, d_h].
  BasicTensor<T> encode(const IntTensor& src) const {
    if (src.shape.size() != 2) throw ShapeError("encode: source must be [B, T]");
    const std::size_t b = src.shape[0], t = src.shape[1];
    if (t + prompt_len() > cfg_.n_max) {
      throw LengthError("encode: source length " + std::to_string(t) + " (+" + std::to_string(prompt_len()) +
                        " prompt) exceeds n_max " + std::to_string(cfg_.n_max));
    }
    auto x = ops::add(ops::embedding_lookup(enc_tok_, src), ops::embedding_lookup(enc_pos_, positions(b, t)));
    if (prompt_.defined()) x = ops::concat_seq(prompt_, x);
    x = drop(x);
    const auto mask = source_mask(src);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const auto& layer = enc_[l];
      auto a = self_attention(layer.self_attn, layer_norm(layer.ln1, x), false, layer.prefix, mask);
      x = ops::add(x, drop(adapt(layer.adapter_attn, a)));
      auto f = ffn(layer.ffn_in, layer.ffn_out, layer_norm(layer.ln2, x));
      x = ops::add(x, drop(adapt(layer.adapter_ffn, f)));
    }
    return layer_norm(enc_final_, x);
  }

  /// Logits [B, T_tgt, V]; position t sees y_prefix[<= t] and the whole latent.
  BasicTensor<T> decode(const BasicTensor<T>& latent, const IntTensor& y_prefix,
                        std::span<const std::uint8_t> latent_mask = {}) const {
    if (latent.rank() != 3 || latent.dim(2) != cfg_.d_h) {
      throw ShapeError("decode: latent " + shape_str(latent.shape()) + " must be [B, T, " + std::to_string(cfg_.d_h) +
                       "]");
    }
    if (y_prefix.shape.size() != 2 || y_prefix.shape[0] != latent.dim(0)) {
      throw ShapeError("decode: target prefix batch does not match latent");
    }
    const std::size_t b = y_prefix.shape[0], t = y_prefix.shape[1];
    if (t > cfg_.n_max) throw LengthError("decode: target length exceeds n_max");
    auto x = ops::add(ops::embedding_lookup(dec_tok_, y_prefix), ops::embedding_lookup(dec_pos_, positions(b, t)));
    x = drop(x);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const auto& layer = dec_[l];
      auto a = self_attention(layer.self_attn, layer_norm(layer.ln1, x), true, layer.prefix, {});
      x = ops::add(x, drop(adapt(layer.adapter_attn, a)));
      auto c = cross_attention(layer.cross_attn, layer_norm(layer.ln2, x), latent, latent_mask);
      x = ops::add(x, drop(c));
      auto f = ffn(layer.ffn_in, layer.ffn_out, layer_norm(layer.ln3, x));
      x = ops::add(x, drop(adapt(layer.adapter_ffn, f)));
    }
    return ops::linear(layer_norm(dec_final_, x), out_w_, out_b_);
  }

  /// Decoder input for the attached configuration: the encoder latent,
  /// calibrated when a calibration block is attached.
  BasicTensor<T> latent(const IntTensor& src) const {
    auto h = encode(src);
    if (calib_) h = calibrate(*calib_, h);
    return h;
  }

  BasicTensor<T> forward(const IntTensor& src, const IntTensor& y_prefix) const {
    const auto mask = source_mask(src);
    return decode(latent(src), y_prefix, mask);
  }

  /// Iterative argmax continuation from `bos`; each returned sequence ends at
  /// the first `eos` (included) or after max_len tokens. Ties pick the
  /// smaller token id.
  std::vector<std::vector<int>> greedy_decode(const BasicTensor<T>& latent, int bos, int eos, std::size_t max_len,
                                              std::span<const std::uint8_t> latent_mask = {}) const {
    if (max_len > cfg_.n_max) throw LengthError("greedy_decode: max_len exceeds n_max");
    NoGradGuard<T> off;
    const std::size_t b = latent.dim(0);
    std::vector<std::vector<int>> out(b);
    std::vector<bool> done(b, false);
    std::vector<std::vector<int>> prefix(b, std::vector<int>{bos});
    for (std::size_t step = 0; step < max_len; ++step) {
      auto logits = decode(latent, IntTensor::from_rows(prefix), latent_mask);
      const std::size_t t = step + 1, v = cfg_.vocab;
      const auto lv = logits.data();
      bool all_done = true;
      for (std::size_t i = 0; i < b; ++i) {
        int best = 0;
        if (!done[i]) {
          const T* row = lv.data() + (i * t + step) * v;
          for (std::size_t j = 1; j < v; ++j)
            if (row[j] > row[best]) best = static_cast<int>(j);
          out[i].push_back(best);
          if (best == eos) done[i] = true;
        } else {
          best = kPad;
        }
        prefix[i].push_back(best);
        all_done = all_done && done[i];
      }
      if (all_done) break;
    }
    return out;
  }

  std::uint64_t count_trainable_params() const { return reg_.count_trainable(); }

  bool method_attached() const { return method_attached_; }
  void mark_method_attached() { method_attached_ = true; }

  // --- injection points used by tuning methods --------------------------------

  void add_adapters(std::size_t d_m, SplitMix64& rng) {
    require_fresh(inj_.adapter_dim, "adapter");
    auto make = [&](const std::string& prefix) {
      Adapter a;
      a.down = reg_.add(prefix + ".down", uniform_fan_in({cfg_.d_h, d_m}, rng), true);
      a.up = reg_.add(prefix + ".up", BasicTensor<T>({d_m, cfg_.d_h}), true);
      return a;
    };
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      enc_[l].adapter_attn = make(layer_name("encoder", l) + ".adapter_attn");
      enc_[l].adapter_ffn = make(layer_name("encoder", l) + ".adapter_ffn");
      dec_[l].adapter_attn = make(layer_name("decoder", l) + ".adapter_attn");
      dec_[l].adapter_ffn = make(layer_name("decoder", l) + ".adapter_ffn");
    }
    inj_.adapter_dim = d_m;
  }

  void add_lora(std::size_t rank, SplitMix64& rng) {
    require_fresh(inj_.lora_rank, "lora");
    auto make = [&](Linear& lin, const std::string& prefix) {
      lin.lora_down = reg_.add(prefix + ".lora_down", uniform_fan_in({cfg_.d_h, rank}, rng), true);
      lin.lora_up = reg_.add(prefix + ".lora_up", BasicTensor<T>({rank, cfg_.d_h}), true);
      lin.lora_scale = T(1);  // alpha / rank with alpha = rank
    };
    auto inject = [&](auto& layer, const char* stack, std::size_t l) {
      const std::string base = layer_name(stack, l) + ".self_attn";
      make(layer.self_attn.q, base + ".q");
      make(layer.self_attn.v, base + ".v");
    };
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      inject(enc_[l], "encoder", l);
      inject(dec_[l], "decoder", l);
    }
    inj_.lora_rank = rank;
  }

  void add_prefix(std::size_t n, std::size_t d_m, SplitMix64& rng) {
    require_fresh(inj_.prefix, "prefix");
    std::vector<T> seed(n * d_m);
    for (auto& v : seed) v = static_cast<T>(rng.uniform(-1.0, 1.0));
    prefix_seed_ = reg_.add("prefix.seed", BasicTensor<T>({n, d_m}, std::move(seed)), true);
    prefix_shared_ = reg_.add("prefix.shared", uniform_fan_in({d_m, d_m}, rng), true);
    auto inject = [&](PrefixHeads& heads, const char* stack, std::size_t l) {
      const std::string base = layer_name(stack, l) + ".prefix";
      heads.key = reg_.add(base + ".key", uniform_fan_in({d_m, cfg_.d_h}, rng), true);
      heads.value = reg_.add(base + ".value", uniform_fan_in({d_m, cfg_.d_h}, rng), true);
    };
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      inject(enc_[l].prefix, "encoder", l);
      inject(dec_[l].prefix, "decoder", l);
    }
    inj_.prefix = std::make_pair(n, d_m);
  }

  void add_prompt(std::size_t n, SplitMix64& rng) {
    require_fresh(inj_.prompt_len, "prompt");
    if (n + 1 > cfg_.n_max) throw LengthError("prompt length leaves no room for input tokens");
    prompt_ = reg_.add("prompt.embeddings", normal_init({n, cfg_.d_h}, 0.02, rng), true);
    inj_.prompt_len = n;
  }

  void add_calibration(const CalibrationOptions& opt, SplitMix64& rng) {
    require_fresh(inj_.calibration, "calibration");
    auto blk = CalibrationBlock<T>::create(opt, cfg_.n_max, cfg_.d_h, rng);
    blk.embed_table = reg_.add("calibration.embed", blk.embed_table, true);
    blk.ln_gain = reg_.add("calibration.ln.gain", blk.ln_gain, true);
    blk.ln_bias = reg_.add("calibration.ln.bias", blk.ln_bias, true);
    calib_ = std::move(blk);
    inj_.calibration = opt;
  }

  /// Same architecture, injections and values in another scalar type.
  template <class U>
  Seq2SeqModel<U> cast() const {
    Seq2SeqModel<U> m(cfg_, 0);
    SplitMix64 rng(0);
    if (inj_.adapter_dim) m.add_adapters(*inj_.adapter_dim, rng);
    if (inj_.lora_rank) m.add_lora(*inj_.lora_rank, rng);
    if (inj_.prefix) m.add_prefix(inj_.prefix->first, inj_.prefix->second, rng);
    if (inj_.prompt_len) m.add_prompt(*inj_.prompt_len, rng);
    if (inj_.calibration) m.add_calibration(*inj_.calibration, rng);
    for (const auto& [name, p] : reg_.entries()) {
      auto dst = m.params().get(name);
      auto src = p.tensor.data();
      auto d = dst.mutable_data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<U>(src[i]);
      dst.set_requires_grad(p.tensor.requires_grad());
    }
    m.set_training(training_);
    if (method_attached_) m.mark_method_attached();
    return m;
  }

  /// Deep copy with independent storage.
  Seq2SeqModel clone() const { return cast<T>(); }

 private:
  struct Linear {
    BasicTensor<T> w, b;
    BasicTensor<T> lora_down, lora_up;
    T lora_scale = T(1);
  };
  struct Attention {
    Linear q, k, v, o;
  };
  struct Norm {
    BasicTensor<T> gain, bias;
  };
  struct Adapter {
    BasicTensor<T> down, up;
  };
  struct PrefixHeads {
    BasicTensor<T> key, value;
  };
  struct EncoderLayer {
    Norm ln1, ln2;
    Attention self_attn;
    Linear ffn_in, ffn_out;
    Adapter adapter_attn, adapter_ffn;
    PrefixHeads prefix;
  };
  struct DecoderLayer {
    Norm ln1, ln2, ln3;
    Attention self_attn, cross_attn;
    Linear ffn_in, ffn_out;
    Adapter adapter_attn, adapter_ffn;
    PrefixHeads prefix;
  };

  static std::string layer_name(const char* stack, std::size_t l) {
    return std::string(stack) + ".layers." + std::to_string(l);
  }

  template <class Opt>
  static void require_fresh(const Opt& slot, const char* what) {
    if (slot) throw StateError(std::string(what) + " already attached");
  }

  BasicTensor<T> uniform_fan_in(Shape shape, SplitMix64& rng) const {
    const double a = 1.0 / std::sqrt(static_cast<double>(shape[0]));
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.uniform(-a, a));
    return BasicTensor<T>(std::move(shape), std::move(v));
  }
  BasicTensor<T> normal_init(Shape shape, double sd, SplitMix64& rng) const {
    std::vector<T> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<T>(rng.normal(0.0, sd));
    return BasicTensor<T>(std::move(shape), std::move(v));
  }

  Linear make_linear(const std::string& name, std::size_t in, std::size_t out) {
    Linear lin;
    lin.w = reg_.add(name + ".weight", uniform_fan_in({in, out}, init_rng_), false);
    lin.b = reg_.add(name + ".bias", BasicTensor<T>({out}), false);
    return lin;
  }
  Norm make_norm(const std::string& name) {
    return {reg_.add(name + ".gain", BasicTensor<T>({cfg_.d_h}, T(1)), false),
            reg_.add(name + ".bias", BasicTensor<T>({cfg_.d_h}), false)};
  }
  Attention make_attention(const std::string& name) {
    return {make_linear(name + ".q", cfg_.d_h, cfg_.d_h), make_linear(name + ".k", cfg_.d_h, cfg_.d_h),
            make_linear(name + ".v", cfg_.d_h, cfg_.d_h), make_linear(name + ".o", cfg_.d_h, cfg_.d_h)};
  }

  void build() {
    const std::size_t d = cfg_.d_h, ff = cfg_.d_h * cfg_.ffn_mult;
    enc_tok_ = reg_.add("encoder.embed.tokens", normal_init({cfg_.vocab, d}, 0.02, init_rng_), false);
    enc_pos_ = reg_.add("encoder.embed.positions", normal_init({cfg_.n_max, d}, 0.02, init_rng_), false);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const auto base = layer_name("encoder", l);
      EncoderLayer layer;
      layer.ln1 = make_norm(base + ".ln1");
      layer.self_attn = make_attention(base + ".self_attn");
      layer.ln2 = make_norm(base + ".ln2");
      layer.ffn_in = make_linear(base + ".ffn.in", d, ff);
      layer.ffn_out = make_linear(base + ".ffn.out", ff, d);
      enc_.push_back(std::move(layer));
    }
    enc_final_ = make_norm("encoder.final_ln");
    dec_tok_ = reg_.add("decoder.embed.tokens", normal_init({cfg_.vocab, d}, 0.02, init_rng_), false);
    dec_pos_ = reg_.add("decoder.embed.positions", normal_init({cfg_.n_max, d}, 0.02, init_rng_), false);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const auto base = layer_name("decoder", l);
      DecoderLayer layer;
      layer.ln1 = make_norm(base + ".ln1");
      layer.self_attn = make_attention(base + ".self_attn");
      layer.ln2 = make_norm(base + ".ln2");
      layer.cross_attn = make_attention(base + ".cross_attn");
      layer.ln3 = make_norm(base + ".ln3");
      layer.ffn_in = make_linear(base + ".ffn.in", d, ff);
      layer.ffn_out = make_linear(base + ".ffn.out", ff, d);
      dec_.push_back(std::move(layer));
    }
    dec_final_ = make_norm("decoder.final_ln");
    out_w_ = reg_.add("decoder.output.weight", uniform_fan_in({d, cfg_.vocab}, init_rng_), false);
    out_b_ = reg_.add("decoder.output.bias", BasicTensor<T>({cfg_.vocab}), false);
  }

  static IntTensor positions(std::size_t b, std::size_t t) {
    IntTensor p({b, t}, 0);
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < t; ++j) p.data[i * t + j] = static_cast<int>(j);
    return p;
  }

  BasicTensor<T> drop(const BasicTensor<T>& x) const {
    if (!training_ || cfg_.dropout == 0.0) return x;
    return ops::dropout(x, cfg_.dropout, dropout_rng_);
  }

  BasicTensor<T> layer_norm(const Norm& n, const BasicTensor<T>& x) const {
    return ops::layer_norm(x, n.gain, n.bias, T(1e-5));
  }

  BasicTensor<T> project(const Linear& lin, const BasicTensor<T>& x) const {
    auto y = ops::linear(x, lin.w, lin.b);
    if (lin.lora_down.defined()) {
      auto delta = ops::linear(ops::linear(x, lin.lora_down), lin.lora_up);
      if (lin.lora_scale != T(1)) delta = ops::scale(delta, lin.lora_scale);
      y = ops::add(y, delta);
    }
    return y;
  }

  BasicTensor<T> adapt(const Adapter& a, const BasicTensor<T>& z) const {
    if (!a.down.defined()) return z;
    return ops::add(z, ops::linear(ops::relu(ops::linear(z, a.down)), a.up));
  }

  BasicTensor<T> ffn(const Linear& in, const Linear& out, const BasicTensor<T>& x) const {
    return project(out, ops::gelu(project(in, x)));
  }

  BasicTensor<T> self_attention(const Attention& att, const BasicTensor<T>& x, bool causal, const PrefixHeads& prefix,
                                std::span<const std::uint8_t> mask) const {
    auto q = project(att.q, x);
    auto k = project(att.k, x);
    auto v = project(att.v, x);
    ops::AttentionOptions opt;
    opt.heads = cfg_.heads;
    opt.causal = causal;
    std::vector<std::uint8_t> full_mask;
    if (prefix.key.defined()) {
      auto hidden = ops::tanh(ops::linear(prefix_seed_, prefix_shared_));
      k = ops::concat_seq(ops::linear(hidden, prefix.key), k);
      v = ops::concat_seq(ops::linear(hidden, prefix.value), v);
      const std::size_t n = prefix_seed_.dim(0);
      opt.visible_prefix = n;
      if (!mask.empty()) {
        const std::size_t b = x.dim(0), t = x.dim(1);
        full_mask.assign(b * (n + t), 0);
        for (std::size_t i = 0; i < b; ++i)
          for (std::size_t j = 0; j < t; ++j) full_mask[i * (n + t) + n + j] = mask[i * t + j];
        mask = full_mask;
      }
    }
    opt.key_mask = mask;
    return project(att.o, ops::attention(q, k, v, opt));
  }

  BasicTensor<T> cross_attention(const Attention& att, const BasicTensor<T>& x, const BasicTensor<T>& mem,
                                 std::span<const std::uint8_t> mask) const {
    ops::AttentionOptions opt;
    opt.heads = cfg_.heads;
    opt.key_mask = mask;
    return project(att.o, ops::attention(project(att.q, x), project(att.k, mem), project(att.v, mem), opt));
  }

  ModelConfig cfg_;
  ParamRegistry<T> reg_;
  Injections inj_;
  SplitMix64 init_rng_;
  mutable SplitMix64 dropout_rng_;
  bool training_ = false;
  bool method_attached_ = false;

  BasicTensor<T> enc_tok_, enc_pos_, dec_tok_, dec_pos_, out_w_, out_b_;
  Norm enc_final_, dec_final_;
  std::vector<EncoderLayer> enc_;
  std::vector<DecoderLayer> dec_;
  BasicTensor<T> prefix_seed_, prefix_shared_, prompt_;
  std::optional<CalibrationBlock<T>> calib_;
};

/// decode(calibrate(encode(X)), y_prefix) with an explicit block.
template <class T>
BasicTensor<T> calibrated_forward(const Seq2SeqModel<T>& model, const CalibrationBlock<T>& block, const IntTensor& src,
                                  const IntTensor& y_prefix) {
  const auto mask = model.source_mask(src);
  return model.decode(calibrate(block, model.encode(src)), y_prefix, mask);
}

}  // namespace repcali
