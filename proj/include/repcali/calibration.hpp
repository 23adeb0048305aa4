#pragma once

// Latent-space representation calibration: a learned, input-independent field
// d = LayerNorm(Embedding(shape seed)) added to the encoder output as
// p = h + lambda * d before the decoder consumes it.

#include <cstdint>
#include <string>

#include "repcali/errors.hpp"
#include "repcali/ops.hpp"
#include "repcali/random.hpp"
#include "repcali/tensor.hpp"

namespace repcali {

enum class SeedMode {
  positional,     // seed row = [0, 1, ..., n-1]; embedding table has n_max rows
  constant_ones,  // every seed entry is 1; a single embedding row is broadcast
};

inline std::string to_string(SeedMode m) { return m == SeedMode::positional ? "positional" : "constant_ones"; }

inline SeedMode seed_mode_from_string(const std::string& s) {
  if (s == "positional") return SeedMode::positional;
  if (s == "constant_ones") return SeedMode::constant_ones;
  throw ValueError("unknown seed mode '" + s + "' (expected positional or constant_ones)");
}

struct CalibrationOptions {
  double lambda = 1.0;
  SeedMode seed_mode = SeedMode::positional;
  bool zero_init = false;  // gain = 0 so the block starts as an exact no-op

  bool operator==(const CalibrationOptions&) const = default;
};

/// Shape seed of token ids, [B, n].
inline IntTensor build_shape_seed(SeedMode mode, std::size_t batch, std::size_t n, std::size_t n_max) {
  if (batch == 0 || n == 0) throw LengthError("shape seed needs positive batch and length");
  if (n > n_max) {
    throw LengthError("shape seed length " + std::to_string(n) + " exceeds n_max " + std::to_string(n_max));
  }
  IntTensor seed({batch, n}, 1);
  if (mode == SeedMode::positional) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < n; ++i) seed.data[b * n + i] = static_cast<int>(i);
  }
  return seed;
}

template <class T>
struct CalibrationBlock {
  // positional: [n_max, d_h]. constant_ones: [1, d_h], holding the embedding
  // row selected by seed id 1 (the only id the seed ever contains).
  BasicTensor<T> embed_table;
  BasicTensor<T> ln_gain;
  BasicTensor<T> ln_bias;
  double lambda = 1.0;
  SeedMode seed_mode = SeedMode::positional;
  std::size_t n_max = 0;

  static CalibrationBlock create(const CalibrationOptions& opt, std::size_t n_max, std::size_t d_h, SplitMix64& rng) {
    if (!(opt.lambda >= 0.0)) throw ValueError("calibration lambda must be nonnegative");
    CalibrationBlock blk;
    blk.lambda = opt.lambda;
    blk.seed_mode = opt.seed_mode;
    blk.n_max = n_max;
    const std::size_t rows = opt.seed_mode == SeedMode::positional ? n_max : 1;
    std::vector<T> table(rows * d_h);
    for (auto& v : table) v = static_cast<T>(rng.normal(0.0, 0.02));
    blk.embed_table = BasicTensor<T>({rows, d_h}, std::move(table));
    blk.ln_gain = BasicTensor<T>({d_h}, opt.zero_init ? T(0) : T(1));
    blk.ln_bias = BasicTensor<T>({d_h}, T(0));
    return blk;
  }

  std::size_t width() const { return ln_gain.dim(0); }

  std::size_t param_count() const { return embed_table.numel() + ln_gain.numel() + ln_bias.numel(); }
};

/// d = LayerNorm(Embedding(seed)), shape [B, n, d_h].
template <class T>
BasicTensor<T> compute_calibration(const CalibrationBlock<T>& blk, std::size_t batch, std::size_t n) {
  IntTensor seed = build_shape_seed(blk.seed_mode, batch, n, blk.n_max);
  if (blk.seed_mode == SeedMode::constant_ones) {
    for (auto& id : seed.data) id -= 1;  // seed id 1 lives in table row 0
  }
  return ops::layer_norm(ops::embedding_lookup(blk.embed_table, seed), blk.ln_gain, blk.ln_bias, T(1e-5));
}

/// p = h + lambda * d. Returns h itself when lambda == 0.
template <class T>
BasicTensor<T> calibrate(const CalibrationBlock<T>& blk, const BasicTensor<T>& h) {
  if (h.rank() != 3 || h.dim(2) != blk.width()) {
    throw ShapeError("calibrate: latent " + shape_str(h.shape()) + " does not have width " +
                     std::to_string(blk.width()));
  }
  if (blk.lambda == 0.0) return h;
  auto d = compute_calibration(blk, h.dim(0), h.dim(1));
  if (blk.lambda == 1.0) return ops::add(h, d);
  return ops::add(h, ops::scale(d, static_cast<T>(blk.lambda)));
}

struct RepCaliParamCount {
  std::uint64_t count = 0;          // what an instantiated block registers
  std::uint64_t paper_literal = 0;  // the published closed form, 2 * d_h
};

inline RepCaliParamCount repcali_param_count(SeedMode mode, std::uint64_t n_max, std::uint64_t d_h) {
  RepCaliParamCount c;
  c.count = (mode == SeedMode::positional ? n_max * d_h : d_h) + 2 * d_h;
  c.paper_literal = 2 * d_h;
  return c;
}

}  // namespace repcali
