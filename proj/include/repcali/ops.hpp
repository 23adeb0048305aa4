#pragma once

// Differentiable primitives. Every op computes its result eagerly and, when a
// tape is active on the calling thread and some input needs a gradient,
// records a backward closure on that tape.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "repcali/errors.hpp"
#include "repcali/random.hpp"
#include "repcali/tensor.hpp"

namespace repcali::ops {

namespace detail {

using repcali::detail::ImplPtr;

template <class T>
bool needs(const BasicTensor<T>& t) {
  return t.defined() && t.impl()->needs_grad();
}

template <class T, class... Rest>
Tape<T>* recording_tape(const BasicTensor<T>& first, const Rest&... rest) {
  Tape<T>* tape = active_tape<T>;
  if (tape == nullptr) return nullptr;
  return (needs(first) || ... || needs(rest)) ? tape : nullptr;
}

template <class T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// C[m,n] (+)= A[m,k] * B[k,n]
template <class T>
void gemm_nn(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T, via an explicit transpose of B.
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<T> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(a, bt.data(), c, m, k, n);
}

// C[m,n] += A[k,m]^T * B[k,n]
template <class T>
void gemm_tn(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t k, std::size_t m,
             std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* arow = a + p * m;
    const T* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T(0)) continue;
      T* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
BasicTensor<T> make_like(const Shape& shape) {
  return BasicTensor<T>(shape);
}

}  // namespace detail

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  BasicTensor<T> out(a.shape());
  auto o = out.mutable_data();
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (auto* tape = detail::recording_tape(a, b)) {
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    tape->record("add", {ai, bi}, oi, [ai, bi, oi] {
      for (auto* t : {ai.get(), bi.get()}) {
        if (!t->needs_grad()) continue;
        t->ensure_grad();
        for (std::size_t i = 0; i < oi->grad.size(); ++i) t->grad[i] += oi->grad[i];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  BasicTensor<T> out(a.shape());
  auto o = out.mutable_data();
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  if (auto* tape = detail::recording_tape(a, b)) {
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    tape->record("sub", {ai, bi}, oi, [ai, bi, oi] {
      if (ai->needs_grad()) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i];
      }
      if (bi->needs_grad()) {
        bi->ensure_grad();
        for (std::size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] -= oi->grad[i];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  BasicTensor<T> out(a.shape());
  auto o = out.mutable_data();
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (auto* tape = detail::recording_tape(a, b)) {
    auto ai = a.impl(), bi = b.impl(), oi = out.impl();
    tape->record("mul", {ai, bi}, oi, [ai, bi, oi] {
      if (ai->needs_grad()) {
        ai->ensure_grad();
        for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * bi->data[i];
      }
      if (bi->needs_grad()) {
        bi->ensure_grad();
        for (std::size_t i = 0; i < oi->grad.size(); ++i) bi->grad[i] += oi->grad[i] * ai->data[i];
      }
    });
  }
  return out;
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
  BasicTensor<T> out(a.shape());
  auto o = out.mutable_data();
  const auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = s * x[i];
  if (auto* tape = detail::recording_tape(a)) {
    auto ai = a.impl(), oi = out.impl();
    tape->record("scale", {ai}, oi, [ai, oi, s] {
      ai->ensure_grad();
      for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += s * oi->grad[i];
    });
  }
  return out;
}

/// Elementwise map with a caller-supplied derivative `df(x, y)` where y = f(x).
template <class T>
BasicTensor<T> unary(const BasicTensor<T>& a, std::function<T(T)> f, std::function<T(T, T)> df,
                     std::string name = "unary") {
  BasicTensor<T> out(a.shape());
  auto o = out.mutable_data();
  const auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(x[i]);
  if (auto* tape = detail::recording_tape(a)) {
    auto ai = a.impl(), oi = out.impl();
    tape->record(std::move(name), {ai}, oi, [ai, oi, df = std::move(df)] {
      ai->ensure_grad();
      for (std::size_t i = 0; i < oi->grad.size(); ++i) ai->grad[i] += oi->grad[i] * df(ai->data[i], oi->data[i]);
    });
  }
  return out;
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& a) {
  return unary<T>(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); }, "relu");
}

template <class T>
BasicTensor<T> tanh(const BasicTensor<T>& a) {
  return unary<T>(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; }, "tanh");
}

// tanh approximation of GELU
template <class T>
BasicTensor<T> gelu(const BasicTensor<T>& a) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T k = T(0.044715);
  return unary<T>(
      a,
      [](T x) { return T(0.5) * x * (T(1) + std::tanh(c * (x + k * x * x * x))); },
      [](T x, T) {
        const T u = c * (x + k * x * x * x);
        const T th = std::tanh(u);
        const T du = c * (T(1) + T(3) * k * x * x);
        return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * du;
      },
      "gelu");
}

/// y = x W + b over the last axis. `bias` may be undefined.
template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias = {}) {
  if (weight.rank() != 2) throw ShapeError("linear: weight must be rank 2, got " + shape_str(weight.shape()));
  const std::size_t in = weight.dim(0), outw = weight.dim(1);
  if (x.shape().back() != in) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != outw)) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t m = x.numel() / in;
  Shape oshape = x.shape();
  oshape.back() = outw;
  BasicTensor<T> out(oshape);
  auto o = out.mutable_data();
  if (bias.defined()) {
    const auto bv = bias.data();
    for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), o.begin() + static_cast<std::ptrdiff_t>(i * outw));
  }
  detail::gemm_nn(x.data().data(), weight.data().data(), o.data(), m, in, outw);
  if (auto* tape = detail::recording_tape(x, weight, bias)) {
    auto xi = x.impl(), wi = weight.impl(), oi = out.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    std::vector<detail::ImplPtr<T>> inputs{xi, wi};
    if (bi) inputs.push_back(bi);
    tape->record("linear", std::move(inputs), oi, [xi, wi, bi, oi, m, in, outw] {
      const T* g = oi->grad.data();
      if (xi->needs_grad()) {
        xi->ensure_grad();
        detail::gemm_nt(g, wi->data.data(), xi->grad.data(), m, outw, in);
      }
      if (wi->needs_grad()) {
        wi->ensure_grad();
        detail::gemm_tn(xi->data.data(), g, wi->grad.data(), m, in, outw);
      }
      if (bi && bi->needs_grad()) {
        bi->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < outw; ++j) bi->grad[j] += g[i * outw + j];
      }
    });
  }
  return out;
}

/// Normalizes each last-axis vector: gain * (v - mean) / sqrt(var + eps) + bias.
template <class T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gain, const BasicTensor<T>& bias,
                          T eps = T(1e-5)) {
  const std::size_t d = x.shape().back();
  if (gain.rank() != 1 || gain.dim(0) != d || bias.rank() != 1 || bias.dim(0) != d) {
    throw ShapeError("layer_norm: input " + shape_str(x.shape()) + " vs gain " + shape_str(gain.shape()) +
                     " / bias " + shape_str(bias.shape()));
  }
  if (!(eps >= T(0))) throw ValueError("layer_norm: eps must be nonnegative");
  const std::size_t rows = x.numel() / d;
  BasicTensor<T> out(x.shape());
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(rows);
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* v = xv.data() + r * d;
    T mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += v[j];
    mean /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (v[j] - mean) * (v[j] - mean);
    var /= T(d);
    const T rs = T(1) / std::sqrt(var + eps);
    rstd[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      // zero-variance rows map to the bias regardless of eps
      const T c = v[j] - mean;
      const T h = c == T(0) ? T(0) : c * rs;
      xhat[r * d + j] = h;
      o[r * d + j] = gv[j] * h + bv[j];
    }
  }
  if (auto* tape = detail::recording_tape(x, gain, bias)) {
    auto xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = out.impl();
    tape->record("layer_norm", {xi, gi, bi}, oi,
                 [xi, gi, bi, oi, rows, d, xhat = std::move(xhat), rstd = std::move(rstd)] {
                   const T* g = oi->grad.data();
                   if (gi->needs_grad()) {
                     gi->ensure_grad();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t j = 0; j < d; ++j) gi->grad[j] += g[r * d + j] * xhat[r * d + j];
                   }
                   if (bi->needs_grad()) {
                     bi->ensure_grad();
                     for (std::size_t r = 0; r < rows; ++r)
                       for (std::size_t j = 0; j < d; ++j) bi->grad[j] += g[r * d + j];
                   }
                   if (xi->needs_grad()) {
                     xi->ensure_grad();
                     for (std::size_t r = 0; r < rows; ++r) {
                       T mean_dh = 0, mean_dh_xh = 0;
                       for (std::size_t j = 0; j < d; ++j) {
                         const T dh = g[r * d + j] * gi->data[j];
                         mean_dh += dh;
                         mean_dh_xh += dh * xhat[r * d + j];
                       }
                       mean_dh /= T(d);
                       mean_dh_xh /= T(d);
                       for (std::size_t j = 0; j < d; ++j) {
                         const T dh = g[r * d + j] * gi->data[j];
                         xi->grad[r * d + j] += rstd[r] * (dh - mean_dh - xhat[r * d + j] * mean_dh_xh);
                       }
                     }
                   }
                 });
  }
  return out;
}

/// Softmax over the last axis with max subtraction.
template <class T>
BasicTensor<T> softmax(const BasicTensor<T>& x) {
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.numel() / k;
  BasicTensor<T> out(x.shape());
  const auto xv = x.data();
  auto o = out.mutable_data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* v = xv.data() + r * k;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      if (!std::isfinite(v[j])) throw ValueError("softmax: non-finite input at row " + std::to_string(r));
      mx = std::max(mx, v[j]);
    }
    T s = 0;
    for (std::size_t j = 0; j < k; ++j) {
      o[r * k + j] = std::exp(v[j] - mx);
      s += o[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) o[r * k + j] /= s;
  }
  if (auto* tape = detail::recording_tape(x)) {
    auto xi = x.impl(), oi = out.impl();
    tape->record("softmax", {xi}, oi, [xi, oi, rows, k] {
      xi->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = oi->data.data() + r * k;
        const T* g = oi->grad.data() + r * k;
        T dot = 0;
        for (std::size_t j = 0; j < k; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < k; ++j) xi->grad[r * k + j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

/// Gathers table rows; output shape is ids.shape + [d]. Backward scatter-adds.
template <class T>
BasicTensor<T> embedding_lookup(const BasicTensor<T>& table, const IntTensor& ids) {
  if (table.rank() != 2) throw ShapeError("embedding_lookup: table must be rank 2");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (std::size_t i = 0; i < ids.data.size(); ++i) {
    const int id = ids.data[i];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("embedding_lookup: id " + std::to_string(id) + " at position " + std::to_string(i) +
                       " outside [0, " + std::to_string(vocab) + ")");
    }
  }
  Shape oshape = ids.shape;
  oshape.push_back(d);
  BasicTensor<T> out(oshape);
  auto o = out.mutable_data();
  const auto tv = table.data();
  for (std::size_t i = 0; i < ids.data.size(); ++i) {
    const auto row = static_cast<std::size_t>(ids.data[i]);
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(row * d), d, o.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  if (auto* tape = detail::recording_tape(table)) {
    auto ti = table.impl(), oi = out.impl();
    tape->record("embedding_lookup", {ti}, oi, [ti, oi, ids = ids.data, d] {
      ti->ensure_grad();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto row = static_cast<std::size_t>(ids[i]);
        for (std::size_t j = 0; j < d; ++j) ti->grad[row * d + j] += oi->grad[i * d + j];
      }
    });
  }
  return out;
}

/// Mean negative log-likelihood of `targets` under softmax(logits) over
/// positions whose target differs from `ignore_id`.
template <class T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, const IntTensor& targets, int ignore_id = -1) {
  const std::size_t v = logits.shape().back();
  const std::size_t rows = logits.numel() / v;
  if (rows != targets.numel()) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " vs targets " +
                     shape_str(targets.shape));
  }
  const auto lv = logits.data();
  std::vector<T> probs(logits.numel());
  T total = 0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = targets.data[r];
    if (t == ignore_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(t) + " at position " + std::to_string(r) +
                       " outside [0, " + std::to_string(v) + ")");
    }
    const T* x = lv.data() + r * v;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, x[j]);
    T s = 0;
    for (std::size_t j = 0; j < v; ++j) s += std::exp(x[j] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t j = 0; j < v; ++j) probs[r * v + j] = std::exp(x[j] - lse);
    total += lse - x[t];
    ++count;
  }
  if (count == 0) throw ValueError("cross_entropy: every position is ignored");
  BasicTensor<T> out = BasicTensor<T>::scalar(total / T(count));
  if (auto* tape = detail::recording_tape(logits)) {
    auto li = logits.impl(), oi = out.impl();
    tape->record("cross_entropy", {li}, oi,
                 [li, oi, probs = std::move(probs), tg = targets.data, ignore_id, rows, v, count] {
                   li->ensure_grad();
                   const T g = oi->grad[0] / T(count);
                   for (std::size_t r = 0; r < rows; ++r) {
                     if (tg[r] == ignore_id) continue;
                     for (std::size_t j = 0; j < v; ++j) li->grad[r * v + j] += g * probs[r * v + j];
                     li->grad[r * v + static_cast<std::size_t>(tg[r])] -= g;
                   }
                 });
  }
  return out;
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  BasicTensor<T> out = BasicTensor<T>::scalar(s);
  if (auto* tape = detail::recording_tape(x)) {
    auto xi = x.impl(), oi = out.impl();
    tape->record("sum", {xi}, oi, [xi, oi] {
      xi->ensure_grad();
      for (auto& g : xi->grad) g += oi->grad[0];
    });
  }
  return out;
}

template <class T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return scale(sum(x), T(1) / T(x.numel()));
}

/// Prepends the same [P, d] block to every batch element of x [B, T, d].
template <class T>
BasicTensor<T> concat_seq(const BasicTensor<T>& prefix, const BasicTensor<T>& x) {
  if (prefix.rank() != 2 || x.rank() != 3 || prefix.dim(1) != x.dim(2)) {
    throw ShapeError("concat_seq: prefix " + shape_str(prefix.shape()) + " vs input " + shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0), t = x.dim(1), d = x.dim(2), p = prefix.dim(0);
  BasicTensor<T> out({b, p + t, d});
  auto o = out.mutable_data();
  const auto pv = prefix.data();
  const auto xv = x.data();
  for (std::size_t i = 0; i < b; ++i) {
    std::copy(pv.begin(), pv.end(), o.begin() + static_cast<std::ptrdiff_t>(i * (p + t) * d));
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(i * t * d), t * d,
                o.begin() + static_cast<std::ptrdiff_t>((i * (p + t) + p) * d));
  }
  if (auto* tape = detail::recording_tape(prefix, x)) {
    auto pi = prefix.impl(), xi = x.impl(), oi = out.impl();
    tape->record("concat_seq", {pi, xi}, oi, [pi, xi, oi, b, t, d, p] {
      for (std::size_t i = 0; i < b; ++i) {
        const T* g = oi->grad.data() + i * (p + t) * d;
        if (pi->needs_grad()) {
          pi->ensure_grad();
          for (std::size_t j = 0; j < p * d; ++j) pi->grad[j] += g[j];
        }
        if (xi->needs_grad()) {
          xi->ensure_grad();
          for (std::size_t j = 0; j < t * d; ++j) xi->grad[i * t * d + j] += g[p * d + j];
        }
      }
    });
  }
  return out;
}

struct AttentionOptions {
  std::size_t heads = 1;
  bool causal = false;
  // Leading keys visible to every query regardless of the causal mask
  // (prefix-tuning key/value prefixes).
  std::size_t visible_prefix = 0;
  // Optional [B * Tk] flags; nonzero marks a key that no query may attend.
  std::span<const std::uint8_t> key_mask{};
};

/// Scaled dot-product multi-head attention over q [B,Tq,D], k/v [B,Tk,D].
template <class T>
BasicTensor<T> attention(const BasicTensor<T>& q, const BasicTensor<T>& k, const BasicTensor<T>& v,
                         const AttentionOptions& opt) {
  if (q.rank() != 3 || k.rank() != 3 || v.shape() != k.shape() || q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2)) {
    throw ShapeError("attention: q " + shape_str(q.shape()) + " k " + shape_str(k.shape()) + " v " +
                     shape_str(v.shape()));
  }
  const std::size_t bsz = q.dim(0), tq = q.dim(1), tk = k.dim(1), dm = q.dim(2), nh = opt.heads;
  if (nh == 0 || dm % nh != 0) throw ShapeError("attention: width not divisible by head count");
  if (!opt.key_mask.empty() && opt.key_mask.size() != bsz * tk) throw ShapeError("attention: key mask size");
  const std::size_t dh = dm / nh;
  const T sc = T(1) / std::sqrt(T(dh));
  std::vector<T> probs(bsz * nh * tq * tk, T(0));
  std::vector<std::uint8_t> mask(opt.key_mask.begin(), opt.key_mask.end());
  const std::size_t pre = opt.visible_prefix;
  const bool causal = opt.causal;
  auto visible = [&](std::size_t b, std::size_t t, std::size_t j) {
    if (!mask.empty() && mask[b * tk + j]) return false;
    if (causal && j >= pre && j - pre > t) return false;
    return true;
  };
  BasicTensor<T> out(q.shape());
  const T* qd = q.data().data();
  const T* kd = k.data().data();
  const T* vd = v.data().data();
  T* od = out.mutable_data().data();
  std::vector<T> row(tk);
  for (std::size_t b = 0; b < bsz; ++b) {
    for (std::size_t h = 0; h < nh; ++h) {
      for (std::size_t t = 0; t < tq; ++t) {
        const T* qv = qd + (b * tq + t) * dm + h * dh;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < tk; ++j) {
          if (!visible(b, t, j)) continue;
          const T* kv = kd + (b * tk + j) * dm + h * dh;
          T s = 0;
          for (std::size_t e = 0; e < dh; ++e) s += qv[e] * kv[e];
          row[j] = s * sc;
          mx = std::max(mx, row[j]);
        }
        T* p = probs.data() + ((b * nh + h) * tq + t) * tk;
        if (mx == -std::numeric_limits<T>::infinity()) continue;  // no visible key: zero output
        T z = 0;
        for (std::size_t j = 0; j < tk; ++j) {
          if (!visible(b, t, j)) continue;
          p[j] = std::exp(row[j] - mx);
          z += p[j];
        }
        T* ov = od + (b * tq + t) * dm + h * dh;
        for (std::size_t j = 0; j < tk; ++j) {
          if (p[j] == T(0)) continue;
          p[j] /= z;
          const T* vv = vd + (b * tk + j) * dm + h * dh;
          for (std::size_t e = 0; e < dh; ++e) ov[e] += p[j] * vv[e];
        }
      }
    }
  }
  if (auto* tape = detail::recording_tape(q, k, v)) {
    auto qi = q.impl(), ki = k.impl(), vi = v.impl(), oi = out.impl();
    tape->record("attention", {qi, ki, vi}, oi,
                 [qi, ki, vi, oi, probs = std::move(probs), bsz, tq, tk, dm, nh, dh, sc] {
                   const T* g = oi->grad.data();
                   if (qi->needs_grad()) qi->ensure_grad();
                   if (ki->needs_grad()) ki->ensure_grad();
                   if (vi->needs_grad()) vi->ensure_grad();
                   std::vector<T> dp(tk);
                   for (std::size_t b = 0; b < bsz; ++b) {
                     for (std::size_t h = 0; h < nh; ++h) {
                       for (std::size_t t = 0; t < tq; ++t) {
                         const T* p = probs.data() + ((b * nh + h) * tq + t) * tk;
                         const T* gv = g + (b * tq + t) * dm + h * dh;
                         T dot = 0;
                         for (std::size_t j = 0; j < tk; ++j) {
                           if (p[j] == T(0)) {
                             dp[j] = 0;
                             continue;
                           }
                           const T* vv = vi->data.data() + (b * tk + j) * dm + h * dh;
                           T s = 0;
                           for (std::size_t e = 0; e < dh; ++e) s += gv[e] * vv[e];
                           dp[j] = s;
                           dot += p[j] * s;
                           if (vi->needs_grad()) {
                             T* dv = vi->grad.data() + (b * tk + j) * dm + h * dh;
                             for (std::size_t e = 0; e < dh; ++e) dv[e] += p[j] * gv[e];
                           }
                         }
                         const T* qv = qi->data.data() + (b * tq + t) * dm + h * dh;
                         T* dq = qi->needs_grad() ? qi->grad.data() + (b * tq + t) * dm + h * dh : nullptr;
                         for (std::size_t j = 0; j < tk; ++j) {
                           if (p[j] == T(0)) continue;
                           const T ds = p[j] * (dp[j] - dot) * sc;
                           const T* kv = ki->data.data() + (b * tk + j) * dm + h * dh;
                           if (dq)
                             for (std::size_t e = 0; e < dh; ++e) dq[e] += ds * kv[e];
                           if (ki->needs_grad()) {
                             T* dk = ki->grad.data() + (b * tk + j) * dm + h * dh;
                             for (std::size_t e = 0; e < dh; ++e) dk[e] += ds * qv[e];
                           }
                         }
                       }
                     }
                   }
                 });
  }
  return out;
}

/// Inverted dropout; identity when p == 0.
template <class T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double p, SplitMix64& rng) {
  if (p < 0.0 || p >= 1.0) throw ValueError("dropout: probability must be in [0, 1)");
  if (p == 0.0) return x;
  const T keep_scale = T(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = rng.uniform01() < p ? T(0) : keep_scale;
  BasicTensor<T> out(x.shape());
  auto o = out.mutable_data();
  const auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * mask[i];
  if (auto* tape = detail::recording_tape(x)) {
    auto xi = x.impl(), oi = out.impl();
    tape->record("dropout", {xi}, oi, [xi, oi, mask = std::move(mask)] {
      xi->ensure_grad();
      for (std::size_t i = 0; i < mask.size(); ++i) xi->grad[i] += oi->grad[i] * mask[i];
    });
  }
  return out;
}

}  // namespace repcali::ops
