#pragma once

// Sequence and classification metrics over integer tokens. All scores are in
// [0, 1] (or [-1, 1] for correlations); scaling to percent is presentation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "repcali/errors.hpp"

namespace repcali {

using Tokens = std::vector<int>;
using MetricReport = std::map<std::string, double>;

namespace detail {

inline std::map<Tokens, std::size_t> ngram_counts(const Tokens& s, std::size_t n) {
  std::map<Tokens, std::size_t> counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[Tokens(s.begin() + i, s.begin() + i + n)];
  return counts;
}

// Clipped n-gram matches of `hyp` against the per-gram maximum over references.
inline std::pair<std::size_t, std::size_t> clipped_matches(const Tokens& hyp, const std::vector<Tokens>& refs,
                                                          std::size_t n) {
  const auto hc = ngram_counts(hyp, n);
  std::map<Tokens, std::size_t> max_ref;
  for (const auto& r : refs)
    for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
  std::size_t match = 0, total = 0;
  for (const auto& [g, c] : hc) {
    total += c;
    auto it = max_ref.find(g);
    if (it != max_ref.end()) match += std::min(c, it->second);
  }
  return {match, total};
}

// Reference length closest to `c`; ties go to the shorter reference.
inline std::size_t closest_ref_length(std::size_t c, const std::vector<Tokens>& refs) {
  std::size_t best = refs.front().size();
  for (const auto& r : refs) {
    const auto d = [&](std::size_t x) { return x > c ? x - c : c - x; };
    if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best)) best = r.size();
  }
  return best;
}

inline double bleu_from_stats(const std::vector<std::size_t>& match, const std::vector<std::size_t>& total,
                              std::size_t hyp_len, std::size_t ref_len, double smooth_eps) {
  if (hyp_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t i = 0; i < match.size(); ++i) {
    double p;
    if (smooth_eps > 0.0) {
      p = (static_cast<double>(match[i]) + smooth_eps) / (static_cast<double>(total[i]) + smooth_eps);
    } else {
      if (match[i] == 0) return 0.0;
      p = static_cast<double>(match[i]) / static_cast<double>(total[i]);
    }
    log_sum += std::log(p);
  }
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - static_cast<double>(ref_len) / hyp_len);
  return bp * std::exp(log_sum / static_cast<double>(match.size()));
}

}  // namespace detail

/// Sentence BLEU up to `max_n`-grams with multi-reference clipping and the
/// closest-reference brevity penalty. smooth_eps = 0 is the unsmoothed score.
inline double bleu(const Tokens& hyp, const std::vector<Tokens>& refs, std::size_t max_n = 4, double smooth_eps = 0.0) {
  if (refs.empty()) throw ValueError("bleu: at least one reference required");
  if (max_n == 0) throw ValueError("bleu: max_n must be positive");
  if (hyp.empty()) return 0.0;
  std::vector<std::size_t> match(max_n), total(max_n);
  for (std::size_t n = 1; n <= max_n; ++n) std::tie(match[n - 1], total[n - 1]) = detail::clipped_matches(hyp, refs, n);
  return detail::bleu_from_stats(match, total, hyp.size(), detail::closest_ref_length(hyp.size(), refs), smooth_eps);
}

inline double bleu4(const Tokens& hyp, const std::vector<Tokens>& refs, double smooth_eps = 0.0) {
  return bleu(hyp, refs, 4, smooth_eps);
}

/// Corpus BLEU: n-gram statistics and lengths pooled over all sentences.
inline double corpus_bleu(const std::vector<Tokens>& hyps, const std::vector<std::vector<Tokens>>& refs,
                          std::size_t max_n = 4, double smooth_eps = 0.0) {
  if (hyps.size() != refs.size()) throw ValueError("corpus_bleu: hypothesis/reference count mismatch");
  std::vector<std::size_t> match(max_n, 0), total(max_n, 0);
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    if (refs[i].empty()) throw ValueError("corpus_bleu: empty reference set at " + std::to_string(i));
    for (std::size_t n = 1; n <= max_n; ++n) {
      auto [m, t] = detail::clipped_matches(hyps[i], refs[i], n);
      match[n - 1] += m;
      total[n - 1] += t;
    }
    hyp_len += hyps[i].size();
    ref_len += detail::closest_ref_length(hyps[i].size(), refs[i]);
  }
  return detail::bleu_from_stats(match, total, hyp_len, ref_len, smooth_eps);
}

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// ROUGE-L F1 (harmonic mean of LCS precision and recall).
inline double rouge_l(const Tokens& hyp, const Tokens& ref) {
  if (hyp.empty() || ref.empty()) return 0.0;
  const double l = static_cast<double>(lcs_length(hyp, ref));
  if (l == 0.0) return 0.0;
  const double p = l / hyp.size(), r = l / ref.size();
  return 2.0 * p * r / (p + r);
}

/// Mean BLEU of each hypothesis against all the others as a joint reference set.
inline double self_bleu(const std::vector<Tokens>& hyps, std::size_t max_n, double smooth_eps = 0.0) {
  if (hyps.size() < 2) throw ValueError("self_bleu: at least two hypotheses required");
  double sum = 0.0;
  std::vector<Tokens> others;
  others.reserve(hyps.size() - 1);
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    others.clear();
    for (std::size_t j = 0; j < hyps.size(); ++j)
      if (j != i) others.push_back(hyps[j]);
    sum += bleu(hyps[i], others, max_n, smooth_eps);
  }
  return sum / static_cast<double>(hyps.size());
}

/// Matthews correlation; 0 when any margin is empty.
inline double mcc(std::uint64_t tp, std::uint64_t tn, std::uint64_t fp, std::uint64_t fn) {
  const double a = static_cast<double>(tp), b = static_cast<double>(tn), c = static_cast<double>(fp),
               d = static_cast<double>(fn);
  const double denom = (a + c) * (a + d) * (b + c) * (b + d);
  if (denom == 0.0) return 0.0;
  return (a * b - c * d) / std::sqrt(denom);
}

namespace detail {

inline void require_permutation(const std::vector<int>& p, std::size_t m, const char* what) {
  if (p.size() != m) throw ValueError(std::string(what) + ": length mismatch");
  std::vector<bool> seen(m, false);
  for (int v : p) {
    if (v < 0 || static_cast<std::size_t>(v) >= m || seen[v]) {
      throw ValueError(std::string(what) + ": not a permutation of 0.." + std::to_string(m - 1));
    }
    seen[v] = true;
  }
}

}  // namespace detail

/// Kendall's tau between two orderings of items 0..m-1.
inline double kendall_tau(const std::vector<int>& predicted, const std::vector<int>& gold) {
  const std::size_t m = gold.size();
  if (m < 2) throw ValueError("kendall_tau: need at least two items");
  detail::require_permutation(gold, m, "kendall_tau gold");
  detail::require_permutation(predicted, m, "kendall_tau predicted");
  std::vector<std::size_t> pp(m), gp(m);
  for (std::size_t i = 0; i < m; ++i) {
    pp[predicted[i]] = i;
    gp[gold[i]] = i;
  }
  long long score = 0;
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a + 1; b < m; ++b) {
      const bool pa = pp[a] < pp[b], ga = gp[a] < gp[b];
      score += pa == ga ? 1 : -1;
    }
  return static_cast<double>(score) / (static_cast<double>(m) * (m - 1) / 2.0);
}

struct OrderScores {
  double tau = 0.0;  // mean Kendall's tau
  double pmr = 0.0;  // fraction of exact permutation matches
  double acc = 0.0;  // position-wise accuracy pooled over all items
};

inline OrderScores order_scores(const std::vector<std::vector<int>>& predicted,
                                const std::vector<std::vector<int>>& gold) {
  if (predicted.size() != gold.size() || gold.empty()) throw ValueError("order_scores: mismatched or empty input");
  OrderScores s;
  std::size_t hits = 0, items = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    s.tau += kendall_tau(predicted[i], gold[i]);
    s.pmr += predicted[i] == gold[i] ? 1.0 : 0.0;
    for (std::size_t j = 0; j < gold[i].size(); ++j) hits += predicted[i][j] == gold[i][j];
    items += gold[i].size();
  }
  s.tau /= gold.size();
  s.pmr /= gold.size();
  s.acc = static_cast<double>(hits) / items;
  return s;
}

/// Dialogue aggregate on the percentage scale.
inline double combined_score(double inform, double success, double bleu4_pct) {
  return (inform + success) * 0.5 + bleu4_pct;
}

/// Position-wise accuracy of `hyp` against `ref`; positions past the end of
/// `hyp` count as wrong, extra hypothesis tokens are ignored.
inline std::pair<std::size_t, std::size_t> token_matches(const Tokens& hyp, const Tokens& ref) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < ref.size() && i < hyp.size(); ++i) hit += hyp[i] == ref[i];
  return {hit, ref.size()};
}

}  // namespace repcali
