#pragma once

// Training loop, greedy evaluation and batching over task datasets.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "repcali/errors.hpp"
#include "repcali/metrics.hpp"
#include "repcali/model.hpp"
#include "repcali/optim.hpp"
#include "repcali/tasks.hpp"

namespace repcali {

struct Batch {
  IntTensor src;    // [B, T_src]
  IntTensor y_in;   // bos + target
  IntTensor y_out;  // target + eos
  std::vector<std::size_t> index;  // positions in the source split
};

inline Batch make_batch(const std::vector<Example>& examples, const std::vector<std::size_t>& idx) {
  std::vector<std::vector<int>> src, yin, yout;
  std::size_t ts = 0, tt = 0;
  for (auto i : idx) {
    ts = std::max(ts, examples[i].src.size());
    tt = std::max(tt, examples[i].tgt.size() + 1);
  }
  for (auto i : idx) {
    const auto& ex = examples[i];
    std::vector<int> s = ex.src, a{kBos}, b = ex.tgt;
    a.insert(a.end(), ex.tgt.begin(), ex.tgt.end());
    b.push_back(kEos);
    s.resize(ts, kPad);
    a.resize(tt, kPad);
    b.resize(tt, kPad);
    src.push_back(std::move(s));
    yin.push_back(std::move(a));
    yout.push_back(std::move(b));
  }
  return {IntTensor::from_rows(src), IntTensor::from_rows(yin), IntTensor::from_rows(yout), idx};
}

/// Batches of at most `batch` examples sharing source and target lengths, so
/// no padding is needed. Order of batches and their contents follows `rng`
/// when given, otherwise the natural order.
inline std::vector<std::vector<std::size_t>> length_buckets(const std::vector<Example>& examples, std::size_t batch,
                                                            SplitMix64* rng) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  if (rng) rng->shuffle(order.begin(), order.end());
  std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> groups;
  for (auto i : order) groups[{examples[i].src.size(), examples[i].tgt.size()}].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [key, members] : groups)
    for (std::size_t s = 0; s < members.size(); s += batch)
      out.emplace_back(members.begin() + s, members.begin() + std::min(members.size(), s + batch));
  if (rng) rng->shuffle(out.begin(), out.end());
  return out;
}

// ---- evaluation ---------------------------------------------------------------

struct EvalOptions {
  std::size_t batch = 64;
  std::size_t self_bleu_max = 100;  // hypotheses used for the diversity scores
};

/// Strips everything from the first eos on; reports whether an eos was seen.
inline std::pair<Tokens, bool> strip_eos(const Tokens& seq) {
  auto it = std::find(seq.begin(), seq.end(), kEos);
  return {Tokens(seq.begin(), it), it != seq.end()};
}

/// Scores raw decoder outputs (eos included where produced) against targets.
inline MetricReport score_predictions(const std::vector<Example>& examples, const std::vector<Tokens>& raw,
                                      const EvalOptions& opt = {}) {
  if (examples.empty()) throw ValueError("evaluate: empty split");
  if (raw.size() != examples.size()) throw ValueError("evaluate: prediction count mismatch");
  std::size_t hit = 0, total = 0, exact = 0;
  double rouge = 0.0;
  std::vector<Tokens> hyps;
  std::vector<std::vector<Tokens>> refs;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    Tokens gold = examples[i].tgt;
    gold.push_back(kEos);
    auto [h, t] = token_matches(raw[i], gold);
    hit += h;
    total += t;
    auto [hyp, ended] = strip_eos(raw[i]);
    exact += ended && hyp == examples[i].tgt;
    rouge += rouge_l(hyp, examples[i].tgt);
    hyps.push_back(std::move(hyp));
    refs.push_back({examples[i].tgt});
  }
  MetricReport r;
  r["token_acc"] = static_cast<double>(hit) / total;
  r["exact_match"] = static_cast<double>(exact) / examples.size();
  r["bleu4"] = corpus_bleu(hyps, refs, 4);
  r["rouge_l"] = rouge / examples.size();
  const std::size_t k = std::min(hyps.size(), opt.self_bleu_max);
  if (k >= 2) {
    std::vector<Tokens> sample(hyps.begin(), hyps.begin() + k);
    r["self_bleu3"] = self_bleu(sample, 3);
    r["self_bleu4"] = self_bleu(sample, 4);
  }
  return r;
}

/// Greedy decoding of every example, in the split's order.
template <class T>
std::vector<Tokens> predict(const Seq2SeqModel<T>& model, const std::vector<Example>& examples,
                            const EvalOptions& opt = {}) {
  NoGradGuard<T> off;
  std::vector<Tokens> out(examples.size());
  for (const auto& idx : length_buckets(examples, opt.batch, nullptr)) {
    const Batch b = make_batch(examples, idx);
    const std::size_t max_len = std::min(model.config().n_max, b.y_out.shape[1] + 1);
    const auto mask = model.source_mask(b.src);
    auto rows = model.greedy_decode(model.latent(b.src), kBos, kEos, max_len, mask);
    for (std::size_t j = 0; j < idx.size(); ++j) out[idx[j]] = std::move(rows[j]);
  }
  return out;
}

/// Eval-mode greedy decoding followed by metric computation.
template <class T>
MetricReport evaluate(Seq2SeqModel<T>& model, const std::vector<Example>& examples, const EvalOptions& opt = {}) {
  if (examples.empty()) throw ValueError("evaluate: empty split");
  const bool was = model.training();
  model.set_training(false);
  auto preds = predict(model, examples, opt);
  model.set_training(was);
  return score_predictions(examples, preds, opt);
}

/// Same scoring driven by an arbitrary predictor (source -> raw output tokens).
inline MetricReport evaluate(const std::function<Tokens(const Tokens&)>& predictor, const std::vector<Example>& examples,
                             const EvalOptions& opt = {}) {
  std::vector<Tokens> preds;
  preds.reserve(examples.size());
  for (const auto& ex : examples) preds.push_back(predictor(ex.src));
  return score_predictions(examples, preds, opt);
}

/// Teacher-forced mean cross-entropy over a split (eval mode).
template <class T>
double split_loss(Seq2SeqModel<T>& model, const std::vector<Example>& examples, std::size_t batch = 64) {
  NoGradGuard<T> off;
  const bool was = model.training();
  model.set_training(false);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& idx : length_buckets(examples, batch, nullptr)) {
    const Batch b = make_batch(examples, idx);
    const double l = ops::cross_entropy(model.forward(b.src, b.y_in), b.y_out, kPad).item();
    sum += l * idx.size();
    count += idx.size();
  }
  model.set_training(was);
  return sum / count;
}

// ---- training -----------------------------------------------------------------

struct TrainOptions {
  AdamOptions adam;
  std::size_t batch = 32;
  std::size_t epochs = 20;
  std::size_t patience = 5;  // epochs without dev improvement before stopping; 0 disables
  std::size_t max_steps = 0;  // 0 = limited by epochs only
  std::uint64_t seed = 1;
  bool restore_best = true;   // reload the best-dev trainable values at the end
  std::size_t dev_limit = 0;  // evaluate on at most this many dev examples; 0 = all
};

struct LogRow {
  std::size_t step = 0;
  std::string split;
  double loss = 0.0;
  MetricReport metrics;
};

struct TrainResult {
  std::vector<LogRow> log;
  std::vector<double> step_losses;
  std::size_t steps = 0;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  MetricReport best_dev;
};

inline void write_log_csv(std::ostream& os, const std::vector<LogRow>& log) {
  os << "step,split,loss,token_acc,exact_match\n";
  char buf[160];
  for (const auto& r : log) {
    auto get = [&](const char* k) {
      auto it = r.metrics.find(k);
      return it == r.metrics.end() ? std::nan("") : it->second;
    };
    std::snprintf(buf, sizeof buf, "%zu,%s,%.6f,%.6f,%.6f\n", r.step, r.split.c_str(), r.loss, get("token_acc"),
                  get("exact_match"));
    os << buf;
  }
}

namespace detail {

inline bool dev_better(const MetricReport& a, const MetricReport& b) {
  if (b.empty()) return true;
  if (a.at("exact_match") != b.at("exact_match")) return a.at("exact_match") > b.at("exact_match");
  return a.at("token_acc") > b.at("token_acc");
}

}  // namespace detail

/// Adam over cross-entropy, updating only parameters whose trainable flag is
/// set. Dev metrics are recorded after every epoch and drive early stopping.
template <class T>
TrainResult train(Seq2SeqModel<T>& model, const Dataset& data, const TrainOptions& opt) {
  TrainResult res;
  if (opt.epochs == 0) return res;
  if (opt.batch == 0) throw ValueError("train: batch must be positive");
  SplitMix64 rng(opt.seed);
  model.reseed_dropout(rng.fork(1).next());
  Adam<T> adam(opt.adam);
  auto& reg = model.params();
  std::vector<Example> dev = data.dev;
  if (opt.dev_limit && dev.size() > opt.dev_limit) dev.resize(opt.dev_limit);

  std::map<std::string, std::vector<T>> best;
  auto snapshot = [&] {
    best.clear();
    for (auto& [name, p] : reg.entries())
      if (p.tensor.requires_grad()) best[name] = p.tensor.vec();
  };
  std::size_t since_best = 0;
  bool stop = false;
  for (std::size_t epoch = 0; epoch < opt.epochs && !stop; ++epoch) {
    model.set_training(true);
    double epoch_loss = 0.0;
    std::size_t epoch_batches = 0;
    for (const auto& idx : length_buckets(data.train, opt.batch, &rng)) {
      const Batch b = make_batch(data.train, idx);
      Tape<T> tape;
      double loss_value;
      {
        TapeGuard<T> guard(tape);
        auto loss = ops::cross_entropy(model.forward(b.src, b.y_in), b.y_out, kPad);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          throw ValueError("train: non-finite loss at step " + std::to_string(res.steps));
        }
        backward(tape, loss);
      }
      adam.step(reg);
      reg.zero_grads();
      res.step_losses.push_back(loss_value);
      epoch_loss += loss_value;
      ++epoch_batches;
      ++res.steps;
      if (opt.max_steps && res.steps >= opt.max_steps) {
        stop = true;
        break;
      }
    }
    ++res.epochs_run;
    res.log.push_back({res.steps, "train", epoch_loss / std::max<std::size_t>(1, epoch_batches), {}});
    if (!dev.empty()) {
      auto m = evaluate(model, dev);
      res.log.push_back({res.steps, "dev", split_loss(model, dev), m});
      if (detail::dev_better(m, res.best_dev)) {
        res.best_dev = m;
        res.best_epoch = epoch;
        since_best = 0;
        if (opt.restore_best) snapshot();
      } else if (opt.patience && ++since_best >= opt.patience) {
        stop = true;
      }
    }
  }
  if (opt.restore_best && !best.empty()) {
    for (auto& [name, values] : best) {
      auto w = reg.entries().at(name).tensor.mutable_data();
      std::copy(values.begin(), values.end(), w.begin());
    }
  }
  model.set_training(false);
  return res;
}

}  // namespace repcali
