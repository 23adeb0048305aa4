#pragma once

// Experiment drivers: base-model preparation, single runs, multi-seed
// averaging and the method comparison table.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "repcali/config.hpp"
#include "repcali/methods.hpp"
#include "repcali/model.hpp"
#include "repcali/tasks.hpp"
#include "repcali/trainer.hpp"

namespace repcali {

/// Marker token prepended to the sources of the i-th pretraining task.
inline int pretrain_tag(const ExperimentConfig& c, std::size_t i) { return static_cast<int>(c.model.vocab) - 1 - static_cast<int>(i); }

inline Dataset make_pretrain_data(const ExperimentConfig& c) {
  Dataset ds;
  for (std::size_t i = 0; i < c.pretrain.tasks.size(); ++i) {
    TaskSpec ts = c.task;
    ts.kind = c.pretrain.tasks[i];
    ts.tag = pretrain_tag(c, i);
    ts.train_size = c.pretrain.size;
    ts.dev_size = 50;
    ts.test_size = 0;
    ts.seed = c.pretrain.seed + 1000 * (i + 1);
    auto d = generate_task(ts);
    ds.train.insert(ds.train.end(), d.train.begin(), d.train.end());
    ds.dev.insert(ds.dev.end(), d.dev.begin(), d.dev.end());
  }
  ds.spec = c.task;
  return ds;
}

inline TrainOptions train_options(const ExperimentConfig& c, std::uint64_t seed) {
  TrainOptions o;
  o.adam.lr = c.train.lr;
  o.batch = c.train.batch;
  o.epochs = c.train.epochs;
  o.patience = c.train.patience;
  o.max_steps = c.train.steps;
  o.dev_limit = c.train.dev_limit;
  o.seed = seed;
  return o;
}

/// The shared starting point of every arm: a randomly initialized model,
/// optionally pretrained on the marker-tagged task mixture.
inline Seq2SeqModel<float> build_base(const ExperimentConfig& c, TrainResult* log = nullptr) {
  Seq2SeqModel<float> base(c.model, c.pretrain.seed);
  if (c.pretrain.steps > 0) {
    TrainOptions o;
    o.adam.lr = c.pretrain.lr;
    o.batch = c.train.batch;
    o.epochs = SIZE_MAX;
    o.max_steps = c.pretrain.steps;
    o.patience = 0;
    o.restore_best = false;
    o.seed = c.pretrain.seed;
    auto r = train(base, make_pretrain_data(c), o);
    if (log) *log = std::move(r);
  }
  base.set_training(false);
  return base;
}

struct RunResult {
  std::string method;
  std::uint64_t seed = 0;
  TrainResult train;
  MetricReport test;
  AuditReport audit;
  double frozen_max_delta = 0.0;  // max |after - before| over parameters not flagged trainable
  std::size_t frozen_tensors = 0;
};

/// Attaches `spec` to a copy of `base`, trains it and scores the test split.
inline RunResult run_experiment(const ExperimentConfig& c, const Seq2SeqModel<float>& base, const Dataset& data,
                                const TuningMethodSpec& spec, std::uint64_t seed,
                                Seq2SeqModel<float>* trained = nullptr) {
  RunResult r;
  r.method = to_string(spec.kind);
  r.seed = seed;
  auto model = base.clone();
  attach(model, spec, seed);
  r.audit = audit_params(model, spec);

  std::map<std::string, std::vector<float>> frozen;
  for (const auto& [name, p] : model.params().entries())
    if (!p.tensor.requires_grad()) frozen[name] = p.tensor.vec();
  r.frozen_tensors = frozen.size();

  if (model.count_trainable_params() > 0) r.train = train(model, data, train_options(c, seed));
  model.set_training(false);
  r.test = evaluate(model, data.test.empty() ? data.dev : data.test);

  for (const auto& [name, before] : frozen) {
    const auto after = model.params().get(name).data();
    for (std::size_t i = 0; i < before.size(); ++i)
      r.frozen_max_delta = std::max(r.frozen_max_delta, std::fabs(static_cast<double>(after[i]) - before[i]));
  }
  if (trained) *trained = std::move(model);
  return r;
}

/// Seeds {seed, seed+1, ...}, seeds_n of them; reports the per-seed runs and
/// the metric averages.
struct MultiSeedResult {
  std::vector<RunResult> runs;
  MetricReport mean;
};

inline MultiSeedResult run_seeds(const ExperimentConfig& c, const Seq2SeqModel<float>& base, const Dataset& data,
                                 const TuningMethodSpec& spec) {
  MultiSeedResult out;
  for (std::size_t i = 0; i < c.train.seeds_n; ++i) out.runs.push_back(run_experiment(c, base, data, spec, c.train.seed + i));
  for (const auto& run : out.runs)
    for (const auto& [k, v] : run.test) out.mean[k] += v / static_cast<double>(out.runs.size());
  return out;
}

/// Worker count from REPCALI_THREADS, defaulting to the machine's parallelism.
inline std::size_t worker_threads() {
  if (const char* env = std::getenv("REPCALI_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers; the first failure
/// is rethrown after all workers finish.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

struct CompareRow {
  std::string method;
  std::uint64_t params = 0;
  double pct_of_base = 0.0;
  double token_acc = 0.0;
  double exact_match = 0.0;
  double bleu4 = 0.0;
  RunResult run;
};

/// One run per listed method, all from the same base, seed and budget; rows
/// sorted by method name.
inline std::vector<CompareRow> compare_methods(const ExperimentConfig& c, const Seq2SeqModel<float>& base,
                                               const Dataset& data) {
  std::vector<CompareRow> rows(c.compare.size());
  parallel_for(c.compare.size(), worker_threads(), [&](std::size_t i) {
    const auto spec = c.method_spec(c.compare[i]);
    try {
      auto run = run_experiment(c, base, data, spec, c.train.seed);
      CompareRow& row = rows[i];
      row.method = run.method;
      row.params = run.audit.registry_count;
      row.pct_of_base = run.audit.pct_of_base;
      row.token_acc = run.test.at("token_acc");
      row.exact_match = run.test.at("exact_match");
      row.bleu4 = run.test.at("bleu4");
      row.run = std::move(run);
    } catch (const std::exception& e) {
      throw Error("compare arm " + std::to_string(i) + " (" + to_string(c.compare[i]) + ") failed: " + e.what());
    }
  });
  std::stable_sort(rows.begin(), rows.end(), [](const CompareRow& a, const CompareRow& b) { return a.method < b.method; });
  return rows;
}

inline std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

inline std::string provenance_line(const ExperimentConfig& c) {
  return "# config=" + config_digest(c) + " seed=" + std::to_string(c.train.seed) + " timestamp=" + utc_timestamp();
}

inline void write_compare_csv(std::ostream& os, const std::vector<CompareRow>& rows, const ExperimentConfig& c) {
  os << provenance_line(c) << "\n";
  os << "method,params,pct_of_base,token_acc,exact_match,bleu4\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%llu,%.6f,%.6f,%.6f,%.6f\n", r.method.c_str(),
                  static_cast<unsigned long long>(r.params), r.pct_of_base, r.token_acc, r.exact_match, r.bleu4);
    os << buf;
  }
}

}  // namespace repcali
