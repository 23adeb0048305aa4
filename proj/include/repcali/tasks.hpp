#pragma once

// Synthetic sequence-to-sequence tasks over integer tokens. Ids 0..3 are
// reserved (pad, bos, eos, unk); task content uses [4, vocab).

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "repcali/errors.hpp"
#include "repcali/model.hpp"
#include "repcali/random.hpp"

namespace repcali {

enum class TaskKind { copy, reverse, sort };

inline std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::copy: return "copy";
    case TaskKind::reverse: return "reverse";
    case TaskKind::sort: return "sort";
  }
  return "?";
}

inline TaskKind task_kind_from_string(const std::string& s) {
  if (s == "copy") return TaskKind::copy;
  if (s == "reverse") return TaskKind::reverse;
  if (s == "sort") return TaskKind::sort;
  throw ValueError("unknown task kind '" + s + "' (expected copy, reverse or sort)");
}

inline constexpr int kFirstContentToken = 4;

struct TaskSpec {
  TaskKind kind = TaskKind::copy;
  std::size_t vocab = 20;  // content tokens are [4, vocab)
  std::size_t len_min = 4;
  std::size_t len_max = 8;
  std::size_t train_size = 2000;
  std::size_t dev_size = 200;
  std::size_t test_size = 200;
  std::uint64_t seed = 7;
  int tag = -1;  // when >= 0, prepended to every source as a task marker

  bool operator==(const TaskSpec&) const = default;

  void validate() const {
    if (vocab <= static_cast<std::size_t>(kFirstContentToken)) throw ValueError("task vocab must exceed 4");
    if (len_min == 0 || len_min > len_max) throw ValueError("task lengths must satisfy 1 <= len_min <= len_max");
    if (train_size == 0) throw ValueError("task train size must be positive");
  }

  std::string describe() const {
    std::ostringstream os;
    os << "kind=" << to_string(kind) << " vocab=" << vocab << " len=" << len_min << ".." << len_max
       << " sizes=" << train_size << "," << dev_size << "," << test_size << " seed=" << seed << " tag=" << tag;
    return os.str();
  }
};

struct Example {
  std::vector<int> src;  // includes the tag when the TaskSpec has one
  std::vector<int> tgt;  // without bos/eos

  bool operator==(const Example&) const = default;
};

struct Dataset {
  TaskSpec spec;
  std::vector<Example> train, dev, test;

  const std::vector<Example>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "dev") return dev;
    if (name == "test") return test;
    throw ValueError("unknown split '" + name + "'");
  }
};

inline std::vector<int> apply_task(TaskKind kind, std::vector<int> content) {
  if (kind == TaskKind::reverse) std::reverse(content.begin(), content.end());
  if (kind == TaskKind::sort) std::sort(content.begin(), content.end());
  return content;
}

/// Number of distinct content sequences a TaskSpec can produce, saturating.
inline std::uint64_t distinct_sequence_count(const TaskSpec& spec) {
  const std::uint64_t k = spec.vocab - kFirstContentToken;
  const std::uint64_t cap = UINT64_MAX / 2;
  std::uint64_t total = 0;
  for (std::size_t len = spec.len_min; len <= spec.len_max; ++len) {
    std::uint64_t c = 1;
    for (std::size_t i = 0; i < len && c < cap; ++i) c = c > cap / k ? cap : c * k;
    total = std::min(cap, total + c);
  }
  return total;
}

/// Deterministic splits; every source appears at most once across all splits.
inline Dataset generate_task(const TaskSpec& spec) {
  spec.validate();
  const std::uint64_t want = static_cast<std::uint64_t>(spec.train_size) + spec.dev_size + spec.test_size;
  const std::uint64_t avail = distinct_sequence_count(spec);
  if (want > avail) {
    throw ValueError("task " + to_string(spec.kind) + ": " + std::to_string(want) +
                     " disjoint examples requested but only " + std::to_string(avail) + " distinct sequences exist");
  }
  SplitMix64 rng(spec.seed);
  std::set<std::vector<int>> seen;
  auto draw = [&](std::size_t n, std::vector<Example>& out) {
    out.reserve(n);
    while (out.size() < n) {
      const std::size_t len = spec.len_min + rng.below(spec.len_max - spec.len_min + 1);
      std::vector<int> content(len);
      for (auto& t : content) t = kFirstContentToken + static_cast<int>(rng.below(spec.vocab - kFirstContentToken));
      if (!seen.insert(content).second) continue;
      Example ex;
      if (spec.tag >= 0) ex.src.push_back(spec.tag);
      ex.src.insert(ex.src.end(), content.begin(), content.end());
      ex.tgt = apply_task(spec.kind, std::move(content));
      out.push_back(std::move(ex));
    }
  };
  Dataset ds;
  ds.spec = spec;
  draw(spec.train_size, ds.train);
  draw(spec.dev_size, ds.dev);
  draw(spec.test_size, ds.test);
  return ds;
}

// ---- persistence: "# task ..." header, then "src tokens<TAB>tgt tokens" lines

inline void write_split(const std::string& path, const TaskSpec& spec, const std::string& split,
                        const std::vector<Example>& examples) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "# task " << spec.describe() << " split=" << split << "\n";
  for (const auto& ex : examples) {
    for (std::size_t i = 0; i < ex.src.size(); ++i) os << (i ? " " : "") << ex.src[i];
    os << '\t';
    for (std::size_t i = 0; i < ex.tgt.size(); ++i) os << (i ? " " : "") << ex.tgt[i];
    os << '\n';
  }
  if (!os) throw IoError("write failed for " + path);
}

inline std::vector<Example> read_split(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  auto parse = [&](const std::string& s) {
    std::vector<int> v;
    std::istringstream ss(s);
    int t;
    while (ss >> t) v.push_back(t);
    if (!ss.eof()) throw IoError(path + ":" + std::to_string(lineno) + ": malformed token");
    return v;
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw IoError(path + ":" + std::to_string(lineno) + ": missing TAB separator");
    out.push_back({parse(line.substr(0, tab)), parse(line.substr(tab + 1))});
  }
  return out;
}

}  // namespace repcali
