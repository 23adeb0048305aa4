#pragma once

// INI-style experiment configuration: `[section]` headers, `key = value`
// lines, `#` comments. Every key has a documented default; unknown keys,
// duplicates and malformed values are rejected with their location.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "repcali/calibration.hpp"
#include "repcali/checkpoint.hpp"
#include "repcali/errors.hpp"
#include "repcali/methods.hpp"
#include "repcali/model.hpp"
#include "repcali/tasks.hpp"

namespace repcali {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct TrainConfig {
  double lr = 3e-4;
  std::size_t batch = 32;
  std::size_t epochs = 20;
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  std::size_t seeds_n = 3;
  std::size_t steps = 0;      // cap on optimizer steps per run; 0 = epochs only
  std::size_t dev_limit = 0;  // dev examples scored per epoch; 0 = all

  bool operator==(const TrainConfig&) const = default;
};

/// Multi-task pretraining that stands in for a pre-trained checkpoint. Each
/// task's sources carry their own marker token; the downstream task uses
/// whatever marker [task] tag names.
struct PretrainConfig {
  std::size_t steps = 0;  // 0 = start fine-tuning from random initialization
  std::vector<TaskKind> tasks{TaskKind::copy, TaskKind::reverse, TaskKind::sort};
  double lr = 1e-3;
  std::uint64_t seed = 11;
  std::size_t size = 4000;  // training examples per task

  bool operator==(const PretrainConfig&) const = default;
};

struct LatentConfig {
  std::string pooling = "mean";  // mean | first
  std::string labels = "length";  // length | first_token | last_token
  std::size_t samples = 300;
  double perplexity = 30.0;
  std::size_t iters = 1000;
  std::uint64_t seed = 5;

  bool operator==(const LatentConfig&) const = default;
};

struct ExperimentConfig {
  ModelConfig model;
  bool calibration_enabled = false;  // block on top of kind = full; kind = repcali always has one
  CalibrationOptions calibration;
  TuningMethodSpec method;
  TaskSpec task;
  TrainConfig train;
  PretrainConfig pretrain;
  LatentConfig latent;
  std::vector<MethodKind> compare{MethodKind::full,   MethodKind::repcali, MethodKind::adapter,
                                  MethodKind::lora,   MethodKind::prefix,  MethodKind::bitfit};
  std::string out_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;

  /// Method spec with the [calibration] section folded in.
  TuningMethodSpec method_spec() const {
    TuningMethodSpec s = method;
    if (s.kind == MethodKind::repcali || (s.kind == MethodKind::full && calibration_enabled)) {
      s.calibration = calibration;
    } else {
      s.calibration.reset();
    }
    return s;
  }

  TuningMethodSpec method_spec(MethodKind kind) const {
    ExperimentConfig c = *this;
    c.method.kind = kind;
    if (kind != MethodKind::full) c.calibration_enabled = false;
    return c.method_spec();
  }

  void validate() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class U>
U parse_unsigned(const std::string& v) {
  U out{};
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValueError("expected a nonnegative integer, got '" + v + "'");
  return out;
}

inline double parse_double(const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValueError("expected a number, got '" + v + "'");
  return out;
}

inline int parse_int(const std::string& v) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ValueError("expected an integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValueError("expected true or false, got '" + v + "'");
}

inline std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <class L, class F>
std::string join(const L& list, F f) {
  std::string out;
  for (const auto& x : list) out += (out.empty() ? "" : ",") + f(x);
  return out;
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define REPCALI_FIELD(member, parse, print) \
  Field { [](ExperimentConfig& c, const std::string& v) { c.member = parse(v); }, [](const ExperimentConfig& c) { return print(c.member); } }

inline std::string fmt_size(std::size_t v) { return std::to_string(v); }
inline std::string fmt_u64(std::uint64_t v) { return std::to_string(v); }
inline std::string fmt_bool(bool v) { return v ? "true" : "false"; }
inline std::string fmt_int(int v) { return std::to_string(v); }
inline std::string fmt_str(const std::string& v) { return v; }
inline std::string parse_str(const std::string& v) { return v; }
inline std::size_t parse_size(const std::string& v) { return parse_unsigned<std::size_t>(v); }
inline std::uint64_t parse_u64(const std::string& v) { return parse_unsigned<std::uint64_t>(v); }

inline std::string fmt_seed_mode(SeedMode m) { return to_string(m); }
inline std::string fmt_method(MethodKind k) { return to_string(k); }
inline std::string fmt_task(TaskKind k) { return to_string(k); }

/// section -> key -> accessor; iteration order is the canonical echo order.
inline const std::map<std::string, std::map<std::string, Field>>& schema() {
  static const std::map<std::string, std::map<std::string, Field>> s = {
      {"model",
       {{"L", REPCALI_FIELD(model.layers, parse_size, fmt_size)},
        {"d_h", REPCALI_FIELD(model.d_h, parse_size, fmt_size)},
        {"heads", REPCALI_FIELD(model.heads, parse_size, fmt_size)},
        {"ffn_mult", REPCALI_FIELD(model.ffn_mult, parse_size, fmt_size)},
        {"vocab", REPCALI_FIELD(model.vocab, parse_size, fmt_size)},
        {"n_max", REPCALI_FIELD(model.n_max, parse_size, fmt_size)},
        {"dropout", REPCALI_FIELD(model.dropout, parse_double, fmt_double)}}},
      {"calibration",
       {{"enabled", REPCALI_FIELD(calibration_enabled, parse_bool, fmt_bool)},
        {"lambda", REPCALI_FIELD(calibration.lambda, parse_double, fmt_double)},
        {"seed_mode", REPCALI_FIELD(calibration.seed_mode, seed_mode_from_string, fmt_seed_mode)},
        {"zero_init", REPCALI_FIELD(calibration.zero_init, parse_bool, fmt_bool)}}},
      {"method",
       {{"kind", REPCALI_FIELD(method.kind, method_kind_from_string, fmt_method)},
        {"d_m", REPCALI_FIELD(method.d_m, parse_size, fmt_size)},
        {"prefix_len", REPCALI_FIELD(method.prefix_len, parse_size, fmt_size)},
        {"prompt_len", REPCALI_FIELD(method.prompt_len, parse_size, fmt_size)},
        {"freeze_decoder", REPCALI_FIELD(method.freeze_decoder, parse_bool, fmt_bool)}}},
      {"task",
       {{"kind", REPCALI_FIELD(task.kind, task_kind_from_string, fmt_task)},
        {"vocab", REPCALI_FIELD(task.vocab, parse_size, fmt_size)},
        {"len_min", REPCALI_FIELD(task.len_min, parse_size, fmt_size)},
        {"len_max", REPCALI_FIELD(task.len_max, parse_size, fmt_size)},
        {"sizes", Field{[](ExperimentConfig& c, const std::string& v) {
                          const auto parts = split_list(v);
                          if (parts.size() != 3) throw ValueError("expected train,dev,test sizes, got '" + v + "'");
                          c.task.train_size = parse_size(parts[0]);
                          c.task.dev_size = parse_size(parts[1]);
                          c.task.test_size = parse_size(parts[2]);
                        },
                        [](const ExperimentConfig& c) {
                          return std::to_string(c.task.train_size) + "," + std::to_string(c.task.dev_size) + "," +
                                 std::to_string(c.task.test_size);
                        }}},
        {"seed", REPCALI_FIELD(task.seed, parse_u64, fmt_u64)},
        {"tag", REPCALI_FIELD(task.tag, parse_int, fmt_int)}}},
      {"train",
       {{"lr", REPCALI_FIELD(train.lr, parse_double, fmt_double)},
        {"batch", REPCALI_FIELD(train.batch, parse_size, fmt_size)},
        {"epochs", REPCALI_FIELD(train.epochs, parse_size, fmt_size)},
        {"patience", REPCALI_FIELD(train.patience, parse_size, fmt_size)},
        {"seed", REPCALI_FIELD(train.seed, parse_u64, fmt_u64)},
        {"seeds_n", REPCALI_FIELD(train.seeds_n, parse_size, fmt_size)},
        {"steps", REPCALI_FIELD(train.steps, parse_size, fmt_size)},
        {"dev_limit", REPCALI_FIELD(train.dev_limit, parse_size, fmt_size)}}},
      {"pretrain",
       {{"steps", REPCALI_FIELD(pretrain.steps, parse_size, fmt_size)},
        {"tasks", Field{[](ExperimentConfig& c, const std::string& v) {
                          c.pretrain.tasks.clear();
                          for (const auto& t : split_list(v)) c.pretrain.tasks.push_back(task_kind_from_string(t));
                        },
                        [](const ExperimentConfig& c) { return join(c.pretrain.tasks, fmt_task); }}},
        {"lr", REPCALI_FIELD(pretrain.lr, parse_double, fmt_double)},
        {"seed", REPCALI_FIELD(pretrain.seed, parse_u64, fmt_u64)},
        {"size", REPCALI_FIELD(pretrain.size, parse_size, fmt_size)}}},
      {"latent",
       {{"pooling", REPCALI_FIELD(latent.pooling, parse_str, fmt_str)},
        {"labels", REPCALI_FIELD(latent.labels, parse_str, fmt_str)},
        {"samples", REPCALI_FIELD(latent.samples, parse_size, fmt_size)},
        {"perplexity", REPCALI_FIELD(latent.perplexity, parse_double, fmt_double)},
        {"iters", REPCALI_FIELD(latent.iters, parse_size, fmt_size)},
        {"seed", REPCALI_FIELD(latent.seed, parse_u64, fmt_u64)}}},
      {"compare",
       {{"methods", Field{[](ExperimentConfig& c, const std::string& v) {
                            c.compare.clear();
                            for (const auto& m : split_list(v)) c.compare.push_back(method_kind_from_string(m));
                          },
                          [](const ExperimentConfig& c) { return join(c.compare, fmt_method); }}}}},
      {"out", {{"dir", REPCALI_FIELD(out_dir, parse_str, fmt_str)}}},
  };
  return s;
}

#undef REPCALI_FIELD

}  // namespace detail

inline void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& msg) { throw ConfigError(key + ": " + msg); };
  try {
    model.validate();
  } catch (const ValueError& e) {
    fail("model", e.what());
  }
  if (!(calibration.lambda >= 0.0)) fail("calibration.lambda", "must be >= 0");
  if (calibration_enabled && method.kind != MethodKind::full && method.kind != MethodKind::repcali) {
    fail("calibration.enabled", "a calibration block combines only with method kind full or repcali");
  }
  try {
    method_spec().validate(model);
  } catch (const ValueError& e) {
    fail("method", e.what());
  }
  try {
    task.validate();
  } catch (const ValueError& e) {
    fail("task", e.what());
  }
  if (task.vocab > model.vocab) fail("task.vocab", "exceeds model vocab");
  if (task.tag >= static_cast<int>(model.vocab)) fail("task.tag", "outside the model vocabulary");
  const std::size_t src_len = task.len_max + (task.tag >= 0 ? 1 : 0) + (method.kind == MethodKind::prompt ? method.prompt_len : 0);
  if (src_len > model.n_max || task.len_max + 1 > model.n_max) fail("task.len_max", "sequences exceed model n_max");
  if (!(train.lr >= 0.0)) fail("train.lr", "must be >= 0");
  if (train.batch == 0) fail("train.batch", "must be positive");
  if (train.seeds_n == 0) fail("train.seeds_n", "must be positive");
  if (pretrain.steps > 0) {
    if (pretrain.tasks.empty()) fail("pretrain.tasks", "must name at least one task");
    if (pretrain.tasks.size() > 3) fail("pretrain.tasks", "at most three pretraining tasks");
    if (task.vocab + pretrain.tasks.size() > model.vocab) fail("pretrain.tasks", "marker tokens collide with task vocab");
    if (pretrain.size == 0) fail("pretrain.size", "must be positive");
  }
  if (latent.pooling != "mean" && latent.pooling != "first") fail("latent.pooling", "expected mean or first");
  if (latent.labels != "first_token" && latent.labels != "length" && latent.labels != "last_token") {
    fail("latent.labels", "expected first_token, length or last_token");
  }
  if (compare.empty()) fail("compare.methods", "must name at least one method");
  if (out_dir.empty()) fail("out.dir", "must not be empty");
}

/// Applies one `section.key = value` assignment; `where` prefixes diagnostics.
inline void set_config_value(ExperimentConfig& c, const std::string& section, const std::string& key,
                             const std::string& value, const std::string& where) {
  const auto& s = detail::schema();
  auto sec = s.find(section);
  if (sec == s.end()) throw ConfigError(where + ": unknown section [" + section + "]");
  auto f = sec->second.find(key);
  if (f == sec->second.end()) throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
  try {
    f->second.set(c, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where + ": " + section + "." + key + ": " + e.what());
  }
}

/// Parses and validates; keys that do not appear keep their defaults.
inline ExperimentConfig parse_config(const std::string& text, const std::string& origin = "config") {
  ExperimentConfig c;
  std::istringstream is(text);
  std::string line, section;
  std::map<std::string, std::size_t> seen;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = detail::trim(line.substr(1, line.size() - 2));
      if (!detail::schema().count(section)) throw ConfigError(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    if (section.empty()) throw ConfigError(where + ": key outside of any [section]");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const std::string full = section + "." + key;
    if (auto it = seen.find(full); it != seen.end()) {
      throw ConfigError(where + ": duplicate key '" + full + "' (first set on line " + std::to_string(it->second) + ")");
    }
    seen[full] = lineno;
    set_config_value(c, section, key, value, where);
  }
  c.validate();
  return c;
}

/// Applies `--section.key=value` flags in order, then re-validates.
inline void apply_overrides(ExperimentConfig& c, const std::vector<std::string>& flags) {
  for (const auto& flag : flags) {
    const std::string body = flag.rfind("--", 0) == 0 ? flag.substr(2) : flag;
    const auto eq = body.find('='), dot = body.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override '" + flag + "': expected --section.key=value");
    }
    set_config_value(c, body.substr(0, dot), body.substr(dot + 1, eq - dot - 1), body.substr(eq + 1),
                     "override '" + flag + "'");
  }
  c.validate();
}

/// Canonical text: sections and keys in sorted order, every key present.
inline std::string serialize_config(const ExperimentConfig& c) {
  std::string out;
  for (const auto& [section, fields] : detail::schema()) {
    out += "[" + section + "]\n";
    for (const auto& [key, f] : fields) out += key + " = " + f.get(c) + "\n";
  }
  return out;
}

inline std::string config_digest(const ExperimentConfig& c) {
  const std::string s = serialize_config(c);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())));
  return buf;
}

}  // namespace repcali
