// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Runs the desk-scale experiments end to end, so expect a few minutes on one core.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "repcali/cli.hpp"
#include "repcali/grad_suite.hpp"
#include "repcali/repcali.hpp"

using namespace repcali;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

ExperimentConfig load_cfg(const std::string& name, const std::vector<std::string>& overrides = {}) {
  const std::string path = std::string(REPCALI_SOURCE_DIR) + "/configs/" + name;
  auto c = parse_config(read_text(path), path);
  apply_overrides(c, overrides);
  return c;
}

int run_cli(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "repcali");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream os, es;
  const int code = dispatch(static_cast<int>(argv.size()), argv.data(), os, es);
  if (out) *out = os.str() + es.str();
  return code;
}

IntTensor random_tokens(std::size_t b, std::size_t t, std::size_t vocab, SplitMix64& rng) {
  IntTensor x({b, t}, 0);
  for (auto& v : x.data) v = 4 + static_cast<int>(rng.below(vocab - 4));
  return x;
}

// Frozen-tensor deltas observed across every training run in this binary.
struct FrozenLedger {
  std::size_t runs = 0;
  double worst = 0.0;
  std::string where;
  void add(const RunResult& r) {
    if (r.method == "full") return;
    ++runs;
    if (r.frozen_max_delta > worst || where.empty()) {
      worst = std::max(worst, r.frozen_max_delta);
      where = r.method + "/seed" + std::to_string(r.seed);
    }
  }
};

// ---- 1 ---------------------------------------------------------------------------

Outcome lambda_zero_identity() {
  const auto t0 = Clock::now();
  auto cfg = load_cfg("toy.cfg");
  Seq2SeqModel<float> model(cfg.model, 3);
  CalibrationOptions opt;
  opt.lambda = 0.0;
  SplitMix64 rng(21);
  std::size_t mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    auto block = CalibrationBlock<float>::create(opt, cfg.model.n_max, cfg.model.d_h, rng);
    const std::size_t b = 1 + rng.below(4), ts = 1 + rng.below(cfg.model.n_max), tt = 1 + rng.below(cfg.model.n_max);
    auto src = random_tokens(b, ts, cfg.model.vocab, rng), y = random_tokens(b, tt, cfg.model.vocab, rng);
    const auto base = model.decode(model.encode(src), y, model.source_mask(src));
    mismatches += calibrated_forward(model, block, src, y).vec() != base.vec();
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 10.0,
          std::to_string(100 - mismatches) + "/100 bitwise equal, " + fmt("%.2fs (limit 10s)", secs)};
}

// ---- 2 ---------------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto suite = run_grad_suite();
  double worst = 0.0;
  std::string worst_name;
  bool calib_checked = false;
  for (const auto& e : suite) {
    if (e.max_rel_error >= worst) {
      worst = e.max_rel_error;
      worst_name = e.name;
    }
    calib_checked = calib_checked || e.name.find("repcali") != std::string::npos;
  }
  // the repcali entries perturb and check every injected tensor, i.e. the
  // calibration table, gain and bias
  const double secs = seconds_since(t0);
  return {worst <= 1e-3 && calib_checked && secs < 120.0,
          std::to_string(suite.size()) + " checks, max rel error " + fmt("%.2e", worst) + " (" + worst_name +
              ", limit 1e-3), " + fmt("%.1fs (limit 120s)", secs)};
}

// ---- 3 ---------------------------------------------------------------------------

// Closed forms written out independently of the library's formula table.
std::uint64_t expected_count(MethodKind kind, const ModelConfig& m, const TuningMethodSpec& s) {
  const std::uint64_t L = m.layers, d = m.d_h, f = m.d_h * m.ffn_mult, v = m.vocab, n = m.n_max, dm = s.d_m;
  const std::uint64_t total_layers = 2 * L;
  switch (kind) {
    case MethodKind::adapter:
    case MethodKind::lora: return total_layers * 2 * (2 * d * dm);
    case MethodKind::prefix: return s.prefix_len * dm + dm * dm + total_layers * 2 * d * dm;
    case MethodKind::prompt: return s.prompt_len * d;
    case MethodKind::repcali:
      return (s.calibration->seed_mode == SeedMode::positional ? n * d : d) + 2 * d;
    case MethodKind::bitfit: {
      // per attention: 4 projection biases; per ffn: 2; per norm: 1 bias
      const std::uint64_t enc = L * (4 * d + (f + d) + 2 * d);
      const std::uint64_t dec = L * (8 * d + (f + d) + 3 * d);
      return enc + dec + 2 * d + v;
    }
    case MethodKind::full: {
      const std::uint64_t attn = 4 * (d * d + d), ffn = d * f + f + f * d + d, norm = 2 * d;
      return L * (attn + ffn + 2 * norm) + L * (2 * attn + ffn + 3 * norm) + 2 * (v * d + n * d) + 2 * norm + d * v + v;
    }
    case MethodKind::frozen: return 0;
  }
  return 0;
}

Outcome parameter_accounting() {
  const auto t0 = Clock::now();
  struct Case {
    std::size_t layers, d_h, d_m, n;
  };
  const std::vector<Case> cases{{1, 4, 2, 3}, {2, 4, 2, 3}, {2, 8, 3, 2}, {3, 16, 4, 5}, {1, 32, 8, 1}, {2, 64, 8, 4}};
  std::size_t checked = 0, bad = 0, flagged = 0;
  std::map<std::string, std::size_t> per_method;
  for (const auto& c : cases) {
    for (auto kind : all_method_kinds()) {
      for (auto mode : {SeedMode::positional, SeedMode::constant_ones}) {
        if (kind != MethodKind::repcali && mode == SeedMode::constant_ones) continue;
        ModelConfig m;
        m.layers = c.layers;
        m.d_h = c.d_h;
        m.heads = 2;
        m.ffn_mult = 2;
        m.vocab = 16;
        m.n_max = 12;
        TuningMethodSpec s;
        s.kind = kind;
        s.d_m = c.d_m;
        s.prefix_len = c.n;
        s.prompt_len = c.n;
        if (kind == MethodKind::repcali) s.calibration->seed_mode = mode;
        else s.calibration.reset();
        Seq2SeqModel<float> model(m, 1);
        attach(model, s, 1);
        const auto r = audit_params(model, s);
        ++checked;
        ++per_method[to_string(kind)];
        bad += r.registry_count != expected_count(kind, m, s);
        if (r.formula_count && kind != MethodKind::repcali) bad += *r.formula_count != r.registry_count;
        if (kind == MethodKind::repcali) {
          bad += r.formula_count != 2 * c.d_h;
          const bool noted = r.note.find("paper-literal") != std::string::npos;
          flagged += noted;
          bad += !noted;
        }
      }
    }
  }
  std::size_t min_cases = SIZE_MAX;
  for (const auto& [k, v] : per_method) min_cases = std::min(min_cases, v);
  const auto big = repcali_param_count(SeedMode::positional, 1024, 768);
  const double pct = 100.0 * static_cast<double>(big.count) / 220e6;
  const bool pct_ok = big.count == 1024u * 768u + 2u * 768u && std::fabs(pct - 0.35) <= 0.05 && big.paper_literal == 1536;
  const double secs = seconds_since(t0);
  return {bad == 0 && pct_ok && min_cases >= 5 && secs < 5.0,
          std::to_string(checked) + " audits, " + std::to_string(bad) + " mismatches, >=" + std::to_string(min_cases) +
              " configs per method, " + std::to_string(flagged) + " paper-literal flags; positional 1024x768 = " +
              std::to_string(big.count) + " = " + fmt("%.4f%% of 220M", pct) + ", " + fmt("%.2fs (limit 5s)", secs)};
}

// ---- 4 ---------------------------------------------------------------------------

Outcome combined_rows() {
  const double rows[3][4] = {{80.04, 72.71, 19.11, 95.49}, {82.15, 74.44, 18.59, 96.88}, {84.88, 74.91, 17.89, 97.78}};
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, std::fabs(combined_score(r[0], r[1], r[2]) - r[3]));
  return {worst <= 0.01, "3 rows, max |diff| " + fmt("%.4f", worst) + " (limit 0.01)"};
}

// ---- 5 ---------------------------------------------------------------------------

Outcome metric_oracles() {
  const auto t0 = Clock::now();
  std::size_t examples = 0, failed = 0;
  auto check = [&](double got, double want) {
    ++examples;
    failed += !(std::fabs(got - want) <= 1e-9);
  };
  check(bleu4({5, 6, 7, 8}, {{5, 6, 7, 8}}), 1.0);
  check(bleu4({1, 2, 3, 4}, {{5, 6, 7, 8}}), 0.0);
  check(bleu4({1, 2, 3, 4}, {{1, 2, 3, 4, 5}}), std::exp(1.0 - 5.0 / 4.0));
  check(rouge_l({1, 2, 3}, {1, 2, 3}), 1.0);
  check(rouge_l({1, 2}, {3, 4}), 0.0);
  check(rouge_l({1, 3}, {1, 2, 3}), 0.8);
  const Tokens a{4, 5, 6, 7}, b{8, 9, 10, 11}, c{12, 13, 14, 15};
  check(self_bleu({a, a, a}, 4), 1.0);
  check(self_bleu({a, b, c}, 4), 0.0);
  check(self_bleu({a, a, b}, 4), 2.0 / 3.0);
  check(mcc(3, 4, 0, 0), 1.0);
  check(mcc(1, 1, 1, 1), 0.0);
  check(mcc(0, 0, 2, 5), -1.0);
  check(kendall_tau({0, 1, 2}, {0, 1, 2}), 1.0);
  check(kendall_tau({2, 1, 0}, {0, 1, 2}), -1.0);
  check(kendall_tau({0, 2, 1}, {0, 1, 2}), 1.0 / 3.0);
  check(combined_score(0, 0, 0), 0.0);
  check(apply_task(TaskKind::copy, {5, 6, 7}) == std::vector<int>{5, 6, 7}, 1.0);
  check(apply_task(TaskKind::reverse, {5, 6, 7}) == std::vector<int>{7, 6, 5}, 1.0);
  check(apply_task(TaskKind::sort, {9, 4, 4, 7}) == std::vector<int>{4, 4, 7, 9}, 1.0);

  SplitMix64 rng(2024);
  auto seq = [&](std::size_t max_len) {
    Tokens s(rng.below(max_len + 1));
    for (auto& t : s) t = static_cast<int>(rng.below(6));
    return s;
  };
  std::size_t violations = 0;
  const std::size_t cases = 10000;
  for (std::size_t i = 0; i < cases; ++i) {
    auto h = seq(10), r = seq(10);
    if (r.empty()) r.push_back(0);
    auto in01 = [](double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0 + 1e-12; };
    violations += !in01(bleu4(h, {r, seq(10)}));
    violations += !in01(rouge_l(h, r));
    violations += !in01(self_bleu({h, r, seq(8)}, 3));
    if (h.size() >= 4) violations += std::fabs(bleu4(h, {h}) - 1.0) > 1e-12;
    const double m = mcc(rng.below(40), rng.below(40), rng.below(40), rng.below(40));
    violations += !(m >= -1.0 - 1e-12 && m <= 1.0 + 1e-12);
    std::vector<int> p(2 + rng.below(7));
    std::iota(p.begin(), p.end(), 0);
    for (std::size_t k = p.size(); k > 1; --k) std::swap(p[k - 1], p[rng.below(k)]);
    auto rev = p;
    std::reverse(rev.begin(), rev.end());
    violations += std::fabs(kendall_tau(p, p) - 1.0) > 1e-12 || std::fabs(kendall_tau(rev, p) + 1.0) > 1e-12;
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && violations == 0 && secs < 60.0,
          std::to_string(examples - failed) + "/" + std::to_string(examples) + " examples within 1e-9, " +
              std::to_string(violations) + " invariant violations over " + std::to_string(cases) + " fuzz cases, " +
              fmt("%.1fs (limit 60s)", secs)};
}

// ---- 6 ---------------------------------------------------------------------------

Outcome frozen_decoder_experiment(FrozenLedger& ledger) {
  const auto t0 = Clock::now();
  const auto cfg = load_cfg("toy.cfg");
  const auto base = build_base(cfg);
  const auto data = generate_task(cfg.task);
  const auto repcali = run_seeds(cfg, base, data, cfg.method_spec());
  auto frozen_spec = cfg.method_spec(MethodKind::frozen);
  frozen_spec.freeze_decoder = true;
  const auto frozen = run_seeds(cfg, base, data, frozen_spec);
  for (const auto& r : repcali.runs) ledger.add(r);
  for (const auto& r : frozen.runs) ledger.add(r);
  bool decoder_frozen = true;
  for (const auto& r : repcali.runs) decoder_frozen = decoder_frozen && r.audit.registry_count == r.audit.injected_count;
  const double acc = repcali.mean.at("token_acc"), base_acc = frozen.mean.at("token_acc");
  const double secs = seconds_since(t0);
  std::string per_seed;
  for (const auto& r : repcali.runs) per_seed += (per_seed.empty() ? "" : ",") + fmt("%.3f", r.test.at("token_acc"));
  return {repcali.runs.size() == 3 && acc >= 0.90 && acc - base_acc >= 0.20 && decoder_frozen && secs < 600.0,
          "repcali token_acc " + fmt("%.4f", acc) + " [" + per_seed + "] (need >= 0.90), frozen baseline " +
              fmt("%.4f", base_acc) + ", margin " + fmt("%.1f pp", 100.0 * (acc - base_acc)) + " (need >= 20), " +
              fmt("%.0fs (limit 600s)", secs)};
}

// ---- 8 ---------------------------------------------------------------------------

Outcome comparison_harness(FrozenLedger& ledger, const fs::path& work) {
  const auto t0 = Clock::now();
  const auto cfg = load_cfg("compare_reverse.cfg");
  const auto base = build_base(cfg);
  const auto data = generate_task(cfg.task);
  const auto rows = compare_methods(cfg, base, data);
  for (const auto& row : rows) ledger.add(row.run);
  const auto table = work / "compare.csv";
  {
    std::ofstream os(table);
    write_compare_csv(os, rows, cfg);
  }

  std::ifstream is(table);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(is, line)) lines.push_back(line);
  std::string problems;
  if (lines.size() != 2 + cfg.compare.size()) problems += " row count " + std::to_string(lines.size());
  if (lines.empty() || !std::regex_match(lines[0], std::regex("# config=[0-9a-f]{16} seed=\\d+ timestamp=\\S+")))
    problems += " bad provenance line";
  if (lines.size() < 2 || lines[1] != "method,params,pct_of_base,token_acc,exact_match,bleu4") problems += " bad header";
  const std::regex row_re("([a-z]+),(\\d+),(\\d+\\.\\d{6}),(\\d\\.\\d{6}),(\\d\\.\\d{6}),(\\d\\.\\d{6})");
  std::set<std::string> methods;
  std::size_t param_mismatch = 0;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    std::smatch m;
    if (!std::regex_match(lines[i], m, row_re)) {
      problems += " malformed row '" + lines[i] + "'";
      continue;
    }
    const auto kind = method_kind_from_string(m[1]);
    methods.insert(m[1]);
    Seq2SeqModel<float> model(cfg.model, 0);
    const auto spec = cfg.method_spec(kind);
    attach(model, spec, cfg.train.seed);
    param_mismatch += std::stoull(m[2]) != audit_params(model, spec).registry_count;
  }
  if (methods.size() != 6) problems += " expected six distinct arms";
  if (param_mismatch) problems += " " + std::to_string(param_mismatch) + " params mismatches";

  const double secs = seconds_since(t0);
  return {problems.empty() && secs < 1800.0,
          std::to_string(methods.size()) + " arms, table well-formed" + (problems.empty() ? "" : " NO:" + problems) +
              ", params match audit_params, " + fmt("%.0fs (limit 1800s)", secs)};
}

// ---- 9 ---------------------------------------------------------------------------

bool plot_round_trip(const Projection2D& proj, const std::vector<int>& labels, const fs::path& prefix) {
  emit_plot(proj, labels, prefix.string());
  const auto pts = read_plot_csv(prefix.string() + ".csv");
  if (pts.size() != labels.size()) return false;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (std::fabs(pts[i].x - proj.coords(i, 0)) > 5e-7 || std::fabs(pts[i].y - proj.coords(i, 1)) > 5e-7) return false;
    if (pts[i].label != labels[i]) return false;
  }
  const auto svg = read_text(prefix.string() + ".svg");
  std::size_t circles = 0;
  for (auto p = svg.find("<circle"); p != std::string::npos; p = svg.find("<circle", p + 1)) ++circles;
  return svg.rfind("<svg", 0) == 0 && svg.find("</svg>") != std::string::npos && circles == labels.size();
}

Outcome latent_pipeline(FrozenLedger& ledger, const fs::path& work) {
  const auto t0 = Clock::now();
  const auto cfg = load_cfg("latent_copy.cfg");
  const auto base = build_base(cfg);
  const auto data = generate_task(cfg.task);
  std::vector<Example> sample = data.test;
  sample.resize(std::min<std::size_t>(sample.size(), cfg.latent.samples));
  std::vector<int> labels;
  for (const auto& ex : sample) labels.push_back(latent_label(ex, cfg.latent.labels, cfg.task.tag));
  const auto pooling = pooling_from_string(cfg.latent.pooling);
  const auto before = extract_latents(base, sample, pooling);
  const auto before_stats = compactness_stats(before.x, labels);

  std::size_t decreased = 0, kl_ok = 0, kl_runs = 0, round_trips = 0, plots = 0;
  std::string intra;
  for (std::size_t i = 0; i < cfg.train.seeds_n; ++i) {
    const std::uint64_t seed = cfg.train.seed + i;
    Seq2SeqModel<float> trained(cfg.model, 0);
    ledger.add(run_experiment(cfg, base, data, cfg.method_spec(), seed, &trained));
    auto after = extract_latents(trained, sample, pooling);
    after.labels = labels;
    // the stored latents must reload exactly as float values
    const auto store = work / ("latents_seed" + std::to_string(seed) + ".ckpt");
    save_latents(store.string(), after, "after");
    const auto reloaded = load_latents(store.string(), "after");
    const auto after_stats = compactness_stats(reloaded.x, labels);
    decreased += after_stats.mean_intra < before_stats.mean_intra;
    intra += (intra.empty() ? "" : ",") + fmt("%.3f", after_stats.mean_intra);
    TsneOptions topt;
    topt.perplexity = cfg.latent.perplexity;
    topt.iters = cfg.latent.iters;
    topt.seed = cfg.latent.seed + seed;
    for (const LatentSet* set : {&before, const_cast<const LatentSet*>(&after)}) {
      const auto tsne = tsne_project(set->x, topt);
      ++kl_runs;
      kl_ok += tsne.kl_final < tsne.kl_initial;
      const std::string stage = set == &before ? "before" : "after";
      const auto pca = pca_project(set->x, 2);
      round_trips += plot_round_trip(tsne, labels, work / (stage + "_tsne_seed" + std::to_string(seed)));
      round_trips += plot_round_trip(pca, labels, work / (stage + "_pca_seed" + std::to_string(seed)));
      plots += 2;
    }
  }
  const double secs = seconds_since(t0);
  return {decreased >= 2 && kl_ok == kl_runs && round_trips == plots && secs < 300.0,
          "mean intra-class distance " + fmt("%.3f", before_stats.mean_intra) + " -> [" + intra + "], decreased in " +
              std::to_string(decreased) + "/" + std::to_string(cfg.train.seeds_n) + " seeds (need >= 2); t-SNE KL fell in " +
              std::to_string(kl_ok) + "/" + std::to_string(kl_runs) + " runs; " + std::to_string(round_trips) + "/" +
              std::to_string(plots) + " CSV/SVG round trips, " + fmt("%.0fs (limit 300s)", secs)};
}

// ---- 10 --------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  const std::regex stamp("timestamp=\\S+");
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    files[fs::relative(e.path(), dir).string()] = std::regex_replace(read_text(e.path()), stamp, "timestamp=*");
  }
  return files;
}

Outcome reproducibility(const fs::path& work) {
  const auto dir = work / "repro";
  fs::remove_all(dir);
  std::string log;
  if (run_cli({"train", "-c", std::string(REPCALI_SOURCE_DIR) + "/configs/toy.cfg", "--out.dir=" + dir.string()}, &log))
    return {false, "first run failed: " + log};
  const auto first = snapshot(dir);
  const auto echo = work / "repro_echo.ini";
  fs::copy_file(dir / "config.ini", echo, fs::copy_options::overwrite_existing);
  fs::remove_all(dir);
  if (run_cli({"train", "-c", echo.string()}, &log)) return {false, "rerun from echo failed: " + log};
  const auto second = snapshot(dir);
  std::size_t differing = 0;
  std::string names;
  for (const auto& [name, body] : first) {
    auto it = second.find(name);
    if (it == second.end() || it->second != body) {
      ++differing;
      names += " " + name;
    }
  }
  differing += second.size() != first.size();
  return {differing == 0 && first.count("metrics.csv") == 1,
          std::to_string(first.size()) + " artifacts (metrics, logs, checkpoints) compared, " +
              std::to_string(differing) + " differ" + names};
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "repcali_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);
  FrozenLedger ledger;
  std::map<int, std::pair<std::string, Outcome>> results;
  auto run = [&](int id, const std::string& name, const std::function<Outcome()>& f) {
    std::cerr << "[running " << id << ": " << name << "]" << std::endl;
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    results[id] = {name, o};
  };
  run(1, "lambda=0 identity", lambda_zero_identity);
  run(2, "gradient suite", gradient_suite);
  run(3, "parameter accounting", parameter_accounting);
  run(4, "combined-score arithmetic", combined_rows);
  run(5, "metric oracles", metric_oracles);
  run(6, "frozen-decoder experiment", [&] { return frozen_decoder_experiment(ledger); });
  run(8, "comparison harness", [&] { return comparison_harness(ledger, work); });
  run(9, "latent pipeline", [&] { return latent_pipeline(ledger, work); });
  run(7, "frozen-parameter conservation", [&] {
    return Outcome{ledger.runs > 0 && ledger.worst == 0.0,
                   std::to_string(ledger.runs) + " non-full runs, max |delta| over frozen tensors " +
                       fmt("%.3g", ledger.worst) + (ledger.worst == 0.0 ? "" : " at " + ledger.where)};
  });
  run(10, "reproducibility", [&] { return reproducibility(work); });

  bool all = true;
  for (const auto& [id, r] : results) {
    std::cout << (r.second.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << r.first << "): " << r.second.detail
              << std::endl;
    all = all && r.second.pass;
  }
  fs::remove_all(work);
  return all ? 0 : 1;
}
