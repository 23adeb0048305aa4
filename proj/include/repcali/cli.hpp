#pragma once

// Command-line front end. Exit codes: 0 success, 1 usage or config error,
// 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "repcali/repcali.hpp"
#include "repcali/grad_suite.hpp"

namespace repcali {

namespace cli_detail {

namespace fs = std::filesystem;

struct Outputs {
  std::ostream& out;
  std::ostream& err;
};

inline std::string read_text(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

inline ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  ExperimentConfig c = path.empty() ? ExperimentConfig{} : parse_config(read_text(path), path);
  apply_overrides(c, overrides);
  return c;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string metrics_csv(const ExperimentConfig& c, const std::vector<RunResult>& runs, const MetricReport& mean) {
  std::ostringstream os;
  os << provenance_line(c) << "\n";
  std::vector<std::string> keys;
  for (const auto& [k, v] : mean) keys.push_back(k);
  os << "seed";
  for (const auto& k : keys) os << "," << k;
  os << "\n";
  for (const auto& r : runs) {
    os << r.seed;
    for (const auto& k : keys) os << "," << fmt6(r.test.count(k) ? r.test.at(k) : 0.0);
    os << "\n";
  }
  os << "mean";
  for (const auto& k : keys) os << "," << fmt6(mean.at(k));
  os << "\n";
  return os.str();
}

/// Rebuilds the model a checkpoint was written from: base architecture from
/// its config echo, plus the configured method when the file holds injected
/// tensors.
inline Seq2SeqModel<float> model_from_checkpoint(const std::string& path) {
  auto data = load_checkpoint_data(path);
  ExperimentConfig c = parse_config(data.config, path + " (config echo)");
  Seq2SeqModel<float> m(c.model, 0);
  bool injected = false;
  for (const auto& [name, t] : data.tensors) injected = injected || !m.params().contains(name);
  if (injected) attach(m, c.method_spec(), 0);
  load_into(m, data, path);
  m.set_training(false);
  return m;
}

inline void print_audit(std::ostream& os, const AuditReport& r) {
  os << "method: " << r.method << "\n";
  os << "registry_count: " << r.registry_count << "\n";
  os << "formula_count: " << (r.formula_count ? std::to_string(*r.formula_count) : "n/a (registry count only)") << "\n";
  if (r.corrected_count) os << "corrected_count: " << *r.corrected_count << "\n";
  os << "base_count: " << r.base_count << "\n";
  os << "injected_count: " << r.injected_count << "\n";
  os << "pct_of_base: " << fmt6(r.pct_of_base) << "\n";
  os << "match: " << (r.match_flag ? "yes" : "no") << "\n";
  if (!r.note.empty()) os << "note: " << r.note << "\n";
}

// ---- subcommands ---------------------------------------------------------------

inline int cmd_train(const ExperimentConfig& c, Outputs io) {
  const fs::path dir = c.out_dir;
  fs::create_directories(dir);
  write_text(dir / "config.ini", serialize_config(c));
  TrainResult pre;
  auto base = build_base(c, &pre);
  if (c.pretrain.steps > 0) {
    save_checkpoint(base, (dir / "base.ckpt").string(), pre.steps, serialize_config(c));
    std::ofstream log(dir / "pretrain_log.csv");
    write_log_csv(log, pre.log);
  }
  const auto data = generate_task(c.task);
  const auto spec = c.method_spec();
  std::vector<RunResult> runs;
  MetricReport mean;
  for (std::size_t i = 0; i < c.train.seeds_n; ++i) {
    const std::uint64_t seed = c.train.seed + i;
    Seq2SeqModel<float> trained(c.model, 0);
    auto r = run_experiment(c, base, data, spec, seed, &trained);
    const fs::path sd = dir / ("seed" + std::to_string(seed));
    fs::create_directories(sd);
    save_checkpoint(trained, (sd / "model.ckpt").string(), r.train.steps, serialize_config(c));
    std::ofstream log(sd / "log.csv");
    write_log_csv(log, r.train.log);
    io.out << "seed " << seed << ": steps=" << r.train.steps << " token_acc=" << fmt6(r.test.at("token_acc"))
           << " exact_match=" << fmt6(r.test.at("exact_match")) << " bleu4=" << fmt6(r.test.at("bleu4"))
           << " trainable=" << r.audit.registry_count << "\n";
    runs.push_back(std::move(r));
  }
  for (const auto& r : runs)
    for (const auto& [k, v] : r.test) mean[k] += v / static_cast<double>(runs.size());
  write_text(dir / "metrics.csv", metrics_csv(c, runs, mean));
  io.out << "mean: token_acc=" << fmt6(mean.at("token_acc")) << " exact_match=" << fmt6(mean.at("exact_match"))
         << " bleu4=" << fmt6(mean.at("bleu4")) << "\nwrote " << (dir / "metrics.csv").string() << "\n";
  return 0;
}

inline int cmd_eval(const ExperimentConfig& c, const std::string& ckpt, const std::string& split, Outputs io) {
  auto model = model_from_checkpoint(ckpt);
  const auto data = generate_task(c.task);
  const auto report = evaluate(model, data.split(split));
  io.out << provenance_line(c) << "\nmetric,value\n";
  for (const auto& [k, v] : report) io.out << k << "," << fmt6(v) << "\n";
  return 0;
}

inline int cmd_compare(const ExperimentConfig& c, Outputs io) {
  const fs::path dir = c.out_dir;
  fs::create_directories(dir);
  write_text(dir / "config.ini", serialize_config(c));
  auto base = build_base(c);
  const auto data = generate_task(c.task);
  auto rows = compare_methods(c, base, data);
  std::ostringstream table;
  write_compare_csv(table, rows, c);
  write_text(dir / "compare.csv", table.str());
  io.out << table.str();
  return 0;
}

inline int cmd_audit(const ExperimentConfig& c, Outputs io) {
  Seq2SeqModel<float> model(c.model, c.train.seed);
  const auto spec = c.method_spec();
  attach(model, spec, c.train.seed);
  auto r = audit_params(model, spec);
  print_audit(io.out, r);
  if (spec.has_calibration()) {
    const auto counts = repcali_param_count(spec.calibration->seed_mode, c.model.n_max, c.model.d_h);
    io.out << "calibration_seed_mode: " << to_string(spec.calibration->seed_mode) << "\n";
    io.out << "calibration_count: " << counts.count << "\n";
    io.out << "paper-literal 2*d_h: " << counts.paper_literal << "\n";
  }
  return 0;
}

inline int cmd_project(const ExperimentConfig& c, const std::string& before_path, const std::string& after_path,
                       Outputs io) {
  const fs::path dir = fs::path(c.out_dir) / "project";
  fs::create_directories(dir);
  auto before = model_from_checkpoint(before_path);
  auto after = model_from_checkpoint(after_path);
  const auto data = generate_task(c.task);
  std::vector<Example> sample = data.test.empty() ? data.dev : data.test;
  if (sample.size() > c.latent.samples) sample.resize(c.latent.samples);
  std::vector<int> labels;
  for (const auto& ex : sample) labels.push_back(latent_label(ex, c.latent.labels, c.task.tag));
  const auto pooling = pooling_from_string(c.latent.pooling);
  std::ostringstream stats;
  stats << provenance_line(c) << "\n";
  stats << "stage,mean_intra,mean_inter_centroid,silhouette,pca_explained1,pca_explained2,tsne_kl_initial,tsne_kl_final\n";
  TsneOptions topt;
  topt.perplexity = c.latent.perplexity;
  topt.iters = c.latent.iters;
  topt.seed = c.latent.seed;
  for (auto [stage, model] : {std::pair<const char*, Seq2SeqModel<float>*>{"before", &before}, {"after", &after}}) {
    auto set = extract_latents(*model, sample, pooling);
    set.labels = labels;
    save_latents((dir / (std::string(stage) + "_latents.ckpt")).string(), set, stage);
    const auto cs = compactness_stats(set.x, labels);
    const auto pca = pca_project(set.x, 2);
    const auto tsne = tsne_project(set.x, topt);
    emit_plot(pca, labels, (dir / (std::string(stage) + "_pca")).string());
    emit_plot(tsne, labels, (dir / (std::string(stage) + "_tsne")).string());
    stats << stage << "," << fmt6(cs.mean_intra) << "," << fmt6(cs.mean_inter_centroid) << "," << fmt6(cs.silhouette)
          << "," << fmt6(pca.explained[0]) << "," << fmt6(pca.explained[1]) << "," << fmt6(tsne.kl_initial) << ","
          << fmt6(tsne.kl_final) << "\n";
  }
  write_text(dir / "compactness.csv", stats.str());
  io.out << stats.str();
  return 0;
}

inline int cmd_gradcheck(Outputs io) {
  double worst = 0.0;
  for (const auto& e : run_grad_suite()) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-44s max_rel_error=%.3e coords=%zu%s%s\n", e.name.c_str(), e.max_rel_error,
                  e.coords, e.worst.empty() ? "" : " worst=", e.worst.c_str());
    io.out << buf;
    worst = std::max(worst, e.max_rel_error);
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "max relative error: %.3e (tolerance 1e-3)\n", worst);
  io.out << buf;
  return worst <= 1e-3 ? 0 : 2;
}

inline int cmd_gen_task(const ExperimentConfig& c, Outputs io) {
  const fs::path dir = fs::path(c.out_dir) / "task";
  fs::create_directories(dir);
  const auto data = generate_task(c.task);
  for (const char* split : {"train", "dev", "test"}) {
    const auto path = (dir / (std::string(split) + ".tsv")).string();
    write_split(path, c.task, split, data.split(split));
    io.out << "wrote " << path << " (" << data.split(split).size() << " examples)\n";
  }
  return 0;
}

inline bool is_override(const std::string& arg) {
  if (arg.rfind("--", 0) != 0) return false;
  const auto dot = arg.find('.'), eq = arg.find('=');
  if (dot == std::string::npos || eq == std::string::npos || dot > eq) return false;
  return detail::schema().count(arg.substr(2, dot - 2)) != 0;
}

}  // namespace cli_detail

/// Entry point shared by the executable and the tests.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace cli_detail;
  std::vector<std::string> overrides, rest;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    (is_override(a) ? overrides : rest).push_back(a);
  }

  CLI::App app{"Representation-calibration and PEFT laboratory", "repcali"};
  app.require_subcommand(1);
  std::string config, ckpt, before, after, split = "test";
  auto with_config = [&](CLI::App* sub) { sub->add_option("-c,--config", config, "experiment config file"); };
  auto* train = app.add_subcommand("train", "train the configured method over all seeds");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a task split");
  auto* compare = app.add_subcommand("compare", "run every [compare] method and emit the comparison table");
  auto* audit = app.add_subcommand("audit", "report trainable-parameter counts against the closed forms");
  auto* project = app.add_subcommand("project", "latent projections and compactness for two checkpoints");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  auto* gen = app.add_subcommand("gen-task", "write the task splits as TSV files");
  for (auto* s : {train, eval, compare, audit, project, gen}) with_config(s);
  eval->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  eval->add_option("--split", split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));
  project->add_option("--before", before, "checkpoint before fine-tuning")->required();
  project->add_option("--after", after, "checkpoint after fine-tuning")->required();
  app.footer("Any config key can be overridden as --section.key=value.");

  std::vector<std::string> args(rest.rbegin(), rest.rend());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 1;
  }

  Outputs io{out, err};
  ExperimentConfig c;
  try {
    c = load_config(config, overrides);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  }
  try {
    if (train->parsed()) return cmd_train(c, io);
    if (eval->parsed()) return cmd_eval(c, ckpt, split, io);
    if (compare->parsed()) return cmd_compare(c, io);
    if (audit->parsed()) return cmd_audit(c, io);
    if (project->parsed()) return cmd_project(c, before, after, io);
    if (gradcheck->parsed()) return cmd_gradcheck(io);
    if (gen->parsed()) return cmd_gen_task(c, io);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

}  // namespace repcali
