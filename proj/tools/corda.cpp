// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0
//
// Command line front end for the context-weighted decomposition workbench.
// Subcommands cover the full pipeline: pretrain a student, collect layer
// input covariance, decompose weights, run the truncation or fine-tuning
// experiments, merge adapters back, and evaluate or summarize results.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "corda/experiment.hpp"
#include "corda/rng.hpp"
#include "corda/serialize.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir_flag;
  std::vector<std::uint64_t> seeds;
  int rank = 0;
  int calibration_samples = 0;
  int pretrain_steps = -1;
  int finetune_steps = -1;
};

void add_common(CLI::App* sub, CommonOpts& opts, bool config_required = true) {
  auto* config = sub->add_option("-c,--config", opts.config_path, "experiment config JSON");
  if (config_required) config->required()->check(CLI::ExistingFile);
  sub->add_option("--out-dir", opts.out_dir_flag,
                  "output directory (overrides config and CORDA_OUT_DIR)");
  sub->add_option("--seeds", opts.seeds, "override the config seed list");
  sub->add_option("--rank", opts.rank, "override the adapter rank");
  sub->add_option("--calibration-samples", opts.calibration_samples,
                  "override the calibration sample count");
  sub->add_option("--pretrain-steps", opts.pretrain_steps, "override pretrain.steps");
  sub->add_option("--finetune-steps", opts.finetune_steps, "override finetune.steps");
}

corda::ExperimentConfig load_with_overrides(const CommonOpts& opts) {
  corda::ExperimentConfig cfg = opts.config_path.empty()
                                    ? corda::default_config()
                                    : corda::load_config(opts.config_path);
  if (!opts.seeds.empty()) cfg.seeds = opts.seeds;
  if (opts.rank > 0) cfg.rank = opts.rank;
  if (opts.calibration_samples > 0) cfg.calibration_samples = opts.calibration_samples;
  if (opts.pretrain_steps >= 0) cfg.pretrain.steps = opts.pretrain_steps;
  if (opts.finetune_steps >= 0) cfg.finetune.steps = opts.finetune_steps;
  cfg.out_dir = corda::resolve_out_dir(cfg, opts.out_dir_flag).string();
  return cfg;
}

const corda::TaskSpec& task_by_name(const corda::ExperimentConfig& cfg,
                                    const std::string& name) {
  if (name == "knowledge") return cfg.task_knowledge;
  if (name == "finetune") return cfg.task_finetune;
  if (name == "mismatched") return cfg.task_mismatched;
  throw corda::ConfigError("unknown task '" + name + "'");
}

int run_report(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    std::cerr << "no reports found in " << dir << "\n";
    return 1;
  }
  std::vector<fs::path> summaries;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename().string().ends_with("_summary.json")) {
      summaries.push_back(entry.path());
    }
  }
  if (summaries.empty()) {
    std::cerr << "no reports found in " << dir << "\n";
    return 1;
  }
  std::sort(summaries.begin(), summaries.end());
  for (const fs::path& path : summaries) {
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    std::cout << "== " << j.value("experiment", "?") << " ("
              << j.value("tool_version", "?") << ") ==\n";
    const auto& medians = j.at("medians");
    for (auto it = medians.begin(); it != medians.end(); ++it) {
      std::cout << "  " << it.key() << " = "
                << corda::format_double(it.value().get<double>()) << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"context-weighted weight decomposition workbench"};
  app.set_version_flag("--version", corda::kToolVersion);
  app.require_subcommand(1);

  // pretrain
  CommonOpts pre_opts;
  std::uint64_t pre_seed = 0;
  std::string pre_output = "pretrained.corda";
  auto* pre = app.add_subcommand("pretrain", "train the student on the knowledge task");
  add_common(pre, pre_opts);
  pre->add_option("--seed", pre_seed, "run seed (default: first config seed)");
  pre->add_option("-o,--output", pre_output, "checkpoint filename inside the output dir");

  // collect-cov
  CommonOpts cov_opts;
  std::string cov_model;
  std::string cov_task = "knowledge";
  int cov_samples = 0;
  std::uint64_t cov_seed = 0;
  auto* cov = app.add_subcommand("collect-cov",
                                 "capture per-layer input covariance on a task");
  add_common(cov, cov_opts);
  cov->add_option("--model", cov_model, "network checkpoint (default: <out>/pretrained.corda)");
  cov->add_option("--task", cov_task, "knowledge|finetune|mismatched")
      ->check(CLI::IsMember({"knowledge", "finetune", "mismatched"}));
  cov->add_option("--samples", cov_samples, "calibration sample count");
  cov->add_option("--seed", cov_seed, "run seed (default: first config seed)");

  // decompose
  CommonOpts dec_opts;
  std::string dec_model;
  std::string dec_cov_dir;
  std::string dec_method = "co_svd";
  auto* dec = app.add_subcommand("decompose", "factor layer weights to disk");
  add_common(dec, dec_opts);
  dec->add_option("--model", dec_model, "network checkpoint (default: <out>/pretrained.corda)");
  dec->add_option("--cov-dir", dec_cov_dir, "covariance cache dir (default: <out>/cov)");
  dec->add_option("--method", dec_method, "plain|asvd|co_svd")
      ->check(CLI::IsMember({"plain", "asvd", "co_svd"}));

  // truncate-eval
  CommonOpts trunc_opts;
  auto* trunc = app.add_subcommand("truncate-eval", "run the truncation sweep experiment");
  add_common(trunc, trunc_opts);

  // finetune
  CommonOpts ft_opts;
  std::string ft_experiment;
  std::string ft_method;
  std::string ft_model;
  std::uint64_t ft_seed = 0;
  auto* ft = app.add_subcommand("finetune",
                                "run a fine-tuning experiment, or one method with --method");
  add_common(ft, ft_opts);
  ft->add_option("--experiment", ft_experiment, "kpa|ipa (default: config experiment)")
      ->check(CLI::IsMember({"kpa", "ipa"}));
  ft->add_option("--method", ft_method,
                 "single-run mode: kpa|ipa|lora|pissa|full on a saved checkpoint")
      ->check(CLI::IsMember({"kpa", "ipa", "lora", "pissa", "full"}));
  ft->add_option("--model", ft_model, "checkpoint for --method mode");
  ft->add_option("--seed", ft_seed, "run seed for --method mode");

  // merge
  std::string merge_model;
  std::string merge_output;
  auto* mrg = app.add_subcommand("merge", "fold adapters back into dense weights");
  mrg->add_option("--model", merge_model, "checkpoint with adapter layers")
      ->required()
      ->check(CLI::ExistingFile);
  mrg->add_option("-o,--output", merge_output, "merged checkpoint path")->required();

  // eval
  CommonOpts eval_opts;
  std::string eval_model;
  std::string eval_task = "finetune";
  int eval_samples = 0;
  std::uint64_t eval_seed = 0;
  auto* ev = app.add_subcommand("eval", "loss of a checkpoint on a task");
  add_common(ev, eval_opts);
  ev->add_option("--model", eval_model, "network checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--task", eval_task, "knowledge|finetune|mismatched")
      ->check(CLI::IsMember({"knowledge", "finetune", "mismatched"}));
  ev->add_option("--samples", eval_samples, "evaluation sample count");
  ev->add_option("--seed", eval_seed, "run seed (default: first config seed)");

  // ablate
  CommonOpts abl_opts;
  auto* abl = app.add_subcommand("ablate", "run the context x spectrum ablation grid");
  add_common(abl, abl_opts);

  // heatmap
  CommonOpts heat_opts;
  std::string heat_cov;
  std::string heat_output;
  int heat_bins = 0;
  auto* heat = app.add_subcommand("heatmap",
                                  "block-mean |covariance| grid from a cache file or config");
  add_common(heat, heat_opts, /*config_required=*/false);
  heat->add_option("--cov", heat_cov, "covariance cache file")->check(CLI::ExistingFile);
  heat->add_option("--bins", heat_bins, "grid bins (clamped to the channel count)");
  heat->add_option("-o,--output", heat_output, "CSV path for --cov mode");

  // report
  std::string rep_dir;
  CommonOpts rep_opts;
  auto* rep = app.add_subcommand("report", "print medians from saved experiment summaries");
  add_common(rep, rep_opts, /*config_required=*/false);
  rep->add_option("--dir", rep_dir, "report directory (default: resolved output dir)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed()) {
      corda::ExperimentConfig cfg = load_with_overrides(pre_opts);
      corda::validate_config(cfg);
      const std::uint64_t seed = pre->count("--seed") > 0 ? pre_seed : cfg.seeds.front();
      const corda::Task task_k = corda::make_task(cfg.task_knowledge);
      double final_loss = 0.0;
      const corda::Network net = corda::pretrain_student(cfg, seed, task_k, &final_loss);
      fs::create_directories(cfg.out_dir);
      const fs::path path = fs::path(cfg.out_dir) / pre_output;
      corda::save_network(net, path);
      std::cout << "pretrain seed=" << seed << " final_loss=" << corda::format_double(final_loss)
                << " -> " << path.string() << "\n";
    } else if (cov->parsed()) {
      corda::ExperimentConfig cfg = load_with_overrides(cov_opts);
      corda::validate_config(cfg);
      const fs::path model_path =
          cov_model.empty() ? fs::path(cfg.out_dir) / "pretrained.corda" : fs::path(cov_model);
      const corda::Network net = corda::load_network(model_path);
      const corda::Task task = corda::make_task(task_by_name(cfg, cov_task));
      const int samples = cov_samples > 0 ? cov_samples : cfg.calibration_samples;
      const std::uint64_t seed = cov->count("--seed") > 0 ? cov_seed : cfg.seeds.front();
      const auto stats =
          corda::capture_context(net, task, samples, corda::mix_seed(seed, "calib-" + cov_task));
      const fs::path cov_dir = fs::path(cfg.out_dir) / "cov";
      fs::create_directories(cov_dir);
      for (const auto& [id, entry] : stats) {
        corda::save_covariance(entry.covariance, cov_dir / (id + ".cov"));
        corda::write_mean_abs_csv(entry.mean_abs, cov_dir / (id + ".meanabs.csv"));
        std::cout << id << ": columns_seen=" << entry.covariance.columns_seen << "\n";
      }
      std::cout << "covariance cache -> " << cov_dir.string() << "\n";
    } else if (dec->parsed()) {
      corda::ExperimentConfig cfg = load_with_overrides(dec_opts);
      corda::validate_config(cfg);
      const fs::path model_path =
          dec_model.empty() ? fs::path(cfg.out_dir) / "pretrained.corda" : fs::path(dec_model);
      const corda::Network net = corda::load_network(model_path);
      const fs::path cov_dir =
          dec_cov_dir.empty() ? fs::path(cfg.out_dir) / "cov" : fs::path(dec_cov_dir);
      const fs::path fac_dir = fs::path(cfg.out_dir) / "factors";
      fs::create_directories(fac_dir);
      for (int l = 0; l < net.layer_count(); ++l) {
        const std::string id = net.layer_id(l);
        const corda::Matrix& w = net.plain_weight(l);
        corda::ContextFactors factors;
        if (dec_method == "plain") {
          factors = corda::plain_factors(w, "none");
        } else if (dec_method == "asvd") {
          factors = corda::asvd_factors(
              w, corda::read_mean_abs_csv(cov_dir / (id + ".meanabs.csv")), "cache");
        } else {
          factors = corda::co_svd_factors(w, corda::load_covariance(cov_dir / (id + ".cov")),
                                          cfg.damping, "cache");
        }
        const fs::path path = fac_dir / (id + ".fac");
        corda::save_factors(factors, path);
        std::cout << id << ": R=" << corda::factor_rank(factors)
                  << " sigma0=" << corda::format_double(factors.sigma.front()) << " -> "
                  << path.string() << "\n";
      }
    } else if (trunc->parsed()) {
      corda::ExperimentConfig cfg = load_with_overrides(trunc_opts);
      cfg.experiment = "truncation";
      const corda::Report report = corda::run_truncation(cfg);
      corda::write_report(report, cfg.out_dir);
      std::cout << "truncation report -> " << cfg.out_dir << "\n";
    } else if (ft->parsed()) {
      corda::ExperimentConfig cfg = load_with_overrides(ft_opts);
      if (!ft_method.empty()) {
        // Single-run mode over an existing checkpoint.
        corda::validate_config(cfg);
        const fs::path model_path =
            ft_model.empty() ? fs::path(cfg.out_dir) / "pretrained.corda" : fs::path(ft_model);
        const corda::Network net0 = corda::load_network(model_path);
        const corda::Task task_k = corda::make_task(cfg.task_knowledge);
        const corda::Task task_f = corda::make_task(cfg.task_finetune);
        const std::uint64_t seed = ft->count("--seed") > 0 ? ft_seed : cfg.seeds.front();
        corda::Network net = [&]() {
          if (ft_method == "kpa") {
            const auto stats = corda::capture_context(net0, task_k, cfg.calibration_samples,
                                                      corda::mix_seed(seed, "calib-k"));
            return corda::build_adapter_net(cfg, net0, corda::ContextSource::knowledge,
                                            corda::SliceEnd::smallest, &stats);
          }
          if (ft_method == "ipa") {
            const auto stats = corda::capture_context(net0, task_f, cfg.calibration_samples,
                                                      corda::mix_seed(seed, "calib-f"));
            return corda::build_adapter_net(cfg, net0, corda::ContextSource::finetune,
                                            corda::SliceEnd::largest, &stats);
          }
          if (ft_method == "lora") return corda::build_lora_net(cfg, net0, seed);
          if (ft_method == "pissa") {
            return corda::build_adapter_net(cfg, net0, corda::ContextSource::none,
                                            corda::SliceEnd::largest, nullptr);
          }
          return net0;
        }();
        const corda::FinetuneOutcome out =
            corda::finetune_eval(cfg, net, task_f, task_k, seed);
        fs::create_directories(cfg.out_dir);
        const fs::path path = fs::path(cfg.out_dir) / ("finetuned_" + ft_method + ".corda");
        corda::save_network(net, path);
        std::cout << "finetune method=" << ft_method << " seed=" << seed
                  << " df_loss=" << corda::format_double(out.df_loss)
                  << " dk_loss=" << corda::format_double(out.dk_loss) << " -> " << path.string()
                  << "\n";
      } else {
        if (!ft_experiment.empty()) cfg.experiment = ft_experiment;
        if (cfg.experiment != "kpa" && cfg.experiment != "ipa") {
          throw corda::ConfigError("finetune runs the kpa or ipa experiment, got '" +
                                   cfg.experiment + "'");
        }
        const corda::Report report = corda::run_experiment(cfg);
        corda::write_report(report, cfg.out_dir);
        std::cout << cfg.experiment << " report -> " << cfg.out_dir << "\n";
      }
    } else if (mrg->parsed()) {
      const corda::Network net = corda::load_network(merge_model);
      const corda::Network merged = corda::merge_all(net);
      corda::save_network(merged, merge_output);
      std::cout << "merged -> " << merge_output << "\n";
    } else if (ev->parsed()) {
      corda::ExperimentConfig cfg = load_with_overrides(eval_opts);
      corda::validate_config(cfg);
      const corda::Network net = corda::load_network(eval_model);
      const corda::Task task = corda::make_task(task_by_name(cfg, eval_task));
      const int samples = eval_samples > 0 ? eval_samples : cfg.eval_samples;
      const std::uint64_t seed = ev->count("--seed") > 0 ? eval_seed : cfg.seeds.front();
      const double loss =
          corda::evaluate(net, task, samples, corda::mix_seed(seed, "eval-cli"));
      std::cout << "loss " << corda::format_double(loss) << "\n";
    } else if (abl->parsed()) {
      corda::ExperimentConfig cfg = load_with_overrides(abl_opts);
      cfg.experiment = "ablation";
      const corda::Report report = corda::run_ablation_grid(cfg);
      corda::write_report(report, cfg.out_dir);
      std::cout << "ablation report -> " << cfg.out_dir << "\n";
    } else if (heat->parsed()) {
      if (!heat_cov.empty()) {
        const corda::CovarianceStat stat = corda::load_covariance(heat_cov);
        const int want = heat_bins > 0 ? heat_bins : 32;
        const int bins = std::min(want, stat.c.rows());
        const corda::Matrix grid = corda::heatmap_from_stat(stat, bins);
        const std::string out_path =
            heat_output.empty() ? heat_cov + ".heatmap.csv" : heat_output;
        corda::write_heatmap_csv(grid, out_path);
        std::cout << "heatmap bins=" << bins << " -> " << out_path << "\n";
      } else {
        if (heat_opts.config_path.empty()) {
          throw corda::ConfigError("heatmap needs --cov or --config");
        }
        corda::ExperimentConfig cfg = load_with_overrides(heat_opts);
        cfg.experiment = "heatmap";
        if (heat_bins > 0) cfg.heatmap_bins = heat_bins;
        const corda::Report report = corda::run_experiment(cfg);
        corda::write_report(report, cfg.out_dir);
        std::cout << "heatmap report -> " << cfg.out_dir << "\n";
      }
    } else if (rep->parsed()) {
      std::string dir = rep_dir;
      if (dir.empty()) {
        corda::ExperimentConfig cfg = rep_opts.config_path.empty()
                                          ? corda::default_config()
                                          : corda::load_config(rep_opts.config_path);
        dir = corda::resolve_out_dir(cfg, rep_opts.out_dir_flag).string();
      }
      return run_report(dir);
    }
  } catch (const corda::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
