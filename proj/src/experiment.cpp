// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#include "corda/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>

#include "corda/rng.hpp"

namespace corda {

namespace {

using nlohmann::json;

json to_json(const InputDistribution& d) {
  return json{{"kind", to_string(d.kind)}, {"mean", d.mean}, {"stddev", d.stddev}};
}

InputDistribution input_distribution_from_json(const json& j, InputDistribution base) {
  if (j.contains("kind")) base.kind = input_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("mean")) base.mean = j.at("mean").get<double>();
  if (j.contains("stddev")) base.stddev = j.at("stddev").get<double>();
  return base;
}

json to_json(const TaskSpec& t) {
  return json{{"input_dim", t.input_dim},
              {"output_dim", t.output_dim},
              {"teacher_seed", t.teacher_seed},
              {"input_distribution", to_json(t.input_distribution)},
              {"noise_std", t.noise_std}};
}

TaskSpec task_from_json(const json& j, TaskSpec base) {
  if (j.contains("input_dim")) base.input_dim = j.at("input_dim").get<int>();
  if (j.contains("output_dim")) base.output_dim = j.at("output_dim").get<int>();
  if (j.contains("teacher_seed")) base.teacher_seed = j.at("teacher_seed").get<std::uint64_t>();
  if (j.contains("input_distribution")) {
    base.input_distribution =
        input_distribution_from_json(j.at("input_distribution"), base.input_distribution);
  }
  if (j.contains("noise_std")) base.noise_std = j.at("noise_std").get<double>();
  return base;
}

json to_json(const NetworkSpec& n) {
  return json{{"layer_dims", n.layer_dims},
              {"nonlinearity", to_string(n.nonlinearity)},
              {"seed", n.seed}};
}

NetworkSpec network_from_json(const json& j, NetworkSpec base) {
  if (j.contains("layer_dims")) base.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  if (j.contains("nonlinearity")) {
    base.nonlinearity = nonlinearity_from_string(j.at("nonlinearity").get<std::string>());
  }
  if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
  return base;
}

json to_json(const TrainConfig& t) {
  return json{{"steps", t.steps},
              {"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"optimizer", to_string(t.optimizer)},
              {"adam_beta1", t.adam_beta1},
              {"adam_beta2", t.adam_beta2},
              {"adam_eps", t.adam_eps}};
}

TrainConfig train_from_json(const json& j, TrainConfig base) {
  if (j.contains("steps")) base.steps = j.at("steps").get<int>();
  if (j.contains("batch_size")) base.batch_size = j.at("batch_size").get<int>();
  if (j.contains("learning_rate")) base.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("optimizer")) {
    base.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  }
  if (j.contains("adam_beta1")) base.adam_beta1 = j.at("adam_beta1").get<double>();
  if (j.contains("adam_beta2")) base.adam_beta2 = j.at("adam_beta2").get<double>();
  if (j.contains("adam_eps")) base.adam_eps = j.at("adam_eps").get<double>();
  return base;
}

json to_json(const DampingConfig& d) {
  return json{{"initial_coeff", d.initial_coeff},
              {"identity_threshold", d.identity_threshold},
              {"max_doublings", d.max_doublings},
              {"absolute_floor", d.absolute_floor}};
}

DampingConfig damping_from_json(const json& j, DampingConfig base) {
  if (j.contains("initial_coeff")) base.initial_coeff = j.at("initial_coeff").get<double>();
  if (j.contains("identity_threshold")) {
    base.identity_threshold = j.at("identity_threshold").get<double>();
  }
  if (j.contains("max_doublings")) base.max_doublings = j.at("max_doublings").get<int>();
  if (j.contains("absolute_floor")) base.absolute_floor = j.at("absolute_floor").get<double>();
  return base;
}

// Adds the base rows for one pretrained student and enforces the convergence
// gate shared by every fine-tuning driver.
Network pretrained_with_rows(const ExperimentConfig& cfg, std::uint64_t seed,
                             const Task& task_k, Report& report) {
  double final_loss = 0.0;
  Network net = pretrain_student(cfg, seed, task_k, &final_loss);
  report.rows.push_back({seed, "base", "pretrain_final_loss", final_loss});
  if (!(final_loss <= cfg.pretrain_gate)) {
    throw ConfigError("pretraining final loss " + format_double(final_loss) +
                      " exceeds gate " + format_double(cfg.pretrain_gate) +
                      "; raise pretrain.steps or the gate");
  }
  return net;
}

void emit_finetune_rows(Report& report, std::uint64_t seed, const std::string& method,
                        const FinetuneOutcome& out, bool with_curve) {
  if (!out.curve.empty()) {
    report.rows.push_back({seed, method, "finetune_final_loss", out.curve.back()});
  }
  report.rows.push_back({seed, method, "df_loss", out.df_loss});
  report.rows.push_back({seed, method, "dk_retention_loss", out.dk_loss});
  if (with_curve) {
    for (std::size_t i = 0; i < out.curve.size(); ++i) {
      report.rows.push_back({seed, method, "step=" + std::to_string(i), out.curve[i]});
    }
  }
}

}  // namespace

const char* to_string(ContextSource c) {
  switch (c) {
    case ContextSource::none: return "none";
    case ContextSource::knowledge: return "dk";
    case ContextSource::finetune: return "df";
    case ContextSource::mismatched: return "mismatched";
  }
  return "unknown";
}

const char* to_string(SliceEnd s) {
  return s == SliceEnd::largest ? "largest" : "smallest";
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.network.layer_dims = {32, 64, 64, 16};
  cfg.network.nonlinearity = Nonlinearity::tanh;
  cfg.network.seed = 7;

  cfg.task_knowledge.input_dim = 32;
  cfg.task_knowledge.output_dim = 16;
  cfg.task_knowledge.teacher_seed = 101;
  cfg.task_knowledge.input_distribution = {InputKind::gaussian_shifted, 3.0, 1.0};
  cfg.task_knowledge.noise_std = 0.0;

  cfg.task_finetune.input_dim = 32;
  cfg.task_finetune.output_dim = 16;
  cfg.task_finetune.teacher_seed = 202;
  cfg.task_finetune.input_distribution = {InputKind::gaussian, 0.0, 1.0};
  cfg.task_finetune.noise_std = 0.0;

  cfg.task_mismatched.input_dim = 32;
  cfg.task_mismatched.output_dim = 16;
  cfg.task_mismatched.teacher_seed = 303;
  cfg.task_mismatched.input_distribution = {InputKind::gaussian_shifted, 2.0, 1.0};
  cfg.task_mismatched.noise_std = 0.0;

  cfg.pretrain.steps = 2000;
  cfg.pretrain.batch_size = 32;
  cfg.pretrain.learning_rate = 2e-3;
  cfg.pretrain.optimizer = OptimizerKind::adam;

  cfg.finetune.steps = 400;
  cfg.finetune.batch_size = 32;
  cfg.finetune.learning_rate = 2e-3;
  cfg.finetune.optimizer = OptimizerKind::adam;

  cfg.discard_fractions = {0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75};
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  return json{{"experiment", cfg.experiment},
              {"out_dir", cfg.out_dir},
              {"seeds", cfg.seeds},
              {"rank", cfg.rank},
              {"adapter_layers", cfg.adapter_layers},
              {"calibration_samples", cfg.calibration_samples},
              {"small_calibration_samples", cfg.small_calibration_samples},
              {"network", to_json(cfg.network)},
              {"task_knowledge", to_json(cfg.task_knowledge)},
              {"task_finetune", to_json(cfg.task_finetune)},
              {"task_mismatched", to_json(cfg.task_mismatched)},
              {"pretrain", to_json(cfg.pretrain)},
              {"finetune", to_json(cfg.finetune)},
              {"damping", to_json(cfg.damping)},
              {"discard_fractions", cfg.discard_fractions},
              {"eval_samples", cfg.eval_samples},
              {"pretrain_gate", cfg.pretrain_gate},
              {"heatmap_bins", cfg.heatmap_bins}};
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg = default_config();
  try {
    if (j.contains("experiment")) cfg.experiment = j.at("experiment").get<std::string>();
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("rank")) cfg.rank = j.at("rank").get<int>();
    if (j.contains("adapter_layers")) {
      cfg.adapter_layers = j.at("adapter_layers").get<std::vector<int>>();
    }
    if (j.contains("calibration_samples")) {
      cfg.calibration_samples = j.at("calibration_samples").get<int>();
    }
    if (j.contains("small_calibration_samples")) {
      cfg.small_calibration_samples = j.at("small_calibration_samples").get<int>();
    }
    if (j.contains("network")) cfg.network = network_from_json(j.at("network"), cfg.network);
    if (j.contains("task_knowledge")) {
      cfg.task_knowledge = task_from_json(j.at("task_knowledge"), cfg.task_knowledge);
    }
    if (j.contains("task_finetune")) {
      cfg.task_finetune = task_from_json(j.at("task_finetune"), cfg.task_finetune);
    }
    if (j.contains("task_mismatched")) {
      cfg.task_mismatched = task_from_json(j.at("task_mismatched"), cfg.task_mismatched);
    }
    if (j.contains("pretrain")) cfg.pretrain = train_from_json(j.at("pretrain"), cfg.pretrain);
    if (j.contains("finetune")) cfg.finetune = train_from_json(j.at("finetune"), cfg.finetune);
    if (j.contains("damping")) cfg.damping = damping_from_json(j.at("damping"), cfg.damping);
    if (j.contains("discard_fractions")) {
      cfg.discard_fractions = j.at("discard_fractions").get<std::vector<double>>();
    }
    if (j.contains("eval_samples")) cfg.eval_samples = j.at("eval_samples").get<int>();
    if (j.contains("pretrain_gate")) cfg.pretrain_gate = j.at("pretrain_gate").get<double>();
    if (j.contains("heatmap_bins")) cfg.heatmap_bins = j.at("heatmap_bins").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void validate_config(const ExperimentConfig& cfg) {
  static const std::set<std::string> kKnown = {"truncation", "kpa", "ipa", "ablation",
                                              "heatmap"};
  if (kKnown.count(cfg.experiment) == 0) {
    throw ConfigError("unknown experiment '" + cfg.experiment + "'");
  }
  if (cfg.seeds.empty()) throw ConfigError("seeds list must not be empty");
  if (cfg.rank < 1) throw ConfigError("rank must be >= 1");
  if (cfg.calibration_samples < 1 || cfg.small_calibration_samples < 1) {
    throw ConfigError("calibration sample counts must be >= 1");
  }
  if (cfg.eval_samples < 1) throw ConfigError("eval_samples must be >= 1");
  if (cfg.heatmap_bins < 1) throw ConfigError("heatmap_bins must be >= 1");
  if (cfg.network.layer_dims.size() < 2) {
    throw ConfigError("network needs at least input and output dims");
  }
  for (int d : cfg.network.layer_dims) {
    if (d < 1) throw ConfigError("network layer dims must be >= 1");
  }
  const int layer_count = static_cast<int>(cfg.network.layer_dims.size()) - 1;
  std::set<int> seen;
  for (int idx : cfg.adapter_layers) {
    if (idx < 0 || idx >= layer_count) {
      throw ConfigError("adapter layer index " + std::to_string(idx) + " out of range");
    }
    if (!seen.insert(idx).second) {
      throw ConfigError("duplicate adapter layer index " + std::to_string(idx));
    }
  }
  std::vector<int> adapted = cfg.adapter_layers;
  if (adapted.empty()) {
    for (int i = 0; i < layer_count; ++i) adapted.push_back(i);
  }
  for (int idx : adapted) {
    const int max_rank =
        std::min(cfg.network.layer_dims[idx], cfg.network.layer_dims[idx + 1]);
    if (cfg.rank > max_rank) {
      throw ConfigError("rank " + std::to_string(cfg.rank) + " exceeds layer" +
                        std::to_string(idx) + " max " + std::to_string(max_rank));
    }
  }
  for (double f : cfg.discard_fractions) {
    if (!(f >= 0.0) || !(f < 1.0)) {
      throw ConfigError("discard fractions must lie in [0, 1)");
    }
  }
  if (cfg.experiment == "truncation" && cfg.discard_fractions.empty()) {
    throw ConfigError("truncation needs a non-empty discard_fractions list");
  }
  auto check_task = [&](const TaskSpec& t, const char* name) {
    if (t.input_dim != cfg.network.layer_dims.front() ||
        t.output_dim != cfg.network.layer_dims.back()) {
      throw ConfigError(std::string(name) + " dims do not match the network");
    }
    if (t.input_distribution.stddev <= 0.0) {
      throw ConfigError(std::string(name) + " stddev must be > 0");
    }
    if (t.noise_std < 0.0) throw ConfigError(std::string(name) + " noise_std must be >= 0");
  };
  check_task(cfg.task_knowledge, "task_knowledge");
  check_task(cfg.task_finetune, "task_finetune");
  check_task(cfg.task_mismatched, "task_mismatched");
  if (cfg.pretrain.steps < 0 || cfg.finetune.steps < 0) {
    throw ConfigError("training steps must be >= 0");
  }
  if (!(cfg.pretrain_gate > 0.0)) throw ConfigError("pretrain_gate must be > 0");
}

std::filesystem::path resolve_out_dir(const ExperimentConfig& cfg,
                                      const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  if (const char* env = std::getenv("CORDA_OUT_DIR"); env != nullptr && env[0] != '\0') {
    return env;
  }
  return "corda-out";
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgumentError("median: empty value list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<double> collect_values(const Report& report, const std::string& method,
                                   const std::string& key) {
  std::vector<double> out;
  for (const MetricRow& row : report.rows) {
    if (row.method == method && row.key == key) out.push_back(row.value);
  }
  return out;
}

double report_median(const Report& report, const std::string& method, const std::string& key) {
  return median(collect_values(report, method, key));
}

Network pretrain_student(const ExperimentConfig& cfg, std::uint64_t seed, const Task& task_k,
                         double* final_loss) {
  NetworkSpec spec = cfg.network;
  spec.seed = mix_seed(mix_seed(seed, "student-init"), cfg.network.seed);
  Network net = Network::random_init(spec);
  TrainConfig tc = cfg.pretrain;
  tc.seed = mix_seed(seed, "pretrain-data");
  TrainReport report = train(net, task_k, tc);
  if (final_loss != nullptr) {
    *final_loss = report.loss_curve.empty() ? std::numeric_limits<double>::infinity()
                                            : report.loss_curve.back();
  }
  return net;
}

std::vector<int> selected_layers(const ExperimentConfig& cfg, const Network& net) {
  std::vector<int> layers = cfg.adapter_layers;
  if (layers.empty()) {
    for (int i = 0; i < net.layer_count(); ++i) layers.push_back(i);
  }
  std::sort(layers.begin(), layers.end());
  for (int idx : layers) {
    if (idx < 0 || idx >= net.layer_count()) {
      throw ConfigError("adapter layer index " + std::to_string(idx) + " out of range");
    }
  }
  return layers;
}

Network build_adapter_net(const ExperimentConfig& cfg, const Network& pretrained,
                          ContextSource ctx, SliceEnd slice,
                          const std::map<std::string, LayerActivationStats>* stats) {
  if (ctx != ContextSource::none && stats == nullptr) {
    throw InvalidArgumentError("build_adapter_net: context source needs activation stats");
  }
  Network net = pretrained;
  for (int idx : selected_layers(cfg, net)) {
    const std::string id = net.layer_id(idx);
    const Matrix& w = net.plain_weight(idx);
    ContextFactors factors;
    if (ctx == ContextSource::none) {
      factors = plain_factors(w, "none");
    } else {
      const auto it = stats->find(id);
      if (it == stats->end()) {
        throw InvalidArgumentError("build_adapter_net: no stats for " + id);
      }
      factors = co_svd_factors(w, it->second.covariance, cfg.damping, to_string(ctx));
    }
    DecomposedLayer adapter;
    if (slice == SliceEnd::largest) {
      adapter = init_ipa(factors, w, cfg.rank, id);
      if (ctx == ContextSource::none) adapter.mode = AdapterMode::pissa;
    } else {
      adapter = init_kpa(factors, w, cfg.rank, id);
    }
    net.set_adapter(idx, std::move(adapter));
  }
  return net;
}

Network build_lora_net(const ExperimentConfig& cfg, const Network& pretrained,
                       std::uint64_t seed) {
  Network net = pretrained;
  for (int idx : selected_layers(cfg, net)) {
    const std::string id = net.layer_id(idx);
    net.set_adapter(idx,
                    init_lora(net.plain_weight(idx), cfg.rank, mix_seed(seed, "lora-" + id), id));
  }
  return net;
}

FinetuneOutcome finetune_eval(const ExperimentConfig& cfg, Network& net, const Task& task_f,
                              const Task& task_k, std::uint64_t seed) {
  TrainConfig tc = cfg.finetune;
  tc.seed = mix_seed(seed, "finetune-data");
  TrainReport report = train(net, task_f, tc);
  FinetuneOutcome out;
  out.curve = std::move(report.loss_curve);
  out.df_loss = evaluate(net, task_f, cfg.eval_samples, mix_seed(seed, "eval-f"));
  out.dk_loss = evaluate(net, task_k, cfg.eval_samples, mix_seed(seed, "eval-k"));
  return out;
}

Report run_truncation(const ExperimentConfig& cfg) {
  validate_config(cfg);
  Report report;
  report.experiment = "truncation";
  report.config_echo = config_to_json(cfg);
  const Task task_k = make_task(cfg.task_knowledge);
  const Task task_mm = make_task(cfg.task_mismatched);

  struct MethodFactors {
    std::string name;
    std::vector<ContextFactors> per_layer;
  };

  for (const std::uint64_t seed : cfg.seeds) {
    Network net0 = pretrained_with_rows(cfg, seed, task_k, report);
    const double base_loss = evaluate(net0, task_k, cfg.eval_samples, mix_seed(seed, "eval-k"));
    report.rows.push_back({seed, "base", "dk_loss", base_loss});

    const auto stats_k = capture_context(net0, task_k, cfg.calibration_samples,
                                         mix_seed(seed, "calib-k"));
    const auto stats_k_small = capture_context(net0, task_k, cfg.small_calibration_samples,
                                               mix_seed(seed, "calib-k-small"));
    const auto stats_mm = capture_context(net0, task_mm, cfg.calibration_samples,
                                          mix_seed(seed, "calib-mm"));

    std::vector<MethodFactors> methods;
    for (const char* name :
         {"plain", "asvd", "co_svd", "co_svd_small", "co_svd_mismatched"}) {
      MethodFactors mf;
      mf.name = name;
      for (int l = 0; l < net0.layer_count(); ++l) {
        const std::string id = net0.layer_id(l);
        const Matrix& w = net0.plain_weight(l);
        if (mf.name == "plain") {
          mf.per_layer.push_back(plain_factors(w, "none"));
        } else if (mf.name == "asvd") {
          mf.per_layer.push_back(asvd_factors(w, stats_k.at(id).mean_abs, "dk"));
        } else if (mf.name == "co_svd") {
          mf.per_layer.push_back(co_svd_factors(w, stats_k.at(id).covariance, cfg.damping, "dk"));
        } else if (mf.name == "co_svd_small") {
          mf.per_layer.push_back(
              co_svd_factors(w, stats_k_small.at(id).covariance, cfg.damping, "dk_small"));
        } else {
          mf.per_layer.push_back(
              co_svd_factors(w, stats_mm.at(id).covariance, cfg.damping, "mismatched"));
        }
      }
      methods.push_back(std::move(mf));
    }

    for (const MethodFactors& mf : methods) {
      for (const double frac : cfg.discard_fractions) {
        double loss = base_loss;
        if (frac > 0.0) {
          Network net_t = net0;
          for (int l = 0; l < net0.layer_count(); ++l) {
            const ContextFactors& f = mf.per_layer[l];
            const int rank = factor_rank(f);
            const int discard = static_cast<int>(std::lround(frac * rank));
            net_t.set_plain(l, truncate_reconstruct(f, rank - discard));
          }
          loss = evaluate(net_t, task_k, cfg.eval_samples, mix_seed(seed, "eval-k"));
        }
        report.rows.push_back({seed, mf.name, "discard=" + format_double(frac), loss});
      }
    }
  }
  return report;
}

Report run_kpa(const ExperimentConfig& cfg) {
  validate_config(cfg);
  Report report;
  report.experiment = "kpa";
  report.config_echo = config_to_json(cfg);
  const Task task_k = make_task(cfg.task_knowledge);
  const Task task_f = make_task(cfg.task_finetune);

  for (const std::uint64_t seed : cfg.seeds) {
    Network net0 = pretrained_with_rows(cfg, seed, task_k, report);
    const double base_dk = evaluate(net0, task_k, cfg.eval_samples, mix_seed(seed, "eval-k"));
    report.rows.push_back({seed, "base", "dk_loss", base_dk});
    const auto stats_k = capture_context(net0, task_k, cfg.calibration_samples,
                                         mix_seed(seed, "calib-k"));

    for (const char* method : {"kpa", "lora", "pissa", "full"}) {
      Network net = [&]() {
        const std::string m = method;
        if (m == "kpa") {
          return build_adapter_net(cfg, net0, ContextSource::knowledge, SliceEnd::smallest,
                                   &stats_k);
        }
        if (m == "lora") return build_lora_net(cfg, net0, seed);
        if (m == "pissa") {
          return build_adapter_net(cfg, net0, ContextSource::none, SliceEnd::largest, nullptr);
        }
        return net0;  // full fine-tuning: every dense weight trains
      }();
      const FinetuneOutcome out = finetune_eval(cfg, net, task_f, task_k, seed);
      emit_finetune_rows(report, seed, method, out, /*with_curve=*/false);
    }
  }
  return report;
}

Report run_ipa(const ExperimentConfig& cfg) {
  validate_config(cfg);
  Report report;
  report.experiment = "ipa";
  report.config_echo = config_to_json(cfg);
  const Task task_k = make_task(cfg.task_knowledge);
  const Task task_f = make_task(cfg.task_finetune);

  for (const std::uint64_t seed : cfg.seeds) {
    Network net0 = pretrained_with_rows(cfg, seed, task_k, report);
    const auto stats_f = capture_context(net0, task_f, cfg.calibration_samples,
                                         mix_seed(seed, "calib-f"));

    for (const char* method : {"ipa", "lora", "pissa"}) {
      Network net = [&]() {
        const std::string m = method;
        if (m == "ipa") {
          return build_adapter_net(cfg, net0, ContextSource::finetune, SliceEnd::largest,
                                   &stats_f);
        }
        if (m == "lora") return build_lora_net(cfg, net0, seed);
        return build_adapter_net(cfg, net0, ContextSource::none, SliceEnd::largest, nullptr);
      }();
      const FinetuneOutcome out = finetune_eval(cfg, net, task_f, task_k, seed);
      emit_finetune_rows(report, seed, method, out, /*with_curve=*/true);
    }
  }
  return report;
}

Report run_ablation_grid(const ExperimentConfig& cfg) {
  validate_config(cfg);
  Report report;
  report.experiment = "ablation";
  report.config_echo = config_to_json(cfg);
  const Task task_k = make_task(cfg.task_knowledge);
  const Task task_f = make_task(cfg.task_finetune);
  const Task task_mm = make_task(cfg.task_mismatched);

  for (const std::uint64_t seed : cfg.seeds) {
    Network net0 = pretrained_with_rows(cfg, seed, task_k, report);
    const double base_dk = evaluate(net0, task_k, cfg.eval_samples, mix_seed(seed, "eval-k"));
    report.rows.push_back({seed, "base", "dk_loss", base_dk});

    const auto stats_k = capture_context(net0, task_k, cfg.calibration_samples,
                                         mix_seed(seed, "calib-k"));
    const auto stats_f = capture_context(net0, task_f, cfg.calibration_samples,
                                         mix_seed(seed, "calib-f"));
    const auto stats_mm = capture_context(net0, task_mm, cfg.calibration_samples,
                                          mix_seed(seed, "calib-mm"));

    for (const ContextSource ctx : {ContextSource::none, ContextSource::knowledge,
                                    ContextSource::finetune, ContextSource::mismatched}) {
      const std::map<std::string, LayerActivationStats>* stats = nullptr;
      if (ctx == ContextSource::knowledge) stats = &stats_k;
      if (ctx == ContextSource::finetune) stats = &stats_f;
      if (ctx == ContextSource::mismatched) stats = &stats_mm;
      for (const SliceEnd slice : {SliceEnd::largest, SliceEnd::smallest}) {
        Network net = build_adapter_net(cfg, net0, ctx, slice, stats);
        const FinetuneOutcome out = finetune_eval(cfg, net, task_f, task_k, seed);
        const std::string method = std::string(to_string(ctx)) + "+" + to_string(slice);
        emit_finetune_rows(report, seed, method, out, /*with_curve=*/false);
      }
    }
  }
  return report;
}

namespace {

Report run_heatmap(const ExperimentConfig& cfg) {
  validate_config(cfg);
  Report report;
  report.experiment = "heatmap";
  report.config_echo = config_to_json(cfg);
  const Task task_k = make_task(cfg.task_knowledge);
  const std::uint64_t seed = cfg.seeds.front();
  Network net = pretrain_student(cfg, seed, task_k);
  const auto stats = capture_context(net, task_k, cfg.calibration_samples,
                                     mix_seed(seed, "calib-k"));
  const std::filesystem::path out_dir = resolve_out_dir(cfg, "");
  std::filesystem::create_directories(out_dir);
  for (int l = 0; l < net.layer_count(); ++l) {
    const std::string id = net.layer_id(l);
    const CovarianceStat& stat = stats.at(id).covariance;
    // Narrow layers get as many bins as they have channels.
    const int bins = std::min(cfg.heatmap_bins, stat.c.rows());
    const Matrix grid = heatmap_from_stat(stat, bins);
    write_heatmap_csv(grid, out_dir / ("heatmap_" + id + ".csv"));
    report.rows.push_back({seed, "heatmap", "bins_" + id, static_cast<double>(bins)});
  }
  return report;
}

}  // namespace

Report run_experiment(const ExperimentConfig& cfg) {
  if (cfg.experiment == "truncation") return run_truncation(cfg);
  if (cfg.experiment == "kpa") return run_kpa(cfg);
  if (cfg.experiment == "ipa") return run_ipa(cfg);
  if (cfg.experiment == "ablation") return run_ablation_grid(cfg);
  if (cfg.experiment == "heatmap") return run_heatmap(cfg);
  throw ConfigError("unknown experiment '" + cfg.experiment + "'");
}

Matrix heatmap_from_stat(const CovarianceStat& stat, int bins) {
  const int d = stat.c.rows();
  if (stat.c.cols() != d) throw DimensionError("heatmap_from_stat: covariance must be square");
  if (bins < 1 || bins > d) {
    throw InvalidArgumentError("heatmap_from_stat: bins " + std::to_string(bins) +
                               " outside [1, " + std::to_string(d) + "]");
  }
  Matrix grid(bins, bins);
  for (int br = 0; br < bins; ++br) {
    const int r0 = br * d / bins;
    const int r1 = (br + 1) * d / bins;
    for (int bc = 0; bc < bins; ++bc) {
      const int c0 = bc * d / bins;
      const int c1 = (bc + 1) * d / bins;
      double sum = 0.0;
      for (int i = r0; i < r1; ++i) {
        for (int j = c0; j < c1; ++j) sum += std::abs(stat.c(i, j));
      }
      grid(br, bc) = sum / (static_cast<double>(r1 - r0) * (c1 - c0));
    }
  }
  return grid;
}

void write_heatmap_csv(const Matrix& grid, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "row,col,mean_abs\n";
  for (int i = 0; i < grid.rows(); ++i) {
    for (int j = 0; j < grid.cols(); ++j) {
      out << i << "," << j << "," << format_double(grid(i, j)) << "\n";
    }
  }
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

void write_report(const Report& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);

  const std::filesystem::path csv_path = out_dir / (report.experiment + "_metrics.csv");
  {
    std::ofstream out(csv_path);
    if (!out) throw IoError("cannot open '" + csv_path.string() + "' for writing");
    out << "seed,method,key,value\n";
    for (const MetricRow& row : report.rows) {
      out << row.seed << "," << row.method << "," << row.key << ","
          << format_double(row.value) << "\n";
    }
    if (!out) throw IoError("write failed on '" + csv_path.string() + "'");
  }

  // Medians per (method, key), excluding per-step curve samples.
  std::map<std::string, std::vector<double>> grouped;
  for (const MetricRow& row : report.rows) {
    if (row.key.rfind("step=", 0) == 0) continue;
    grouped[row.method + "|" + row.key].push_back(row.value);
  }
  json medians = json::object();
  for (const auto& [name, values] : grouped) medians[name] = median(values);

  json summary{{"experiment", report.experiment},
               {"tool_version", report.tool_version},
               {"config", report.config_echo},
               {"medians", medians}};
  const std::filesystem::path json_path = out_dir / (report.experiment + "_summary.json");
  std::ofstream out(json_path);
  if (!out) throw IoError("cannot open '" + json_path.string() + "' for writing");
  out << summary.dump(2) << "\n";
  if (!out) throw IoError("write failed on '" + json_path.string() + "'");
}

void write_mean_abs_csv(const std::vector<double>& mean_abs,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "channel,mean_abs\n";
  for (std::size_t i = 0; i < mean_abs.size(); ++i) {
    out << i << "," << format_double(mean_abs[i]) << "\n";
  }
  if (!out) throw IoError("write failed on '" + path.string() + "'");
}

std::vector<double> read_mean_abs_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != "channel,mean_abs") {
    throw IoError("bad header in '" + path.string() + "'");
  }
  std::vector<double> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t comma = line.find(',');
    if (comma == std::string::npos) throw IoError("bad row in '" + path.string() + "'");
    std::size_t index = 0;
    double value = 0.0;
    try {
      index = std::stoul(line.substr(0, comma));
      value = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw IoError("bad row in '" + path.string() + "'");
    }
    if (index != out.size() || !std::isfinite(value)) {
      throw IoError("bad row in '" + path.string() + "'");
    }
    out.push_back(value);
  }
  if (out.empty()) throw IoError("no channels in '" + path.string() + "'");
  return out;
}

}  // namespace corda
