// Copyright 2026 The corda authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "corda/covariance.hpp"
#include "corda/decompose.hpp"
#include "corda/nnet.hpp"

namespace corda {

inline constexpr const char* kToolVersion = "corda 1.0.0";

// Discard-count grid used by the large-model study this harness mirrors.
// Desk-scale runs express the sweep as fractions of each layer rank instead.
inline constexpr int kReferenceDiscardCounts[] = {0, 16, 32, 64, 128, 256, 512, 1024};

// One experiment run, fully specified. Everything a driver does is a pure
// function of this struct plus the seed list, which is what makes reruns
// reproduce bit for bit.
struct ExperimentConfig {
  std::string experiment = "kpa";  // truncation | kpa | ipa | ablation | heatmap
  std::string out_dir;             // empty: resolved from flag or environment
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  int rank = 8;
  std::vector<int> adapter_layers;  // empty selects every linear layer
  int calibration_samples = 256;
  int small_calibration_samples = 32;
  NetworkSpec network;
  TaskSpec task_knowledge;
  TaskSpec task_finetune;
  TaskSpec task_mismatched;
  TrainConfig pretrain;
  TrainConfig finetune;
  DampingConfig damping;
  std::vector<double> discard_fractions;
  int eval_samples = 2048;
  double pretrain_gate = 0.05;  // max acceptable final pretraining batch loss
  int heatmap_bins = 32;
};

// Desk defaults: a 32-64-64-16 tanh student, a shifted-input knowledge task,
// and a centered fine-tuning task with a different teacher.
ExperimentConfig default_config();

nlohmann::json config_to_json(const ExperimentConfig& cfg);
// Starts from default_config() and overlays the fields present in j, so
// partial configs are valid.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
void validate_config(const ExperimentConfig& cfg);

// Priority: explicit flag, then config, then CORDA_OUT_DIR, then ./corda-out.
std::filesystem::path resolve_out_dir(const ExperimentConfig& cfg,
                                      const std::string& flag_value);

struct MetricRow {
  std::uint64_t seed = 0;
  std::string method;
  std::string key;
  double value = 0.0;
};

struct Report {
  std::string experiment;
  std::string tool_version = kToolVersion;
  nlohmann::json config_echo;
  std::vector<MetricRow> rows;
};

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

// Exact arithmetic median: middle element, or mean of the two middles.
double median(std::vector<double> values);

std::vector<double> collect_values(const Report& report, const std::string& method,
                                   const std::string& key);
double report_median(const Report& report, const std::string& method, const std::string& key);

// ---- shared driver building blocks ----------------------------------------

// Which dataset supplies the covariance weighting for an adapter build.
enum class ContextSource { none, knowledge, finetune, mismatched };

const char* to_string(ContextSource c);

// Which end of the sigma spectrum the adapter takes.
enum class SliceEnd { largest, smallest };

const char* to_string(SliceEnd s);

// Deterministic pretraining of the student on the knowledge task. The weight
// init and the data stream both derive from `seed`, so every driver sees the
// identical pretrained net for a given (config, seed) pair.
Network pretrain_student(const ExperimentConfig& cfg, std::uint64_t seed, const Task& task_k,
                         double* final_loss = nullptr);

// Layer indices that receive adapters (or truncation), after applying
// cfg.adapter_layers.
std::vector<int> selected_layers(const ExperimentConfig& cfg, const Network& net);

// Decompose the selected layers of a pretrained net and attach rank-r
// adapters. ctx == none uses the plain SVD (largest slice of it is the
// principal-components baseline); other sources use the covariance-weighted
// factorization built from `stats`.
Network build_adapter_net(const ExperimentConfig& cfg, const Network& pretrained,
                          ContextSource ctx, SliceEnd slice,
                          const std::map<std::string, LayerActivationStats>* stats);

// Classic baseline attachment: b = 0, Kaiming-uniform a, frozen weight.
Network build_lora_net(const ExperimentConfig& cfg, const Network& pretrained,
                       std::uint64_t seed);

struct FinetuneOutcome {
  std::vector<double> curve;  // per-step training batch loss
  double df_loss = 0.0;       // fresh-batch loss on the fine-tuning task
  double dk_loss = 0.0;       // fresh-batch loss on the knowledge task
};

// Fine-tune on task_f and measure both final fit and knowledge retention.
// The data stream and both eval batches derive from `seed` only, so every
// method at the same seed sees identical data.
FinetuneOutcome finetune_eval(const ExperimentConfig& cfg, Network& net, const Task& task_f,
                              const Task& task_k, std::uint64_t seed);

// ---- drivers ---------------------------------------------------------------

// Low-rank truncation sweep on the knowledge task: plain vs activation-scaled
// vs covariance-weighted ranking, plus a small-calibration and a mismatched-
// context variant of the covariance weighting.
Report run_truncation(const ExperimentConfig& cfg);

// Knowledge-preserving fine-tuning against the classic, principal-components,
// and full fine-tuning baselines.
Report run_kpa(const ExperimentConfig& cfg);

// Instruction-previewing fine-tuning (adapter seeded with the fine-tuning
// task's own principal context components) with per-step loss curves.
Report run_ipa(const ExperimentConfig& cfg);

// Full grid over context source x spectrum end. The (none, largest) cell is
// computed by the same code path as the principal-components baseline and
// must match it bit for bit at equal seed.
Report run_ablation_grid(const ExperimentConfig& cfg);

// Dispatch on cfg.experiment; "heatmap" additionally writes per-layer CSV
// grids under out_dir.
Report run_experiment(const ExperimentConfig& cfg);

// ---- heatmaps and report files ---------------------------------------------

// bins x bins block means of |c|. Block b covers rows [b*d/bins, (b+1)*d/bins).
Matrix heatmap_from_stat(const CovarianceStat& stat, int bins);

// Triplet CSV "row,col,mean_abs" with a header line.
void write_heatmap_csv(const Matrix& grid, const std::filesystem::path& path);

// Writes <experiment>_metrics.csv (one row per metric, full precision) and
// <experiment>_summary.json (tool version, config echo, per-method medians;
// per-step curve keys are left to the CSV).
void write_report(const Report& report, const std::filesystem::path& out_dir);

// Per-channel mean absolute activation, as a two-column CSV with header.
void write_mean_abs_csv(const std::vector<double>& mean_abs,
                        const std::filesystem::path& path);
std::vector<double> read_mean_abs_csv(const std::filesystem::path& path);

}  // namespace corda
