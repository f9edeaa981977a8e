#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "synergy/learner.hpp"
#include "synergy/metrics.hpp"
#include "synergy/streams.hpp"

namespace synergy {

enum class Scenario { ClassIL, Rotated, Blurry360, Gcil };
enum class EvalCadence { PerTask, EndOnly };
enum class Precision { F32, F64 };

std::string scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& s);

struct ScenarioConfig {
  Scenario kind = Scenario::ClassIL;
  std::string dataset = "mnist";  // "mnist" or "synthetic"
  int32_t n_tasks = 5;
  double max_angle = 180.0;     // rotated
  int32_t rounds = 3;           // blurry360
  double sweep_degrees = 360.0; // blurry360
  // gcil
  int64_t gcil_samples_per_task = 1000;
  int32_t gcil_max_classes = 5;
  GcilWeighting gcil_weighting = GcilWeighting::Uniform;
  uint64_t gil_seed = 1993;
  // synthetic source data
  int32_t syn_classes = 10;
  int64_t syn_dim = 16;
  int64_t syn_train_per_class = 300;
  int64_t syn_test_per_class = 100;
  double syn_separation = 3.0;
  uint64_t syn_seed = 7;
};

struct RunConfig {
  MethodKind method = MethodKind::Synergy;
  ScenarioConfig scenario;
  SynergyConfig params;
  std::vector<uint64_t> seeds = {0};
  std::string data_dir = "data/mnist";
  std::string output_dir = "";  // empty: no files written
  Precision precision = Precision::F64;
  EvalCadence cadence = EvalCadence::PerTask;
  bool eval_working = false;
  bool verbose_log = false;
  bool save_checkpoints = false;
  int32_t jobs = 1;  // seeds run in this many worker threads
};

// Parses a config JSON object (all keys optional) plus CLI-style overrides,
// then fills anything still unset from the built-in per-(scenario, buffer)
// hyperparameter defaults table.
struct ConfigOverrides {
  std::optional<std::string> method, scenario, dataset, precision, cadence, data_dir, output_dir,
      gcil_weighting;
  std::optional<int64_t> buffer_size, n_tasks, batch_size, epochs, n_seeds, jobs;
  std::optional<std::vector<uint64_t>> seeds;
  std::optional<uint64_t> base_seed, gil_seed;
  std::optional<double> eta, lambda, beta, alpha_s, r_s, alpha_f, r_f;
  std::optional<bool> verbose_log, eval_working, save_checkpoints;
};

RunConfig resolve_config(const std::string& json_text, const ConfigOverrides& overrides = {});
RunConfig load_config_file(const std::string& path, const ConfigOverrides& overrides = {});
// Canonical serialization: every field explicit, stable key order.
std::string serialize_config(const RunConfig& cfg);

// The training/test split the configured scenario draws from (MNIST IDX
// files under data_dir, or the synthetic generator).
template <typename T>
struct SourceData {
  LabeledDataset<T> train;
  LabeledDataset<T> test;
};

template <typename T>
SourceData<T> load_source_data(const RunConfig& cfg);

template <typename T>
Stream<T> build_scenario_stream(const RunConfig& cfg, const SourceData<T>& src, uint64_t seed);

struct SeedResult {
  uint64_t seed = 0;
  TaskMatrix matrix;
  double avg_accuracy = 0.0;
  std::optional<double> working_avg_accuracy;
  std::optional<double> stability_value, plasticity_value, tradeoff_value;
  double ece = 0.0;
  std::vector<double> task_probs;                // class-IL only
  std::vector<std::vector<double>> drift_matrix; // per-task cadence only
};

struct ExperimentReport {
  RunConfig config;
  std::vector<SeedResult> seeds;
  // metric -> (mean, population std) over seeds
  std::map<std::string, std::pair<double, double>> aggregate;
};

// Runs every seed sequentially and, when output_dir is set, writes
// seed_<seed>/metrics.json, seed_<seed>/task_matrix.csv, aggregate.json and
// table.md (plus training.log.jsonl per seed when verbose logging is on).
ExperimentReport run_experiment(const RunConfig& cfg);

// Markdown comparison table: one row per report (method), mean +/- std of
// the average accuracy per scenario column; missing cells print an em dash.
std::string emit_table(const std::vector<ExperimentReport>& reports);

std::string aggregate_json(const ExperimentReport& report);

}  // namespace synergy
