#include "synergy/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "synergy/eval.hpp"
#include "synergy/streams.hpp"

namespace synergy {

namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
  throw ConfigError("config field '" + field + "': " + why);
}

void reject_unknown_keys(const ordered_json& obj, const std::string& where,
                         std::initializer_list<const char*> known) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok) throw ConfigError("config: unknown field '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

// Per-(scenario, buffer) training-scheme defaults. Missing config keys fall
// back to these; a buffer size without its own row uses the 500 row.
struct HyperRow {
  int64_t batch_size, epochs;
  double eta, lambda, beta, alpha_s, r_s, alpha_f, r_f;
};

HyperRow default_hypers(Scenario s, GcilWeighting w, int64_t buffer) {
  switch (s) {
    case Scenario::Rotated:
      if (buffer == 200) return {128, 1, 0.2, 1.0, 1.0, 0.99, 1.0, 0.99, 0.4};
      if (buffer == 1000) return {128, 1, 0.2, 1.0, 1.0, 0.99, 1.0, 0.99, 0.4};
      return {128, 1, 0.2, 1.0, 1.0, 0.99, 1.0, 0.99, 0.8};
    case Scenario::Blurry360:
      if (buffer == 200) return {16, 1, 0.2, 1.0, 1.0, 0.99, 0.8, 0.99, 0.9};
      if (buffer == 1000) return {16, 1, 0.2, 0.8, 1.0, 0.99, 0.8, 0.99, 0.8};
      return {16, 1, 0.2, 1.0, 1.0, 0.99, 0.8, 0.99, 0.8};
    case Scenario::Gcil:
      if (w == GcilWeighting::Uniform) {
        if (buffer == 1000) return {32, 50, 0.05, 0.2, 1.0, 0.999, 0.4, 0.999, 0.005};
        return {32, 50, 0.05, 0.2, 1.0, 0.999, 0.3, 0.999, 0.005};
      }
      if (buffer == 1000) return {32, 50, 0.05, 0.2, 1.0, 0.999, 0.4, 0.999, 0.005};
      return {32, 50, 0.05, 0.2, 1.0, 0.999, 0.2, 0.999, 0.005};
    case Scenario::ClassIL:
    default:
      return {32, 1, 0.1, 1.0, 1.0, 0.99, 1.0, 0.99, 0.2};
  }
}

int32_t default_n_tasks(Scenario s) {
  switch (s) {
    case Scenario::Rotated: return 20;
    case Scenario::Gcil: return 20;
    case Scenario::ClassIL:
    case Scenario::Blurry360:
    default: return 5;
  }
}

template <typename V>
V take(ordered_json& obj, const char* key, V fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<V>();
  } catch (const std::exception&) {
    bad_field(key, "cannot parse value " + obj.at(key).dump());
  }
}

GcilWeighting weighting_from_name(const std::string& s) {
  if (s == "uniform") return GcilWeighting::Uniform;
  if (s == "longtail") return GcilWeighting::Longtail;
  bad_field("gcil_weighting", "expected 'uniform' or 'longtail', got '" + s + "'");
}

std::string weighting_name(GcilWeighting w) {
  return w == GcilWeighting::Uniform ? "uniform" : "longtail";
}

}  // namespace

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::ClassIL: return "class_il";
    case Scenario::Rotated: return "rotated";
    case Scenario::Blurry360: return "blurry360";
    case Scenario::Gcil: return "gcil";
  }
  return "unknown";
}

Scenario scenario_from_name(const std::string& s) {
  if (s == "class_il") return Scenario::ClassIL;
  if (s == "rotated" || s == "rmnist") return Scenario::Rotated;
  if (s == "blurry360" || s == "mnist360") return Scenario::Blurry360;
  if (s == "gcil") return Scenario::Gcil;
  bad_field("scenario", "unknown scenario '" + s + "'");
}

RunConfig resolve_config(const std::string& json_text, const ConfigOverrides& ov) {
  ordered_json j;
  try {
    j = json_text.empty() ? ordered_json::object() : ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: invalid json: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be a json object");

  // Command-line overrides are written into the object first so that the
  // default-filling below sees one merged view.
  auto put = [&j](const char* key, const auto& maybe) {
    if (maybe) j[key] = *maybe;
  };
  put("method", ov.method);
  put("scenario", ov.scenario);
  put("dataset", ov.dataset);
  put("buffer", ov.buffer_size);
  put("precision", ov.precision);
  put("eval_cadence", ov.cadence);
  put("data_dir", ov.data_dir);
  put("output_dir", ov.output_dir);
  put("seeds", ov.seeds);
  put("n_seeds", ov.n_seeds);
  put("base_seed", ov.base_seed);
  put("verbose_log", ov.verbose_log);
  put("eval_working", ov.eval_working);
  put("save_checkpoints", ov.save_checkpoints);
  put("jobs", ov.jobs);
  if (!j.contains("params") || j["params"].is_null()) j["params"] = ordered_json::object();
  if (!j.contains("scenario_params") || j["scenario_params"].is_null())
    j["scenario_params"] = ordered_json::object();
  ordered_json& p = j["params"];
  ordered_json& sp = j["scenario_params"];
  auto put_p = [&p](const char* key, const auto& maybe) {
    if (maybe) p[key] = *maybe;
  };
  put_p("eta", ov.eta);
  put_p("lambda", ov.lambda);
  put_p("beta", ov.beta);
  put_p("alpha_s", ov.alpha_s);
  put_p("r_s", ov.r_s);
  put_p("alpha_f", ov.alpha_f);
  put_p("r_f", ov.r_f);
  put_p("batch_size", ov.batch_size);
  put_p("epochs", ov.epochs);
  if (ov.n_tasks) sp["n_tasks"] = *ov.n_tasks;
  if (ov.gil_seed) sp["gil_seed"] = *ov.gil_seed;
  if (ov.gcil_weighting) sp["gcil_weighting"] = *ov.gcil_weighting;

  reject_unknown_keys(j, "",
                      {"method", "scenario", "dataset", "buffer", "params", "scenario_params",
                       "seeds", "n_seeds", "base_seed", "data_dir", "output_dir", "precision",
                       "eval_cadence", "eval_working", "verbose_log", "save_checkpoints", "jobs"});
  reject_unknown_keys(p, "params",
                      {"eta", "lambda", "beta", "alpha_s", "r_s", "alpha_f", "r_f", "batch_size",
                       "epochs", "fisher_batch", "derpp_alpha", "derpp_beta", "strict_fisher_ema"});
  reject_unknown_keys(sp, "scenario_params",
                      {"n_tasks", "max_angle", "rounds", "sweep_degrees", "gcil_samples_per_task",
                       "gcil_max_classes", "gcil_weighting", "gil_seed", "syn_classes", "syn_dim",
                       "syn_train_per_class", "syn_test_per_class", "syn_separation", "syn_seed"});

  RunConfig cfg;
  cfg.method = method_from_name(take<std::string>(j, "method", "synergy"));
  cfg.scenario.kind = scenario_from_name(take<std::string>(j, "scenario", "rotated"));
  cfg.scenario.dataset = take<std::string>(j, "dataset", "mnist");
  if (cfg.scenario.dataset != "mnist" && cfg.scenario.dataset != "synthetic")
    bad_field("dataset", "expected 'mnist' or 'synthetic', got '" + cfg.scenario.dataset + "'");

  const int64_t buffer = take<int64_t>(j, "buffer", 500);
  if (buffer < 0) bad_field("buffer", "must be >= 0");
  cfg.scenario.gcil_weighting =
      weighting_from_name(take<std::string>(sp, "gcil_weighting", "uniform"));

  const HyperRow d = default_hypers(cfg.scenario.kind, cfg.scenario.gcil_weighting, buffer);
  SynergyConfig& prm = cfg.params;
  prm.buffer_size = static_cast<size_t>(buffer);
  prm.eta = take<double>(p, "eta", d.eta);
  prm.lambda = take<double>(p, "lambda", d.lambda);
  prm.beta = take<double>(p, "beta", d.beta);
  prm.alpha_s = take<double>(p, "alpha_s", d.alpha_s);
  prm.r_s = take<double>(p, "r_s", d.r_s);
  prm.alpha_f = take<double>(p, "alpha_f", d.alpha_f);
  prm.r_f = take<double>(p, "r_f", d.r_f);
  prm.batch_size = take<int64_t>(p, "batch_size", d.batch_size);
  prm.epochs = take<int64_t>(p, "epochs", d.epochs);
  prm.fisher_batch = take<int64_t>(p, "fisher_batch", int64_t(0));
  prm.derpp_alpha = take<double>(p, "derpp_alpha", 0.5);
  prm.derpp_beta = take<double>(p, "derpp_beta", 1.0);
  prm.strict_fisher_ema = take<bool>(p, "strict_fisher_ema", false);
  try {
    prm.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config field 'params': ") + e.what());
  }

  ScenarioConfig& sc = cfg.scenario;
  sc.n_tasks = static_cast<int32_t>(take<int64_t>(sp, "n_tasks", default_n_tasks(sc.kind)));
  sc.max_angle = take<double>(sp, "max_angle", 180.0);
  sc.rounds = static_cast<int32_t>(take<int64_t>(sp, "rounds", int64_t(3)));
  sc.sweep_degrees = take<double>(sp, "sweep_degrees", 360.0);
  sc.gcil_samples_per_task = take<int64_t>(sp, "gcil_samples_per_task", int64_t(1000));
  sc.gcil_max_classes = static_cast<int32_t>(take<int64_t>(sp, "gcil_max_classes", int64_t(5)));
  sc.gil_seed = take<uint64_t>(sp, "gil_seed", uint64_t(1993));
  sc.syn_classes = static_cast<int32_t>(take<int64_t>(sp, "syn_classes", int64_t(10)));
  sc.syn_dim = take<int64_t>(sp, "syn_dim", int64_t(16));
  sc.syn_train_per_class = take<int64_t>(sp, "syn_train_per_class", int64_t(300));
  sc.syn_test_per_class = take<int64_t>(sp, "syn_test_per_class", int64_t(100));
  sc.syn_separation = take<double>(sp, "syn_separation", 3.0);
  sc.syn_seed = take<uint64_t>(sp, "syn_seed", uint64_t(7));
  if (sc.n_tasks <= 0) bad_field("n_tasks", "must be positive");
  if (sc.rounds <= 0) bad_field("rounds", "must be positive");

  if (j.contains("seeds")) {
    cfg.seeds = take<std::vector<uint64_t>>(j, "seeds", {});
    if (cfg.seeds.empty()) bad_field("seeds", "list must not be empty");
  } else {
    const int64_t n_seeds = take<int64_t>(j, "n_seeds", int64_t(1));
    if (n_seeds < 1) bad_field("n_seeds", "must be >= 1");
    const uint64_t base = take<uint64_t>(j, "base_seed", uint64_t(0));
    cfg.seeds.clear();
    for (int64_t k = 0; k < n_seeds; ++k) cfg.seeds.push_back(base + static_cast<uint64_t>(k));
  }

  cfg.data_dir = take<std::string>(j, "data_dir", "data/mnist");
  cfg.output_dir = take<std::string>(j, "output_dir", "");
  const std::string prec = take<std::string>(j, "precision", "f64");
  if (prec == "f32") cfg.precision = Precision::F32;
  else if (prec == "f64") cfg.precision = Precision::F64;
  else bad_field("precision", "expected 'f32' or 'f64', got '" + prec + "'");
  const std::string cad = take<std::string>(j, "eval_cadence", "per_task");
  if (cad == "per_task") cfg.cadence = EvalCadence::PerTask;
  else if (cad == "end_only") cfg.cadence = EvalCadence::EndOnly;
  else bad_field("eval_cadence", "expected 'per_task' or 'end_only', got '" + cad + "'");
  cfg.eval_working = take<bool>(j, "eval_working", false);
  cfg.verbose_log = take<bool>(j, "verbose_log", false);
  cfg.save_checkpoints = take<bool>(j, "save_checkpoints", false);
  cfg.jobs = static_cast<int32_t>(take<int64_t>(j, "jobs", int64_t(1)));
  if (cfg.jobs < 1) bad_field("jobs", "must be >= 1");

  if (cfg.method == MethodKind::MeanErOewc &&
      (sc.kind == Scenario::Blurry360 || sc.kind == Scenario::Gcil))
    throw ConfigError("config field 'method': mean_er_oewc needs task boundaries, which scenario '" +
                      scenario_name(sc.kind) + "' does not expose");
  if (cfg.method != MethodKind::Sgd && cfg.params.buffer_size == 0)
    bad_field("buffer", "replay methods need a non-empty buffer");
  return cfg;
}

RunConfig load_config_file(const std::string& path, const ConfigOverrides& ov) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return resolve_config(ss.str(), ov);
}

std::string serialize_config(const RunConfig& cfg) {
  ordered_json j;
  j["method"] = method_name(cfg.method);
  j["scenario"] = scenario_name(cfg.scenario.kind);
  j["dataset"] = cfg.scenario.dataset;
  j["buffer"] = cfg.params.buffer_size;
  ordered_json p;
  p["eta"] = cfg.params.eta;
  p["lambda"] = cfg.params.lambda;
  p["beta"] = cfg.params.beta;
  p["alpha_s"] = cfg.params.alpha_s;
  p["r_s"] = cfg.params.r_s;
  p["alpha_f"] = cfg.params.alpha_f;
  p["r_f"] = cfg.params.r_f;
  p["batch_size"] = cfg.params.batch_size;
  p["epochs"] = cfg.params.epochs;
  p["fisher_batch"] = cfg.params.fisher_batch;
  p["derpp_alpha"] = cfg.params.derpp_alpha;
  p["derpp_beta"] = cfg.params.derpp_beta;
  p["strict_fisher_ema"] = cfg.params.strict_fisher_ema;
  j["params"] = std::move(p);
  ordered_json sp;
  sp["n_tasks"] = cfg.scenario.n_tasks;
  sp["max_angle"] = cfg.scenario.max_angle;
  sp["rounds"] = cfg.scenario.rounds;
  sp["sweep_degrees"] = cfg.scenario.sweep_degrees;
  sp["gcil_samples_per_task"] = cfg.scenario.gcil_samples_per_task;
  sp["gcil_max_classes"] = cfg.scenario.gcil_max_classes;
  sp["gcil_weighting"] = weighting_name(cfg.scenario.gcil_weighting);
  sp["gil_seed"] = cfg.scenario.gil_seed;
  sp["syn_classes"] = cfg.scenario.syn_classes;
  sp["syn_dim"] = cfg.scenario.syn_dim;
  sp["syn_train_per_class"] = cfg.scenario.syn_train_per_class;
  sp["syn_test_per_class"] = cfg.scenario.syn_test_per_class;
  sp["syn_separation"] = cfg.scenario.syn_separation;
  sp["syn_seed"] = cfg.scenario.syn_seed;
  j["scenario_params"] = std::move(sp);
  j["seeds"] = cfg.seeds;
  j["data_dir"] = cfg.data_dir;
  j["output_dir"] = cfg.output_dir;
  j["precision"] = cfg.precision == Precision::F32 ? "f32" : "f64";
  j["eval_cadence"] = cfg.cadence == EvalCadence::PerTask ? "per_task" : "end_only";
  j["eval_working"] = cfg.eval_working;
  j["verbose_log"] = cfg.verbose_log;
  j["save_checkpoints"] = cfg.save_checkpoints;
  j["jobs"] = cfg.jobs;
  return j.dump(2) + "\n";
}

template <typename T>
SourceData<T> load_source_data(const RunConfig& cfg) {
  SourceData<T> src;
  if (cfg.scenario.dataset == "mnist") {
    const fs::path dir(cfg.data_dir);
    src.train = load_idx<T>((dir / "train-images-idx3-ubyte").string(),
                            (dir / "train-labels-idx1-ubyte").string());
    src.test = load_idx<T>((dir / "t10k-images-idx3-ubyte").string(),
                           (dir / "t10k-labels-idx1-ubyte").string());
    // Shared class count: the test split alone fixes neither.
    src.train.class_count = src.test.class_count =
        std::max(src.train.class_count, src.test.class_count);
  } else {
    const auto& sc = cfg.scenario;
    src.train = synthetic_gaussians<T>(sc.syn_classes, sc.syn_dim, sc.syn_train_per_class,
                                       sc.syn_separation, sc.syn_seed);
    src.test = synthetic_gaussians<T>(sc.syn_classes, sc.syn_dim, sc.syn_test_per_class,
                                      sc.syn_separation,
                                      derive_seed(sc.syn_seed, RngStream::DataGen));
  }
  return src;
}

template <typename T>
Stream<T> build_scenario_stream(const RunConfig& cfg, const SourceData<T>& src, uint64_t seed) {
  const ScenarioConfig& sc = cfg.scenario;
  const SynergyConfig& p = cfg.params;
  switch (sc.kind) {
    case Scenario::ClassIL:
      return make_class_il_stream(src.train, src.test, sc.n_tasks, p.batch_size, p.epochs, seed);
    case Scenario::Rotated:
      return make_rotated_stream(src.train, src.test, sc.n_tasks, p.batch_size, p.epochs, seed,
                                 sc.max_angle);
    case Scenario::Blurry360:
      return make_blurry360_stream(src.train, src.test, sc.rounds, p.batch_size, seed,
                                   sc.sweep_degrees);
    case Scenario::Gcil:
      return make_gcil_stream(src.train, src.test, sc.n_tasks, sc.gcil_samples_per_task,
                              sc.gcil_max_classes, sc.gcil_weighting, sc.gil_seed, p.batch_size,
                              p.epochs, seed);
  }
  throw ConfigError("config field 'scenario': unhandled scenario");
}

template SourceData<float> load_source_data<float>(const RunConfig&);
template SourceData<double> load_source_data<double>(const RunConfig&);
template Stream<float> build_scenario_stream<float>(const RunConfig&, const SourceData<float>&,
                                                    uint64_t);
template Stream<double> build_scenario_stream<double>(const RunConfig&, const SourceData<double>&,
                                                      uint64_t);

namespace {

void log_step(std::ostream& out, const StepReport& rep) {
  ordered_json line;
  line["step"] = rep.step;
  line["loss_total"] = rep.loss_total;
  line["loss_stream_ce"] = rep.loss_stream_ce;
  line["loss_replay_ce"] = rep.loss_replay_ce;
  line["loss_semantic_mse"] = rep.loss_semantic_mse;
  line["loss_consolidation"] = rep.loss_consolidation;
  line["loss_logit_mse"] = rep.loss_logit_mse;
  line["replay_used"] = rep.replay_used;
  line["semantic_updated"] = rep.semantic_updated;
  line["fisher_updated"] = rep.fisher_updated;
  out << line.dump() << '\n';
}

template <typename T>
SeedResult run_seed(const RunConfig& cfg, const SourceData<T>& src, uint64_t seed) {
  Stream<T> stream = build_scenario_stream(cfg, src, seed);
  Rng init_rng(derive_seed(seed, RngStream::ModelInit));
  Network<T> net =
      build_mlp<T>(shape_numel(stream.item_shape()), stream.class_count(), init_rng);
  Learner<T> learner(cfg.method, cfg.params, std::move(net), stream.item_shape(),
                     stream.class_count(), seed);

  const bool per_task = cfg.cadence == EvalCadence::PerTask && stream.has_boundaries();
  const auto& evals = stream.eval_tasks();
  const int32_t n_eval = static_cast<int32_t>(evals.size());

  SeedResult res;
  res.seed = seed;
  res.matrix = TaskMatrix(n_eval);

  std::ofstream log;
  fs::path seed_dir;
  if (!cfg.output_dir.empty()) {
    seed_dir = fs::path(cfg.output_dir) / ("seed_" + std::to_string(seed));
    fs::create_directories(seed_dir);
    if (cfg.verbose_log) {
      log.open(seed_dir / "training.log.jsonl");
      if (!log) throw FormatError((seed_dir / "training.log.jsonl").string() + ": cannot open");
    }
  }

  std::vector<Network<T>> snapshots;
  while (auto batch = stream.next()) {
    const StepReport rep = learner.step(batch->inputs, batch->labels);
    if (log.is_open()) log_step(log, rep);
    const int32_t done = stream.boundary_crossed();
    if (done < 0 || !stream.has_boundaries()) continue;
    if (cfg.method == MethodKind::MeanErOewc) {
      LabeledDataset<T> task_data = stream.materialize_task_train(done);
      std::vector<uint32_t> idx(task_data.size());
      std::iota(idx.begin(), idx.end(), 0u);
      learner.on_task_boundary(task_data, idx);
    }
    if (per_task) {
      for (int32_t j = 0; j <= done; ++j)
        res.matrix.at(done, j) =
            evaluate_accuracy(learner.inference_model(), evals[static_cast<size_t>(j)].materialize());
      snapshots.push_back(learner.inference_model().clone());
    }
  }

  if (!per_task) {
    for (int32_t j = 0; j < n_eval; ++j)
      res.matrix.at(n_eval - 1, j) =
          evaluate_accuracy(learner.inference_model(), evals[static_cast<size_t>(j)].materialize());
  }
  res.avg_accuracy = average_accuracy(res.matrix);

  if (cfg.eval_working && learner.has_semantic()) {
    double acc = 0.0;
    for (int32_t j = 0; j < n_eval; ++j)
      acc += evaluate_accuracy(learner.inference_model(false),
                               evals[static_cast<size_t>(j)].materialize());
    res.working_avg_accuracy = acc / static_cast<double>(n_eval);
  }

  if (per_task && n_eval >= 2) {
    res.stability_value = stability(res.matrix);
    res.plasticity_value = plasticity(res.matrix);
    res.tradeoff_value = tradeoff(*res.stability_value, *res.plasticity_value);
  }

  {
    std::vector<double> probs;
    std::vector<int32_t> labels;
    for (int32_t j = 0; j < n_eval; ++j) {
      LabeledDataset<T> ds = evals[static_cast<size_t>(j)].materialize();
      std::vector<double> pj = predict_probabilities(learner.inference_model(), ds);
      probs.insert(probs.end(), pj.begin(), pj.end());
      labels.insert(labels.end(), ds.labels.begin(), ds.labels.end());
    }
    res.ece = expected_calibration_error(probs, stream.class_count(), labels).ece;
    if (!stream.task_of_class().empty())
      res.task_probs = task_probabilities(probs, stream.class_count(), stream.task_of_class());
  }

  if (per_task && !snapshots.empty()) {
    const size_t k = snapshots.size();
    res.drift_matrix.assign(k, std::vector<double>(k, 1.0));
    for (size_t i = 0; i < k; ++i)
      for (size_t j = i + 1; j < k; ++j) {
        const double d = layer_drift(snapshots[i], snapshots[j]);
        res.drift_matrix[i][j] = d;
        res.drift_matrix[j][i] = d;
      }
  }

  if (!cfg.output_dir.empty()) {
    write_task_matrix_csv(res.matrix, (seed_dir / "task_matrix.csv").string());
    if (cfg.save_checkpoints) {
      const auto* fstate = learner.fisher_state();
      const std::vector<T>* fisher =
          fstate && fstate->initialized ? &fstate->f_star : nullptr;
      save_checkpoint(learner.inference_model(), (seed_dir / "checkpoint.bin").string(), fisher);
    }
  }
  return res;
}

ordered_json seed_metrics_json(const RunConfig& cfg, const SeedResult& r) {
  ordered_json j;
  j["seed"] = r.seed;
  j["method"] = method_name(cfg.method);
  j["scenario"] = scenario_name(cfg.scenario.kind);
  j["avg_accuracy"] = r.avg_accuracy;
  if (r.working_avg_accuracy) j["working_avg_accuracy"] = *r.working_avg_accuracy;
  if (r.stability_value) {
    j["stability"] = *r.stability_value;
    j["plasticity"] = *r.plasticity_value;
    j["tradeoff"] = *r.tradeoff_value;
  }
  j["ece"] = r.ece;
  if (!r.task_probs.empty()) j["task_probs"] = r.task_probs;
  if (!r.drift_matrix.empty()) j["drift_matrix"] = r.drift_matrix;
  ordered_json rows = ordered_json::array();
  for (int32_t i = 0; i < r.matrix.n; ++i) {
    ordered_json row = ordered_json::array();
    for (int32_t j2 = 0; j2 < r.matrix.n; ++j2) {
      if (r.matrix.populated(i, j2)) row.push_back(r.matrix.at(i, j2));
      else row.push_back(nullptr);
    }
    rows.push_back(std::move(row));
  }
  j["task_matrix"] = std::move(rows);
  return j;
}

void aggregate_metric(ExperimentReport& rep, const std::string& name,
                      const std::vector<double>& values) {
  if (values.size() != rep.seeds.size()) return;  // only metrics present for every seed
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());  // population std
  rep.aggregate[name] = {mean, std::sqrt(var)};
}

template <typename T>
ExperimentReport run_all(const RunConfig& cfg) {
  const SourceData<T> src = load_source_data<T>(cfg);
  ExperimentReport report;
  report.config = cfg;
  report.seeds.resize(cfg.seeds.size());

  const size_t jobs = std::min<size_t>(static_cast<size_t>(cfg.jobs), cfg.seeds.size());
  if (jobs <= 1) {
    for (size_t i = 0; i < cfg.seeds.size(); ++i)
      report.seeds[i] = run_seed(cfg, src, cfg.seeds[i]);
  } else {
    std::atomic<size_t> cursor{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
      while (true) {
        const size_t i = cursor.fetch_add(1);
        if (i >= cfg.seeds.size()) return;
        try {
          report.seeds[i] = run_seed(cfg, src, cfg.seeds[i]);
        } catch (...) {
          std::lock_guard lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (size_t t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  auto collect = [&report](auto getter) {
    std::vector<double> out;
    for (const SeedResult& r : report.seeds) {
      auto v = getter(r);
      if (v) out.push_back(*v);
    }
    return out;
  };
  aggregate_metric(report, "avg_accuracy", collect([](const SeedResult& r) {
                     return std::optional<double>(r.avg_accuracy);
                   }));
  aggregate_metric(report, "working_avg_accuracy",
                   collect([](const SeedResult& r) { return r.working_avg_accuracy; }));
  aggregate_metric(report, "stability",
                   collect([](const SeedResult& r) { return r.stability_value; }));
  aggregate_metric(report, "plasticity",
                   collect([](const SeedResult& r) { return r.plasticity_value; }));
  aggregate_metric(report, "tradeoff",
                   collect([](const SeedResult& r) { return r.tradeoff_value; }));
  aggregate_metric(report, "ece", collect([](const SeedResult& r) {
                     return std::optional<double>(r.ece);
                   }));

  if (!cfg.output_dir.empty()) {
    fs::create_directories(cfg.output_dir);
    for (const SeedResult& r : report.seeds) {
      const fs::path dir = fs::path(cfg.output_dir) / ("seed_" + std::to_string(r.seed));
      fs::create_directories(dir);
      std::ofstream out(dir / "metrics.json");
      out << seed_metrics_json(cfg, r).dump(2) << '\n';
      if (!out) throw FormatError((dir / "metrics.json").string() + ": write failed");
    }
    std::ofstream agg(fs::path(cfg.output_dir) / "aggregate.json");
    agg << aggregate_json(report);
    if (!agg) throw FormatError(cfg.output_dir + "/aggregate.json: write failed");
    std::ofstream table(fs::path(cfg.output_dir) / "table.md");
    table << emit_table({report});
  }
  return report;
}

}  // namespace

ExperimentReport run_experiment(const RunConfig& cfg) {
  cfg.params.validate();
  if (cfg.seeds.empty()) throw ConfigError("config field 'seeds': at least one seed required");
  return cfg.precision == Precision::F32 ? run_all<float>(cfg) : run_all<double>(cfg);
}

std::string aggregate_json(const ExperimentReport& report) {
  ordered_json j;
  j["config"] = ordered_json::parse(serialize_config(report.config));
  ordered_json seeds = ordered_json::array();
  for (const SeedResult& r : report.seeds) seeds.push_back(seed_metrics_json(report.config, r));
  j["seeds"] = std::move(seeds);
  ordered_json agg;
  for (const auto& [name, ms] : report.aggregate) {
    ordered_json entry;
    entry["mean"] = ms.first;
    entry["std"] = ms.second;
    agg[name] = std::move(entry);
  }
  j["aggregate"] = std::move(agg);
  return j.dump(2) + "\n";
}

std::string emit_table(const std::vector<ExperimentReport>& reports) {
  if (reports.empty()) throw ConfigError("emit_table: no reports");
  std::vector<std::string> methods, scenarios;
  std::map<std::string, std::map<std::string, std::pair<double, double>>> cells;
  for (const ExperimentReport& r : reports) {
    const std::string m = method_name(r.config.method);
    const std::string s = scenario_name(r.config.scenario.kind);
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
    if (std::find(scenarios.begin(), scenarios.end(), s) == scenarios.end())
      scenarios.push_back(s);
    auto it = r.aggregate.find("avg_accuracy");
    if (it != r.aggregate.end()) cells[m][s] = it->second;
  }
  std::ostringstream out;
  out << "| Method |";
  for (const auto& s : scenarios) out << ' ' << s << " |";
  out << "\n|---|";
  for (size_t i = 0; i < scenarios.size(); ++i) out << "---|";
  out << '\n';
  char buf[64];
  for (const auto& m : methods) {
    out << "| " << m << " |";
    const auto mit = cells.find(m);
    for (const auto& s : scenarios) {
      const std::pair<double, double>* cell = nullptr;
      if (mit != cells.end()) {
        const auto sit = mit->second.find(s);
        if (sit != mit->second.end()) cell = &sit->second;
      }
      if (!cell) {
        out << " — |";
      } else {
        std::snprintf(buf, sizeof(buf), " %.2f ±%.2f |", cell->first, cell->second);
        out << buf;
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace synergy
