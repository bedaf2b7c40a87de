#pragma once

// Run configuration, dataset planning and the batch commands
// simulate -> process -> slice -> train -> eval -> fewshot -> report.

#include "microsig/dsp.hpp"
#include "microsig/eval.hpp"
#include "microsig/metric.hpp"
#include "microsig/sim.hpp"
#include "microsig/slicing.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace microsig::pipeline {

/// Bad configuration or arguments (exit code 2).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Another command holds the run directory (exit code 2).
class LockBusy : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Subject {
  std::string id;
  double scale = 1.0;
  bool operator==(const Subject&) const = default;
};

struct SplitPlan {
  std::string name;
  std::vector<double> aspect_angles_deg;
  int records = 1;  // per (activity, subject, angle)
  bool operator==(const SplitPlan&) const = default;
};

struct DatasetPlan {
  std::vector<std::string> activities;  // activity model names
  std::vector<Subject> subjects{{"s1", 1.0}, {"s2", 1.1}};
  std::vector<SplitPlan> splits{{"train", {0.0, -30.0, 30.0, -50.0}, 1}, {"test", {50.0, 0.0}, 1}};
  double duration_s = 30.0;
  double range_jitter_m = 0.2;  // base range drawn uniformly within +-jitter per record
  std::string activity_file;    // empty: built-in tables
  bool operator==(const DatasetPlan&) const = default;
};

struct SlicingPlan {
  std::vector<slicing::Technique> techniques{slicing::Technique::fixed, slicing::Technique::sliding,
                                             slicing::Technique::adaptive};
  slicing::SlicingConfig config;
  bool png = false;
  bool operator==(const SlicingPlan&) const = default;
};

struct TrainingPlan {
  metric::Hyperparams hp;
  std::vector<metric::Constellation> constellations{metric::Constellation::combined};
  nn::Architecture architecture;
  bool operator==(const TrainingPlan&) const = default;
};

struct FewShotPlan {
  std::vector<std::string> new_classes;  // slice labels held out of base training
  int samples_per_class = 15;
  metric::FewShotConfig config;
  slicing::Technique technique = slicing::Technique::adaptive;
  metric::Constellation constellation = metric::Constellation::combined;
  bool operator==(const FewShotPlan&) const = default;
};

struct RunConfig {
  int schema_version = 1;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "run";
  RadarConfig radar;
  DatasetPlan dataset;
  dsp::SignatureConfig signature;
  SlicingPlan slicing;
  TrainingPlan training;
  FewShotPlan fewshot;

  /// Throws ValidationError.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

nlohmann::json to_json(const RunConfig& c);
/// Missing seed or schema_version is a ValidationError.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);

/// Activity models keyed by name, with the shared body attached.
std::map<std::string, sim::ActivityModel> parse_activity_tables(const nlohmann::json& j);
std::map<std::string, sim::ActivityModel> builtin_activity_tables();
std::map<std::string, sim::ActivityModel> activity_tables(const RunConfig& c);

struct RecordPlan {
  sim::ActivityModel model;
  sim::RecordMetadata metadata;
  std::uint64_t noise_seed = 0;
};

/// One entry per (activity, subject, split, angle, record) in that order.
std::vector<RecordPlan> plan_records(const RunConfig& c);

/// Deterministic per-record seed from the run seed and a record id.
std::uint64_t derive_seed(std::uint64_t run_seed, const std::string& key);

sim::IqCube simulate_record(const RecordPlan& plan, const RadarConfig& radar);
slicing::LabeledPair process_record(const sim::IqCube& cube, const dsp::SignatureConfig& cfg);

/// MICROSIG_THREADS when set (>= 1), else the hardware concurrency.
int thread_count();
/// Runs fn(i) for i in [0, n) on up to thread_count() workers; rethrows the first error.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// Simulates and processes every planned record in memory.
std::vector<slicing::LabeledPair> synthesize(const RunConfig& c);

/// Slices of one record; windows overlapping no ground-truth occurrence are dropped
/// (they would otherwise carry the record label rather than a class).
std::vector<slicing::SliceSample> labelled_slices(const slicing::LabeledPair& pair, slicing::Technique t,
                                                  const slicing::SlicingConfig& cfg);

using SplitSamples = std::map<std::string, std::vector<slicing::SliceSample>>;

/// Slices every record with one technique, grouped by split, in record order.
SplitSamples slice_records(const std::vector<slicing::LabeledPair>& pairs, slicing::Technique t,
                           const slicing::SlicingConfig& cfg);

/// Samples whose label is (not) in `labels`.
std::vector<slicing::SliceSample> select_labels(const std::vector<slicing::SliceSample>& s,
                                                const std::vector<std::string>& labels, bool keep);

struct ExperimentResult {
  metric::Model model;
  metric::CentroidClassifier classifier;
  std::vector<double> loss_curve;
  eval::Metrics metrics;
};

/// Trains on the base classes of `train`, fits centroids on them, and evaluates on
/// the base classes of `test`.
ExperimentResult run_experiment(const RunConfig& c, const std::vector<slicing::SliceSample>& train,
                                const std::vector<slicing::SliceSample>& test, slicing::Technique t,
                                metric::Constellation k, const metric::ProgressFn& progress = {});

/// Deterministic pick of `per_class` samples of each new class.
std::vector<slicing::SliceSample> few_shot_support(const RunConfig& c, const std::vector<slicing::SliceSample>& train);

struct FewShotOutcome {
  metric::FewShotResult result;
  eval::Metrics metrics;          // every class in the enlarged classifier
  eval::Metrics base_before;      // base classes with the original model
  eval::Metrics base_after;       // base classes with the adapted model
};

FewShotOutcome run_fewshot(const RunConfig& c, const ExperimentResult& base,
                           const std::vector<slicing::SliceSample>& train,
                           const std::vector<slicing::SliceSample>& test);

/// Advisory lock: <dir>/.lock created exclusively, removed on destruction.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

using Log = std::function<void(const std::string&)>;

void cmd_simulate(const RunConfig& c, const Log& log = {});
void cmd_process(const RunConfig& c, const Log& log = {});
void cmd_slice(const RunConfig& c, const Log& log = {});
void cmd_train(const RunConfig& c, const Log& log = {});
void cmd_eval(const RunConfig& c, const Log& log = {});
void cmd_fewshot(const RunConfig& c, const Log& log = {});
/// Writes <run_dir>/report.md and returns its text.
std::string cmd_report(const std::filesystem::path& run_dir, const Log& log = {});

/// Every file path referenced by the manifests of a run, relative to the run directory.
std::vector<std::filesystem::path> manifest_files(const std::filesystem::path& run_dir);

}  // namespace microsig::pipeline

namespace microsig::dsp {
void to_json(nlohmann::json& j, const StftConfig& s);
void from_json(const nlohmann::json& j, StftConfig& s);
void to_json(nlohmann::json& j, const OmegaConfig& o);
void from_json(const nlohmann::json& j, OmegaConfig& o);
void to_json(nlohmann::json& j, const SignatureConfig& s);
void from_json(const nlohmann::json& j, SignatureConfig& s);
void to_json(nlohmann::json& j, const ImageOptions& o);
void from_json(const nlohmann::json& j, ImageOptions& o);
}  // namespace microsig::dsp

namespace microsig::slicing {
void to_json(nlohmann::json& j, const CoGConfig& c);
void from_json(const nlohmann::json& j, CoGConfig& c);
void to_json(nlohmann::json& j, const AdaptiveConfig& c);
void from_json(const nlohmann::json& j, AdaptiveConfig& c);
void to_json(nlohmann::json& j, const SlicingConfig& c);
void from_json(const nlohmann::json& j, SlicingConfig& c);
}  // namespace microsig::slicing

namespace microsig::metric {
void to_json(nlohmann::json& j, const FewShotConfig& c);
void from_json(const nlohmann::json& j, FewShotConfig& c);
}  // namespace microsig::metric
