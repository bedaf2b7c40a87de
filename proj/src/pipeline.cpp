#include "microsig/pipeline.hpp"

#include "microsig/io.hpp"
#include "microsig_builtin_activities.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <iomanip>
#include <limits>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

// ---- JSON mappings for the processing configs --------------------------------

namespace microsig::dsp {

void to_json(json& j, const StftConfig& s) {
  j = json{{"window_len", s.window_len}, {"hop", s.hop}, {"window", to_string(s.window)}};
}

void from_json(const json& j, StftConfig& s) {
  StftConfig d;
  s.window_len = j.value("window_len", d.window_len);
  s.hop = j.value("hop", d.hop);
  s.window = window_from_string(j.value("window", to_string(d.window)));
}

void to_json(json& j, const OmegaConfig& o) {
  j = json{{"omega_max_radps", o.omega_max_radps},
           {"n_bins", o.n_bins},
           {"rate_lag_cols", o.rate_lag_cols},
           {"small_angle", o.small_angle},
           {"floor_db", o.floor_db}};
}

void from_json(const json& j, OmegaConfig& o) {
  OmegaConfig d;
  o.omega_max_radps = j.value("omega_max_radps", d.omega_max_radps);
  o.n_bins = j.value("n_bins", d.n_bins);
  o.rate_lag_cols = j.value("rate_lag_cols", d.rate_lag_cols);
  o.small_angle = j.value("small_angle", d.small_angle);
  o.floor_db = j.value("floor_db", d.floor_db);
}

void to_json(json& j, const SignatureConfig& s) {
  j = json{{"stft", s.stft}, {"omega", s.omega}, {"gate_threshold_db", s.gate_threshold_db}};
}

void from_json(const json& j, SignatureConfig& s) {
  SignatureConfig d;
  s.stft = j.value("stft", d.stft);
  s.omega = j.value("omega", d.omega);
  s.gate_threshold_db = j.value("gate_threshold_db", d.gate_threshold_db);
}

// Unbounded display limits are stored as null.
void to_json(json& j, const ImageOptions& o) {
  j = json{{"db_range", o.db_range}, {"rows", o.rows}, {"cols", o.cols}};
  j["value_min"] = std::isfinite(o.value_min) ? json(o.value_min) : json(nullptr);
  j["value_max"] = std::isfinite(o.value_max) ? json(o.value_max) : json(nullptr);
}

void from_json(const json& j, ImageOptions& o) {
  ImageOptions d;
  o.db_range = j.value("db_range", d.db_range);
  o.rows = j.value("rows", d.rows);
  o.cols = j.value("cols", d.cols);
  auto bound = [&](const char* key, double fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    return j.at(key).get<double>();
  };
  o.value_min = bound("value_min", d.value_min);
  o.value_max = bound("value_max", d.value_max);
}

}  // namespace microsig::dsp

namespace microsig::slicing {

void to_json(json& j, const CoGConfig& c) {
  j = json{{"floor_db", c.floor_db}, {"smoothing_cols", c.smoothing_cols}, {"zero_guard_mps", c.zero_guard_mps}};
}

void from_json(const json& j, CoGConfig& c) {
  CoGConfig d;
  c.floor_db = j.value("floor_db", d.floor_db);
  c.smoothing_cols = j.value("smoothing_cols", d.smoothing_cols);
  c.zero_guard_mps = j.value("zero_guard_mps", d.zero_guard_mps);
}

void to_json(json& j, const AdaptiveConfig& c) {
  j = json{{"expected_cycle_rate_hz", c.expected_cycle_rate_hz},
           {"min_duration_s", c.min_duration_s},
           {"max_duration_s", c.max_duration_s}};
}

void from_json(const json& j, AdaptiveConfig& c) {
  AdaptiveConfig d;
  c.expected_cycle_rate_hz = j.value("expected_cycle_rate_hz", d.expected_cycle_rate_hz);
  c.min_duration_s = j.value("min_duration_s", d.min_duration_s);
  c.max_duration_s = j.value("max_duration_s", d.max_duration_s);
}

void to_json(json& j, const SlicingConfig& c) {
  j = json{{"window_s", c.window_s}, {"overlap", c.overlap},     {"adaptive", c.adaptive},
           {"per_activity", c.per_activity}, {"cog", c.cog}, {"image", c.image}};
}

void from_json(const json& j, SlicingConfig& c) {
  SlicingConfig d;
  c.window_s = j.value("window_s", d.window_s);
  c.overlap = j.value("overlap", d.overlap);
  c.adaptive = j.value("adaptive", d.adaptive);
  c.per_activity = j.value("per_activity", d.per_activity);
  c.cog = j.value("cog", d.cog);
  c.image = j.value("image", d.image);
}

}  // namespace microsig::slicing

namespace microsig::metric {

void to_json(json& j, const FewShotConfig& c) { j = json{{"mode", to_string(c.mode)}, {"hyperparams", c.hp}}; }

void from_json(const json& j, FewShotConfig& c) {
  FewShotConfig d;
  c.mode = few_shot_mode_from_string(j.value("mode", to_string(d.mode)));
  c.hp = j.contains("hyperparams") ? j.at("hyperparams").get<Hyperparams>() : d.hp;
}

}  // namespace microsig::metric

namespace microsig::pipeline {

namespace {

template <typename T, typename F>
std::vector<std::string> names(const std::vector<T>& v, F f) {
  std::vector<std::string> out;
  for (const auto& x : v) out.push_back(f(x));
  return out;
}

std::string technique_name(slicing::Technique t) { return slicing::to_string(t); }
std::string constellation_name(metric::Constellation c) { return metric::to_string(c); }

std::string angle_tag(double deg) {
  const long a = std::lround(deg);
  return (a < 0 ? "m" : "p") + std::to_string(std::labs(a));
}

std::string experiment_of(slicing::Technique t, metric::Constellation k) {
  return eval::RunLayout::experiment(slicing::to_string(t), metric::to_string(k));
}

}  // namespace

// ---- RunConfig ---------------------------------------------------------------

json to_json(const RunConfig& c) {
  json subjects = json::array();
  for (const auto& s : c.dataset.subjects) subjects.push_back({{"id", s.id}, {"scale", s.scale}});
  json splits = json::array();
  for (const auto& s : c.dataset.splits) {
    splits.push_back({{"name", s.name}, {"aspect_angles_deg", s.aspect_angles_deg}, {"records", s.records}});
  }
  return json{{"schema_version", c.schema_version},
              {"seed", c.seed},
              {"out_dir", c.out_dir.string()},
              {"radar", c.radar},
              {"dataset",
               {{"activities", c.dataset.activities},
                {"subjects", subjects},
                {"splits", splits},
                {"duration_s", c.dataset.duration_s},
                {"range_jitter_m", c.dataset.range_jitter_m},
                {"activity_file", c.dataset.activity_file}}},
              {"signature", c.signature},
              {"slicing",
               {{"techniques", names(c.slicing.techniques, technique_name)},
                {"config", c.slicing.config},
                {"png", c.slicing.png}}},
              {"training",
               {{"hyperparams", c.training.hp},
                {"constellations", names(c.training.constellations, constellation_name)},
                {"architecture", c.training.architecture}}},
              {"fewshot",
               {{"new_classes", c.fewshot.new_classes},
                {"samples_per_class", c.fewshot.samples_per_class},
                {"config", c.fewshot.config},
                {"technique", slicing::to_string(c.fewshot.technique)},
                {"constellation", metric::to_string(c.fewshot.constellation)}}}};
}

RunConfig config_from_json(const json& j) {
  try {
    if (!j.is_object()) throw ValidationError("config: expected a JSON object");
    if (!j.contains("schema_version")) throw ValidationError("config: schema_version is required");
    if (!j.contains("seed")) throw ValidationError("config: seed is required");
    RunConfig c;
    c.schema_version = j.at("schema_version").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.out_dir = j.value("out_dir", c.out_dir.string());
    if (j.contains("radar")) c.radar = j.at("radar").get<RadarConfig>();
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      c.dataset.activities = d.value("activities", c.dataset.activities);
      if (d.contains("subjects")) {
        c.dataset.subjects.clear();
        for (const auto& s : d.at("subjects")) c.dataset.subjects.push_back({s.at("id"), s.value("scale", 1.0)});
      }
      if (d.contains("splits")) {
        c.dataset.splits.clear();
        for (const auto& s : d.at("splits")) {
          c.dataset.splits.push_back({s.at("name"), s.at("aspect_angles_deg"), s.value("records", 1)});
        }
      }
      c.dataset.duration_s = d.value("duration_s", c.dataset.duration_s);
      c.dataset.range_jitter_m = d.value("range_jitter_m", c.dataset.range_jitter_m);
      c.dataset.activity_file = d.value("activity_file", c.dataset.activity_file);
    }
    if (j.contains("signature")) c.signature = j.at("signature").get<dsp::SignatureConfig>();
    if (j.contains("slicing")) {
      const auto& s = j.at("slicing");
      if (s.contains("techniques")) {
        c.slicing.techniques.clear();
        for (const auto& t : s.at("techniques")) c.slicing.techniques.push_back(slicing::technique_from_string(t));
      }
      if (s.contains("config")) c.slicing.config = s.at("config").get<slicing::SlicingConfig>();
      c.slicing.png = s.value("png", c.slicing.png);
    }
    if (j.contains("training")) {
      const auto& t = j.at("training");
      if (t.contains("hyperparams")) c.training.hp = t.at("hyperparams").get<metric::Hyperparams>();
      if (t.contains("constellations")) {
        c.training.constellations.clear();
        for (const auto& k : t.at("constellations")) {
          c.training.constellations.push_back(metric::constellation_from_string(k));
        }
      }
      if (t.contains("architecture")) c.training.architecture = t.at("architecture").get<nn::Architecture>();
    }
    if (j.contains("fewshot")) {
      const auto& f = j.at("fewshot");
      c.fewshot.new_classes = f.value("new_classes", c.fewshot.new_classes);
      c.fewshot.samples_per_class = f.value("samples_per_class", c.fewshot.samples_per_class);
      if (f.contains("config")) c.fewshot.config = f.at("config").get<metric::FewShotConfig>();
      if (f.contains("technique")) c.fewshot.technique = slicing::technique_from_string(f.at("technique"));
      if (f.contains("constellation")) {
        c.fewshot.constellation = metric::constellation_from_string(f.at("constellation"));
      }
    }
    return c;
  } catch (const ValidationError&) {
    throw;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

RunConfig load_config(const fs::path& path) {
  json j;
  try {
    j = io::read_json(path);
  } catch (const io::MissingArtifact&) {
    throw ValidationError("config file not found: " + path.string());
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
  auto c = config_from_json(j);
  // A relative activity file is resolved against the config's directory.
  if (!c.dataset.activity_file.empty() && fs::path(c.dataset.activity_file).is_relative()) {
    c.dataset.activity_file = (path.parent_path() / c.dataset.activity_file).lexically_normal().string();
  }
  c.validate();
  return c;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
  if (schema_version != io::kSchemaVersion) fail("unsupported schema_version " + std::to_string(schema_version));
  try {
    radar.validate();
    training.architecture.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (dataset.activities.empty()) fail("dataset.activities is empty");
  if (dataset.subjects.empty()) fail("dataset.subjects is empty");
  if (dataset.splits.empty()) fail("dataset.splits is empty");
  if (!(dataset.duration_s > 0.0)) fail("dataset.duration_s must be > 0");
  if (!(dataset.range_jitter_m >= 0.0)) fail("dataset.range_jitter_m must be >= 0");
  std::set<std::string> seen;
  for (const auto& s : dataset.subjects) {
    if (s.id.empty() || !seen.insert("subject:" + s.id).second) fail("subject ids must be unique and non-empty");
    if (!(s.scale > 0.0)) fail("subject scale must be > 0");
  }
  for (const auto& s : dataset.splits) {
    if (s.name.empty() || !seen.insert("split:" + s.name).second) fail("split names must be unique and non-empty");
    if (s.aspect_angles_deg.empty()) fail("split " + s.name + " has no aspect angles");
    if (s.records < 1) fail("split " + s.name + " needs records >= 1");
  }
  if (std::none_of(dataset.splits.begin(), dataset.splits.end(), [](const auto& s) { return s.name == "train"; }) ||
      std::none_of(dataset.splits.begin(), dataset.splits.end(), [](const auto& s) { return s.name == "test"; })) {
    fail("dataset.splits must include 'train' and 'test'");
  }
  const auto tables = activity_tables(*this);
  for (const auto& a : dataset.activities) {
    if (!tables.count(a)) fail("activity '" + a + "' has no parameter table");
    if (!seen.insert("activity:" + a).second) fail("activity '" + a + "' listed twice");
  }
  if (slicing.techniques.empty()) fail("slicing.techniques is empty");
  if (training.constellations.empty()) fail("training.constellations is empty");
  if (slicing.config.image.rows != training.architecture.input_rows ||
      slicing.config.image.cols != training.architecture.input_cols) {
    fail("slicing image size must equal the network input size");
  }
  if (!(slicing.config.window_s > 0.0) || !(slicing.config.overlap >= 0.0 && slicing.config.overlap < 1.0)) {
    fail("slicing window must be > 0 and overlap in [0, 1)");
  }
  if (!fewshot.new_classes.empty()) {
    if (fewshot.samples_per_class < 1) fail("fewshot.samples_per_class must be >= 1");
    const auto& t = slicing.techniques;
    const auto& k = training.constellations;
    if (std::find(t.begin(), t.end(), fewshot.technique) == t.end() ||
        std::find(k.begin(), k.end(), fewshot.constellation) == k.end()) {
      fail("fewshot technique/constellation must be part of the training grid");
    }
  }
}

// ---- activity tables ---------------------------------------------------------

std::map<std::string, sim::ActivityModel> parse_activity_tables(const json& j) {
  std::map<std::string, sim::ActivityModel> out;
  try {
    const json body = j.at("body");
    for (auto a : j.at("activities")) {
      if (!a.contains("parts")) a["parts"] = body;
      auto m = a.get<sim::ActivityModel>();
      m.validate();
      const auto name = m.activity_label;
      if (!out.emplace(name, std::move(m)).second) throw ValidationError("duplicate activity table: " + name);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("activity tables: ") + e.what());
  } catch (const ValidationError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("activity tables: ") + e.what());
  }
  return out;
}

std::map<std::string, sim::ActivityModel> builtin_activity_tables() {
  static const auto tables = parse_activity_tables(json::parse(kBuiltinActivitiesJson));
  return tables;
}

std::map<std::string, sim::ActivityModel> activity_tables(const RunConfig& c) {
  if (c.dataset.activity_file.empty()) return builtin_activity_tables();
  try {
    return parse_activity_tables(io::read_json(c.dataset.activity_file));
  } catch (const io::MissingArtifact&) {
    throw ValidationError("activity file not found: " + c.dataset.activity_file);
  }
}

// ---- planning ----------------------------------------------------------------

std::uint64_t derive_seed(std::uint64_t run_seed, const std::string& key) {
  // FNV-1a over the key, folded into the run seed, finished with splitmix64.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : key) h = (h ^ ch) * 1099511628211ull;
  std::uint64_t z = run_seed ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::vector<RecordPlan> plan_records(const RunConfig& c) {
  const auto tables = activity_tables(c);
  std::vector<RecordPlan> out;
  for (const auto& a : c.dataset.activities) {
    const auto it = tables.find(a);
    if (it == tables.end()) throw ValidationError("activity '" + a + "' has no parameter table");
    for (const auto& subj : c.dataset.subjects) {
      for (const auto& split : c.dataset.splits) {
        for (double angle : split.aspect_angles_deg) {
          for (int r = 0; r < split.records; ++r) {
            RecordPlan p;
            const std::string id = a + "_" + subj.id + "_" + split.name + "_" + angle_tag(angle) + "_r" + std::to_string(r);
            p.model = it->second;
            p.model.seed = derive_seed(c.seed, id);
            p.model.duration_s = c.dataset.duration_s;
            p.model.aspect_angle_deg = angle;
            p.model.subject_scale = subj.scale;
            std::mt19937_64 rng(derive_seed(c.seed, id + "/placement"));
            std::uniform_real_distribution<double> jitter(-c.dataset.range_jitter_m, c.dataset.range_jitter_m);
            if (c.dataset.range_jitter_m > 0.0) p.model.base_range_m += jitter(rng);
            p.noise_seed = derive_seed(c.seed, id + "/noise");
            p.metadata.record_id = id;
            p.metadata.label = a;
            p.metadata.seed = p.model.seed;
            p.metadata.aspect_angle_deg = angle;
            p.metadata.subject = subj.id;
            p.metadata.split = split.name;
            p.metadata.segments = sim::activity_timeline(p.model);
            out.push_back(std::move(p));
          }
        }
      }
    }
  }
  return out;
}

sim::IqCube simulate_record(const RecordPlan& plan, const RadarConfig& radar) {
  const auto traj = sim::gen_activity_trajectories(plan.model, radar);
  auto cube = sim::simulate_iq(traj, radar, plan.noise_seed);
  cube.metadata = plan.metadata;
  return cube;
}

slicing::LabeledPair process_record(const sim::IqCube& cube, const dsp::SignatureConfig& cfg) {
  return {dsp::process_cube(cube, cfg), cube.metadata};
}

// ---- threading -----------------------------------------------------------------

int thread_count() {
  if (const char* env = std::getenv("MICROSIG_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n >= 1) return static_cast<int>(std::min<long>(n, 256));
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---- in-memory dataset ---------------------------------------------------------

std::vector<slicing::LabeledPair> synthesize(const RunConfig& c) {
  const auto plans = plan_records(c);
  std::vector<slicing::LabeledPair> out(plans.size());
  parallel_for(plans.size(), [&](std::size_t i) {
    out[i] = process_record(simulate_record(plans[i], c.radar), c.signature);
  });
  return out;
}

std::vector<slicing::SliceSample> labelled_slices(const slicing::LabeledPair& pair, slicing::Technique t,
                                                  const slicing::SlicingConfig& cfg) {
  auto out = slicing::slice(pair, t, cfg);
  const auto& segs = pair.metadata.segments;
  if (segs.empty()) return out;
  std::erase_if(out, [&](const slicing::SliceSample& s) {
    return std::none_of(segs.begin(), segs.end(), [&](const sim::Segment& g) { return g.label == s.label; });
  });
  return out;
}

SplitSamples slice_records(const std::vector<slicing::LabeledPair>& pairs, slicing::Technique t,
                           const slicing::SlicingConfig& cfg) {
  std::vector<std::vector<slicing::SliceSample>> per(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) { per[i] = labelled_slices(pairs[i], t, cfg); });
  SplitSamples out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& dst = out[pairs[i].metadata.split];
    for (auto& s : per[i]) dst.push_back(std::move(s));
  }
  return out;
}

std::vector<slicing::SliceSample> select_labels(const std::vector<slicing::SliceSample>& s,
                                                const std::vector<std::string>& labels, bool keep) {
  std::vector<slicing::SliceSample> out;
  for (const auto& x : s) {
    const bool listed = std::find(labels.begin(), labels.end(), x.label) != labels.end();
    if (listed == keep) out.push_back(x);
  }
  return out;
}

// ---- experiments ---------------------------------------------------------------

namespace {

metric::Hyperparams experiment_hp(const RunConfig& c, metric::Constellation k) {
  auto hp = c.training.hp;
  hp.constellation = k;
  // Same initialisation and batch order for every technique of a constellation.
  hp.seed = derive_seed(c.seed, "train/" + metric::to_string(k) + "/" + std::to_string(c.training.hp.seed));
  return hp;
}

nn::Architecture experiment_arch(const RunConfig& c, metric::Constellation k) {
  auto a = c.training.architecture;
  a.input_channels = metric::input_channels(k);
  return a;
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& c, const std::vector<slicing::SliceSample>& train,
                                const std::vector<slicing::SliceSample>& test, slicing::Technique t,
                                metric::Constellation k, const metric::ProgressFn& progress) {
  const auto base_train = select_labels(train, c.fewshot.new_classes, false);
  const auto base_test = select_labels(test, c.fewshot.new_classes, false);
  if (base_train.empty()) throw ValidationError("no training slices for " + experiment_of(t, k));
  if (base_test.empty()) throw ValidationError("no test slices for " + experiment_of(t, k));
  const auto hp = experiment_hp(c, k);
  auto r = metric::train(metric::Model(experiment_arch(c, k), hp.seed), base_train, hp, progress);
  ExperimentResult out{std::move(r.model), {}, std::move(r.loss_curve), {}};
  out.classifier = metric::fit_centroids(out.model, base_train, k);
  out.metrics = eval::make_metrics(eval::evaluate(out.model, out.classifier, base_test, k), slicing::to_string(t),
                                   metric::to_string(k));
  return out;
}

std::vector<slicing::SliceSample> few_shot_support(const RunConfig& c, const std::vector<slicing::SliceSample>& train) {
  std::vector<slicing::SliceSample> out;
  for (const auto& label : c.fewshot.new_classes) {
    auto pool = select_labels(train, {label}, true);
    if (static_cast<int>(pool.size()) < c.fewshot.samples_per_class) {
      throw ValidationError("few-shot class '" + label + "' has " + std::to_string(pool.size()) +
                            " training slices, need " + std::to_string(c.fewshot.samples_per_class));
    }
    std::mt19937_64 rng(derive_seed(c.seed, "fewshot/" + label));
    std::shuffle(pool.begin(), pool.end(), rng);
    for (int i = 0; i < c.fewshot.samples_per_class; ++i) out.push_back(std::move(pool[static_cast<std::size_t>(i)]));
  }
  return out;
}

FewShotOutcome run_fewshot(const RunConfig& c, const ExperimentResult& base,
                           const std::vector<slicing::SliceSample>& train,
                           const std::vector<slicing::SliceSample>& test) {
  if (c.fewshot.new_classes.empty()) throw ValidationError("fewshot.new_classes is empty");
  const auto k = c.fewshot.constellation;
  const auto t = slicing::to_string(c.fewshot.technique);
  auto cfg = c.fewshot.config;
  cfg.hp.constellation = k;
  cfg.hp.seed = derive_seed(c.seed, "fewshot/train/" + std::to_string(cfg.hp.seed));
  const auto support = few_shot_support(c, train);
  const auto base_train = select_labels(train, c.fewshot.new_classes, false);
  const auto base_test = select_labels(test, c.fewshot.new_classes, false);

  FewShotOutcome out{metric::few_shot_adapt(base.model, base.classifier, support, base_train, cfg), {}, {}, {}};
  const auto& m = out.result.model;
  const auto& clf = out.result.classifier;
  out.metrics = eval::make_metrics(eval::evaluate(m, clf, test, k), t, metric::to_string(k));
  out.base_before = eval::make_metrics(eval::evaluate(base.model, base.classifier, base_test, k), t, metric::to_string(k));
  out.base_after = eval::make_metrics(eval::evaluate(m, clf, base_test, k), t, metric::to_string(k));
  return out;
}

// ---- lock ----------------------------------------------------------------------

RunLock::RunLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  std::FILE* f = std::fopen(path_.c_str(), "wx");
  if (f == nullptr) {
    if (fs::exists(path_)) {
      throw LockBusy("run directory is locked by another command: " + path_.string() +
                     " (remove it if no command is running)");
    }
    throw std::runtime_error("cannot create lock file " + path_.string());
  }
  std::fclose(f);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---- commands ------------------------------------------------------------------

namespace {

constexpr const char* kRootManifest = "manifest.json";

void say(const Log& log, const std::string& m) {
  if (log) log(m);
}

std::string rel(const fs::path& p, const fs::path& root) { return p.lexically_relative(root).generic_string(); }

void reset_dir(const fs::path& d) {
  fs::remove_all(d);
  fs::create_directories(d);
}

json file_entry(const fs::path& p, const fs::path& root) {
  return json{{"path", rel(p, root)}, {"digest", io::file_digest(p)}};
}

/// Root manifest: config, report and the stage manifests.
void register_stage(const fs::path& root, const std::string& stage, const json& manifests) {
  const auto path = root / kRootManifest;
  json m = fs::exists(path) ? io::read_json(path) : json{{"schema_version", io::kSchemaVersion}, {"stages", json::object()}};
  m["stages"][stage] = manifests;
  io::write_json(path, m);
}

void write_config(const RunConfig& c) {
  auto j = to_json(c);
  j.erase("out_dir");  // the run directory is wherever this file lives
  io::write_json(eval::RunLayout{c.out_dir}.config(), j);
  register_stage(c.out_dir, "config", json::array({"config.json"}));
}

json read_stage_manifest(const fs::path& path, const std::string& upstream) {
  if (!fs::exists(path)) {
    throw io::MissingArtifact(path.string() + " (run `microsig " + upstream + "` first)");
  }
  return io::read_json(path);
}

fs::path stage_manifest(const fs::path& dir) { return dir / "manifest.json"; }

slicing::LabeledPair load_pair(const eval::RunLayout& run, const json& entry) {
  const auto dir = run.spectrogram_dir();
  slicing::LabeledPair p;
  p.signatures.micro_doppler = dsp::read_spectrogram(dir / entry.at("mu_d").get<std::string>());
  p.signatures.micro_omega = dsp::read_spectrogram(dir / entry.at("mu_omega").get<std::string>());
  p.metadata = entry.at("metadata").get<sim::RecordMetadata>();
  return p;
}

std::vector<slicing::SliceSample> load_split(const eval::RunLayout& run, slicing::Technique t, const std::string& split) {
  const auto dir = run.slice_dir(slicing::to_string(t), split);
  if (!fs::exists(stage_manifest(dir))) {
    throw io::MissingArtifact(stage_manifest(dir).string() + " (run `microsig slice` first)");
  }
  return slicing::load_slices(dir);
}

}  // namespace

void cmd_simulate(const RunConfig& c, const Log& log) {
  c.validate();
  RunLock lock(c.out_dir);
  const eval::RunLayout run{c.out_dir};
  write_config(c);
  const auto plans = plan_records(c);
  reset_dir(run.iq_dir());
  std::vector<json> entries(plans.size());
  std::mutex log_mutex;
  parallel_for(plans.size(), [&](std::size_t i) {
    const auto& p = plans[i];
    const auto base = run.iq_dir() / p.metadata.record_id;
    sim::write_iq_cube(base, simulate_record(p, c.radar));
    entries[i] = json{{"record_id", p.metadata.record_id},
                      {"iq", file_entry(fs::path(base.string() + ".iq"), run.iq_dir())},
                      {"meta", file_entry(fs::path(base.string() + ".meta.json"), run.iq_dir())}};
    std::lock_guard<std::mutex> l(log_mutex);
    say(log, "simulated " + p.metadata.record_id);
  });
  io::write_json(stage_manifest(run.iq_dir()),
                 {{"schema_version", io::kSchemaVersion}, {"stage", "simulate"}, {"records", entries}});
  register_stage(c.out_dir, "simulate", json::array({"iq/manifest.json"}));
  say(log, std::to_string(plans.size()) + " records written to " + run.iq_dir().string());
}

void cmd_process(const RunConfig& c, const Log& log) {
  c.validate();
  RunLock lock(c.out_dir);
  const eval::RunLayout run{c.out_dir};
  const auto iq = read_stage_manifest(stage_manifest(run.iq_dir()), "simulate");
  write_config(c);
  reset_dir(run.spectrogram_dir());
  const auto& records = iq.at("records");
  std::vector<json> entries(records.size());
  std::mutex log_mutex;
  parallel_for(records.size(), [&](std::size_t i) {
    const auto id = records[i].at("record_id").get<std::string>();
    const auto iq_path = run.iq_dir() / records[i].at("iq").at("path").get<std::string>();
    if (!fs::exists(iq_path)) throw io::MissingArtifact(iq_path);
    const auto cube = sim::read_iq_cube(run.iq_dir() / id);
    const auto pair = process_record(cube, c.signature);
    const auto dir = run.spectrogram_dir();
    dsp::write_spectrogram(dir / (id + "_mud"), pair.signatures.micro_doppler);
    dsp::write_spectrogram(dir / (id + "_muw"), pair.signatures.micro_omega);
    json files = json::array();
    for (const auto* suffix : {"_mud.f32", "_mud.meta.json", "_muw.f32", "_muw.meta.json"}) {
      files.push_back(file_entry(dir / (id + suffix), dir));
    }
    entries[i] = json{{"record_id", id},
                      {"mu_d", id + "_mud"},
                      {"mu_omega", id + "_muw"},
                      {"files", files},
                      {"metadata", pair.metadata}};
    std::lock_guard<std::mutex> l(log_mutex);
    say(log, "processed " + id);
  });
  io::write_json(stage_manifest(run.spectrogram_dir()),
                 {{"schema_version", io::kSchemaVersion}, {"stage", "process"}, {"records", entries}});
  register_stage(c.out_dir, "process", json::array({"spectrograms/manifest.json"}));
}

void cmd_slice(const RunConfig& c, const Log& log) {
  c.validate();
  RunLock lock(c.out_dir);
  const eval::RunLayout run{c.out_dir};
  const auto spec = read_stage_manifest(stage_manifest(run.spectrogram_dir()), "process");
  write_config(c);
  fs::remove_all(run.root / "slices");
  json manifests = json::array();
  for (const auto t : c.slicing.techniques) {
    const auto tname = slicing::to_string(t);
    std::map<std::string, slicing::Manifest> per_split;
    for (const auto& s : c.dataset.splits) {
      per_split[s.name].technique = tname;
      fs::create_directories(run.slice_dir(tname, s.name));
    }
    for (const auto& entry : spec.at("records")) {
      const auto pair = load_pair(run, entry);
      const auto split = pair.metadata.split;
      if (!per_split.count(split)) throw ValidationError("record " + pair.metadata.record_id + " has unknown split " + split);
      const auto dir = run.slice_dir(tname, split);
      const auto samples = labelled_slices(pair, t, c.slicing.config);
      for (std::size_t k = 0; k < samples.size(); ++k) {
        std::ostringstream stem;
        stem << pair.metadata.record_id << '_' << std::setw(3) << std::setfill('0') << k;
        per_split[split].entries.push_back(slicing::write_slice(dir, stem.str(), samples[k], c.slicing.png));
      }
    }
    for (const auto& [split, m] : per_split) {
      slicing::write_manifest(run.slice_dir(tname, split), m);
      manifests.push_back(rel(stage_manifest(run.slice_dir(tname, split)), run.root));
      say(log, tname + "/" + split + ": " + std::to_string(m.entries.size()) + " slices");
    }
  }
  register_stage(c.out_dir, "slice", manifests);
}

void cmd_train(const RunConfig& c, const Log& log) {
  c.validate();
  RunLock lock(c.out_dir);
  const eval::RunLayout run{c.out_dir};
  write_config(c);
  fs::remove_all(run.root / "models");
  json entries = json::array();
  for (const auto t : c.slicing.techniques) {
    const auto train = load_split(run, t, "train");
    for (const auto k : c.training.constellations) {
      const auto exp = experiment_of(t, k);
      say(log, "training " + exp);
      const auto base_train = select_labels(train, c.fewshot.new_classes, false);
      if (base_train.empty()) throw ValidationError("no training slices for " + exp);
      const auto hp = experiment_hp(c, k);
      auto r = metric::train(metric::Model(experiment_arch(c, k), hp.seed), base_train, hp,
                             [&](int epoch, double loss) {
                               std::ostringstream m;
                               m << exp << " epoch " << epoch << " loss " << std::fixed << std::setprecision(5) << loss;
                               say(log, m.str());
                             });
      const auto clf = metric::fit_centroids(r.model, base_train, k);
      fs::create_directories(run.model_dir(exp));
      metric::save_checkpoint(run.checkpoint(exp), r.model,
                              {{"hyperparams", hp},
                               {"seed", hp.seed},
                               {"technique", slicing::to_string(t)},
                               {"constellation", metric::to_string(k)},
                               {"epochs", static_cast<int>(r.loss_curve.size())},
                               {"loss_curve", r.loss_curve},
                               {"classes", clf.labels()},
                               {"train_slices", base_train.size()}});
      io::write_json(run.classifier(exp), metric::classifier_to_json(clf));
      const auto base = run.checkpoint(exp).string();
      entries.push_back({{"experiment", exp},
                         {"files",
                          {file_entry(base + ".bin", run.root / "models"), file_entry(base + ".json", run.root / "models"),
                           file_entry(run.classifier(exp), run.root / "models")}}});
    }
  }
  io::write_json(run.root / "models" / "manifest.json",
                 {{"schema_version", io::kSchemaVersion}, {"stage", "train"}, {"experiments", entries}});
  register_stage(c.out_dir, "train", json::array({"models/manifest.json"}));
}

void cmd_eval(const RunConfig& c, const Log& log) {
  c.validate();
  RunLock lock(c.out_dir);
  const eval::RunLayout run{c.out_dir};
  // Fail before touching anything when a checkpoint is absent.
  for (const auto t : c.slicing.techniques) {
    for (const auto k : c.training.constellations) {
      const auto exp = experiment_of(t, k);
      for (const fs::path& p : {fs::path(run.checkpoint(exp).string() + ".json"), fs::path(run.checkpoint(exp).string() + ".bin"),
                               run.classifier(exp)}) {
        if (!fs::exists(p)) throw io::MissingArtifact(p.string() + " (run `microsig train` first)");
      }
    }
  }
  write_config(c);
  fs::remove_all(run.root / "eval");
  json entries = json::array();
  for (const auto t : c.slicing.techniques) {
    const auto test = select_labels(load_split(run, t, "test"), c.fewshot.new_classes, false);
    for (const auto k : c.training.constellations) {
      const auto exp = experiment_of(t, k);
      const auto model = metric::load_checkpoint(run.checkpoint(exp));
      const auto clf = metric::classifier_from_json(io::read_json(run.classifier(exp)));
      const auto m = eval::make_metrics(eval::evaluate(model, clf, test, k), slicing::to_string(t), metric::to_string(k));
      fs::create_directories(run.eval_dir(exp));
      io::write_json(run.metrics(exp), eval::to_json(m));
      eval::export_embeddings(run.eval_dir(exp) / "embeddings", model, test, k);
      const auto root = run.root / "eval";
      entries.push_back({{"experiment", exp},
                         {"accuracy", m.accuracy},
                         {"files",
                          {file_entry(run.metrics(exp), root), file_entry(run.eval_dir(exp) / "embeddings.csv", root),
                           file_entry(run.eval_dir(exp) / "embeddings_pca.csv", root)}}});
      std::ostringstream msg;
      msg << exp << " accuracy " << std::fixed << std::setprecision(4) << m.accuracy;
      say(log, msg.str());
    }
  }
  io::write_json(run.root / "eval" / "manifest.json",
                 {{"schema_version", io::kSchemaVersion}, {"stage", "eval"}, {"experiments", entries}});
  register_stage(c.out_dir, "eval", json::array({"eval/manifest.json"}));
}

void cmd_fewshot(const RunConfig& c, const Log& log) {
  c.validate();
  if (c.fewshot.new_classes.empty()) throw ValidationError("config: fewshot.new_classes is empty");
  RunLock lock(c.out_dir);
  const eval::RunLayout run{c.out_dir};
  const auto exp = experiment_of(c.fewshot.technique, c.fewshot.constellation);
  for (const fs::path& p : {fs::path(run.checkpoint(exp).string() + ".json"), run.classifier(exp)}) {
    if (!fs::exists(p)) throw io::MissingArtifact(p.string() + " (run `microsig train` first)");
  }
  write_config(c);
  ExperimentResult base{metric::load_checkpoint(run.checkpoint(exp)),
                        metric::classifier_from_json(io::read_json(run.classifier(exp))), {}, {}};
  const auto train = load_split(run, c.fewshot.technique, "train");
  const auto test = load_split(run, c.fewshot.technique, "test");
  say(log, "adding " + std::to_string(c.fewshot.new_classes.size()) + " classes to " + exp);
  const auto out = run_fewshot(c, base, train, test);

  const auto dir = run.fewshot_dir();
  reset_dir(dir);
  metric::save_checkpoint(dir / "model", out.result.model,
                          {{"base_experiment", exp},
                           {"mode", metric::to_string(c.fewshot.config.mode)},
                           {"loss_curve", out.result.loss_curve},
                           {"classes", out.result.classifier.labels()}});
  io::write_json(dir / "classifier.json", metric::classifier_to_json(out.result.classifier));
  auto j = eval::to_json(out.metrics);
  j["new_classes"] = c.fewshot.new_classes;
  j["samples_per_class"] = c.fewshot.samples_per_class;
  j["base_accuracy_before"] = out.base_before.per_class;
  j["base_accuracy_after"] = out.base_after.per_class;
  io::write_json(dir / "metrics.json", j);
  json files = json::array();
  for (const auto* f : {"model.bin", "model.json", "classifier.json", "metrics.json"}) files.push_back(file_entry(dir / f, dir));
  io::write_json(dir / "manifest.json",
                 {{"schema_version", io::kSchemaVersion}, {"stage", "fewshot"}, {"files", files}});
  register_stage(c.out_dir, "fewshot", json::array({"fewshot/manifest.json"}));
  std::ostringstream msg;
  msg << out.result.classifier.size() << "-class accuracy " << std::fixed << std::setprecision(4) << out.metrics.accuracy;
  say(log, msg.str());
}

std::string cmd_report(const fs::path& run_dir, const Log& log) {
  RunLock lock(run_dir);
  const eval::RunLayout run{run_dir};
  const auto text = eval::report(run_dir);
  io::write_text(run.report(), text);
  register_stage(run_dir, "report", json::array({"report.md"}));
  say(log, "wrote " + run.report().string());
  return text;
}

std::vector<fs::path> manifest_files(const fs::path& run_dir) {
  std::vector<fs::path> out;
  const auto root = io::read_json(run_dir / kRootManifest);
  for (const auto& [stage, list] : root.at("stages").items()) {
    for (const auto& entry : list) {
      const fs::path p = entry.get<std::string>();
      out.push_back(p);
      if (p.filename() != "manifest.json") continue;
      const auto dir = p.parent_path();
      const auto m = io::read_json(run_dir / p);
      if (stage == "slice") {
        for (const auto& e : slicing::read_manifest(run_dir / dir).entries) {
          for (const auto* f : {&e.mu_d_pgm, &e.mu_omega_pgm, &e.mu_d_png, &e.mu_omega_png}) {
            if (!f->empty()) out.push_back(dir / *f);
          }
        }
        continue;
      }
      auto collect = [&](const json& files) {
        for (const auto& f : files) out.push_back(dir / f.at("path").get<std::string>());
      };
      if (m.contains("files")) collect(m.at("files"));
      for (const auto* key : {"records", "experiments"}) {
        if (!m.contains(key)) continue;
        for (const auto& r : m.at(key)) {
          for (const auto* role : {"iq", "meta"}) {
            if (r.contains(role)) out.push_back(dir / r.at(role).at("path").get<std::string>());
          }
          if (r.contains("files")) collect(r.at("files"));
        }
      }
    }
  }
  return out;
}

}  // namespace microsig::pipeline
