#include "microsig/io.hpp"
#include "microsig/pipeline.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

using namespace microsig;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("microsig_pipeline_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

pipeline::RunConfig smoke() { return pipeline::load_config(fs::path(MICROSIG_SOURCE_DIR) / "configs" / "smoke.json"); }

// 8 models x 2 subjects x 3 angles, very short records.
pipeline::RunConfig counting_plan() {
  pipeline::RunConfig c = smoke();
  c.dataset.activities = {"sit_stand", "walking", "gesture", "reaching", "bending", "kneeling", "jumping", "fall_sequence"};
  c.dataset.subjects = {{"s1", 1.0}, {"s2", 1.1}};
  c.dataset.splits = {{"train", {0.0, 30.0}, 1}, {"test", {-30.0}, 1}};
  c.dataset.duration_s = 0.3;
  return c;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[e.path().lexically_relative(dir).generic_string()] = io::file_digest(e.path());
  }
  return out;
}

void run_all(const pipeline::RunConfig& c) {
  pipeline::cmd_simulate(c);
  pipeline::cmd_process(c);
  pipeline::cmd_slice(c);
  pipeline::cmd_train(c);
  pipeline::cmd_eval(c);
  pipeline::cmd_fewshot(c);
  pipeline::cmd_report(c.out_dir);
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(MICROSIG_CLI) + " " + args + " -q 2>/dev/null").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("run config round-trips losslessly") {
  const auto c = smoke();
  CHECK(pipeline::config_from_json(pipeline::to_json(c)) == c);

  const auto dir = scratch("config");
  io::write_json(dir / "a.json", pipeline::to_json(c));
  const auto once = pipeline::load_config(dir / "a.json");
  io::write_json(dir / "b.json", pipeline::to_json(once));
  CHECK(pipeline::load_config(dir / "b.json") == once);
  CHECK(io::read_text(dir / "a.json") == io::read_text(dir / "b.json"));

  // Unbounded display limits survive as null.
  auto open = c;
  open.slicing.config.image = {};
  CHECK(pipeline::config_from_json(pipeline::to_json(open)) == open);
  fs::remove_all(dir);
}

TEST_CASE("config validation") {
  auto j = pipeline::to_json(smoke());
  auto no_seed = j;
  no_seed.erase("seed");
  CHECK_THROWS_AS(pipeline::config_from_json(no_seed), pipeline::ValidationError);

  auto unknown = pipeline::config_from_json(j);
  unknown.dataset.activities.push_back("juggling");
  CHECK_THROWS_AS(unknown.validate(), pipeline::ValidationError);

  auto bad_grid = pipeline::config_from_json(j);
  bad_grid.fewshot.constellation = metric::Constellation::micro_doppler;
  CHECK_THROWS_AS(bad_grid.validate(), pipeline::ValidationError);

  auto bad_image = pipeline::config_from_json(j);
  bad_image.slicing.config.image.cols = 128;
  CHECK_THROWS_AS(bad_image.validate(), pipeline::ValidationError);

  auto bad_technique = j;
  bad_technique["slicing"]["techniques"] = {"random"};
  CHECK_THROWS_AS(pipeline::config_from_json(bad_technique), pipeline::ValidationError);

  CHECK_THROWS_AS(pipeline::load_config("/nonexistent/config.json"), pipeline::ValidationError);
}

TEST_CASE("built-in activity tables cover the default plan") {
  const auto t = pipeline::builtin_activity_tables();
  CHECK(t.size() == 8);
  for (const auto& [name, m] : t) {
    CHECK(m.activity_label == name);
    CHECK(m.parts.size() == 7);
    CHECK_FALSE(m.stages.empty());
  }
  CHECK(t.at("fall_sequence").stages.size() == 2);
  CHECK(t.at("fall_sequence").stages[0].label == "falling");
  CHECK(t.at("fall_sequence").stages[1].label == "standing_from_falling");
}

TEST_CASE("default aspect angles are LOS, +-30 and +-50 degrees") {
  const pipeline::DatasetPlan d;
  std::set<double> angles;
  for (const auto& s : d.splits) angles.insert(s.aspect_angles_deg.begin(), s.aspect_angles_deg.end());
  CHECK(angles == std::set<double>{-50.0, -30.0, 0.0, 30.0, 50.0});
}

TEST_CASE("derived seeds are deterministic and distinct") {
  CHECK(pipeline::derive_seed(1, "a") == pipeline::derive_seed(1, "a"));
  CHECK(pipeline::derive_seed(1, "a") != pipeline::derive_seed(2, "a"));
  CHECK(pipeline::derive_seed(1, "a") != pipeline::derive_seed(1, "b"));
}

TEST_CASE("8 activities x 2 subjects x 3 angles plan 48 records") {
  const auto c = counting_plan();
  const auto plans = pipeline::plan_records(c);
  REQUIRE(plans.size() == 48);
  std::set<std::string> ids;
  std::set<std::uint64_t> seeds;
  for (const auto& p : plans) {
    ids.insert(p.metadata.record_id);
    seeds.insert(p.model.seed);
  }
  CHECK(ids.size() == 48);
  CHECK(seeds.size() == 48);
}

TEST_CASE("simulate writes 48 cubes and a manifest, reproducibly") {
  auto c = counting_plan();
  c.out_dir = scratch("simulate_a");
  pipeline::cmd_simulate(c);
  const auto m = io::read_json(c.out_dir / "iq" / "manifest.json");
  CHECK(m.at("records").size() == 48);
  CHECK(m.at("schema_version") == io::kSchemaVersion);
  std::size_t cubes = 0;
  for (const auto& e : fs::directory_iterator(c.out_dir / "iq")) cubes += e.path().extension() == ".iq";
  CHECK(cubes == 48);

  auto again = c;
  again.out_dir = scratch("simulate_b");
  pipeline::cmd_simulate(again);
  CHECK(io::read_text(c.out_dir / "iq" / "manifest.json") == io::read_text(again.out_dir / "iq" / "manifest.json"));

  auto other = c;
  other.seed += 1;
  other.out_dir = scratch("simulate_c");
  pipeline::cmd_simulate(other);
  CHECK(io::read_text(c.out_dir / "iq" / "manifest.json") != io::read_text(other.out_dir / "iq" / "manifest.json"));
  for (const auto& d : {c.out_dir, again.out_dir, other.out_dir}) fs::remove_all(d);
}

TEST_CASE("missing upstream artifacts name the expected path") {
  auto c = smoke();
  c.out_dir = scratch("missing");
  try {
    pipeline::cmd_eval(c);
    FAIL("expected MissingArtifact");
  } catch (const io::MissingArtifact& e) {
    CHECK(std::string(e.what()).find("models/fixed_combined/model.json") != std::string::npos);
    CHECK(std::string(e.what()).find("microsig train") != std::string::npos);
  }
  CHECK_THROWS_AS(pipeline::cmd_process(c), io::MissingArtifact);
  CHECK_THROWS_AS(pipeline::cmd_fewshot(c), io::MissingArtifact);
  CHECK_FALSE(fs::exists(c.out_dir / ".lock"));
  fs::remove_all(c.out_dir);
}

TEST_CASE("a held lock rejects a second writer") {
  const auto dir = scratch("lock");
  {
    pipeline::RunLock held(dir);
    auto c = smoke();
    c.out_dir = dir;
    CHECK_THROWS_AS(pipeline::cmd_simulate(c), pipeline::LockBusy);
    CHECK_THROWS_AS(pipeline::RunLock{dir}, pipeline::LockBusy);
  }
  CHECK_FALSE(fs::exists(dir / ".lock"));
  CHECK_NOTHROW(pipeline::RunLock{dir});
  fs::remove_all(dir);
}

TEST_CASE("CLI exit codes") {
  const auto dir = scratch("cli");
  const auto cfg = (fs::path(MICROSIG_SOURCE_DIR) / "configs" / "smoke.json").string();
  CHECK(run_cli("eval --config " + cfg + " --out " + (dir / "run").string()) == 3);
  CHECK(run_cli("report --config " + cfg + " --out " + (dir / "run").string()) == 3);

  auto j = pipeline::to_json(smoke());
  j.erase("seed");
  io::write_json(dir / "no_seed.json", j);
  CHECK(run_cli("simulate --config " + (dir / "no_seed.json").string()) == 2);
  CHECK(run_cli("frobnicate --config " + cfg) == 2);
  CHECK(run_cli("simulate") == 2);

  fs::create_directories(dir / "locked");
  std::ofstream(dir / "locked" / ".lock") << "";
  CHECK(run_cli("simulate --config " + cfg + " --out " + (dir / "locked").string()) == 2);
  fs::remove_all(dir);
}

TEST_CASE("smoke pipeline: budget, determinism, idempotence, no orphans") {
  auto a = smoke();
  a.out_dir = scratch("smoke_a");
  const auto t0 = std::chrono::steady_clock::now();
  run_all(a);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("smoke pipeline took " << seconds << " s");
  CHECK(seconds < 60.0);

  const eval::RunLayout run{a.out_dir};
  CHECK(fs::exists(run.report()));
  const auto fs_metrics = io::read_json(run.fewshot_dir() / "metrics.json");
  const auto base_clf = metric::classifier_from_json(io::read_json(run.classifier("adaptive_combined")));
  CHECK(base_clf.size() == 2);
  CHECK(fs_metrics.at("confusion").at("labels").size() == base_clf.size() + 2);
  CHECK(io::read_text(run.report()).find("| constellation | fixed | sliding | adaptive |") != std::string::npos);

  // Every artifact is referenced by exactly one manifest entry.
  const auto listed = pipeline::manifest_files(a.out_dir);
  std::set<std::string> unique;
  for (const auto& p : listed) CHECK_MESSAGE(unique.insert(p.generic_string()).second, "listed twice: " << p);
  for (const auto& [path, digest] : snapshot(a.out_dir)) {
    if (path == "manifest.json") continue;
    CHECK_MESSAGE(unique.count(path) == 1, "orphan: " << path);
  }
  for (const auto& p : unique) CHECK_MESSAGE(fs::exists(a.out_dir / p), "dangling: " << p);

  // Same config and seed elsewhere: identical artifacts.
  auto b = a;
  b.out_dir = scratch("smoke_b");
  run_all(b);
  const auto sa = snapshot(a.out_dir);
  CHECK(sa == snapshot(b.out_dir));
  CHECK(io::read_text(run.metrics("adaptive_combined")) ==
        io::read_text(eval::RunLayout{b.out_dir}.metrics("adaptive_combined")));

  // Re-running in place rewrites identical outputs and leaves nothing behind.
  run_all(a);
  CHECK(snapshot(a.out_dir) == sa);

  // Partial re-run: slicing again removes stale slice files.
  std::ofstream(run.slice_dir("fixed", "train") / "stale.pgm") << "x";
  pipeline::cmd_slice(a);
  CHECK_FALSE(fs::exists(run.slice_dir("fixed", "train") / "stale.pgm"));

  fs::remove_all(a.out_dir);
  fs::remove_all(b.out_dir);
}
