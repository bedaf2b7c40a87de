// Batch front end: one subcommand per pipeline stage.

#include "microsig/io.hpp"
#include "microsig/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace microsig;

namespace {

enum Exit { ok = 0, other = 1, validation = 2, missing = 3, divergence = 4 };

int fail(int code, const std::string& what) {
  std::cerr << "microsig: error: " << what << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Micro-motion signature pipeline"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  bool quiet = false;

  const std::vector<std::pair<std::string, std::string>> stages{
      {"simulate", "simulate IQ cubes for every planned record"},
      {"process", "form micro-Doppler / micro-omega spectrograms"},
      {"slice", "cut spectrograms into labelled slices"},
      {"train", "train an embedding network per technique and constellation"},
      {"eval", "evaluate trained models on the test split"},
      {"fewshot", "add the held-out classes from a few samples"},
      {"report", "write a markdown summary of the run"},
  };
  std::vector<CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts;
  for (const auto& [name, help] : stages) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    s->add_option("--out", out_dir, "run directory (overrides out_dir)");
    seed_opts.push_back(s->add_option("--seed", seed, "run seed (overrides seed)"));
    s->add_flag("-q,--quiet", quiet, "no progress output");
    subs.push_back(s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? Exit::ok : Exit::validation;
  }

  const pipeline::Log log = [&](const std::string& m) {
    if (!quiet) std::cerr << m << '\n';
  };
  try {
    auto cfg = pipeline::load_config(config_path);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    for (auto* o : seed_opts) {
      if (o->count() > 0) cfg.seed = seed;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "simulate") pipeline::cmd_simulate(cfg, log);
    else if (cmd == "process") pipeline::cmd_process(cfg, log);
    else if (cmd == "slice") pipeline::cmd_slice(cfg, log);
    else if (cmd == "train") pipeline::cmd_train(cfg, log);
    else if (cmd == "eval") pipeline::cmd_eval(cfg, log);
    else if (cmd == "fewshot") pipeline::cmd_fewshot(cfg, log);
    else if (cmd == "report") pipeline::cmd_report(cfg.out_dir, log);
    return Exit::ok;
  } catch (const io::MissingArtifact& e) {
    return fail(Exit::missing, e.what());
  } catch (const eval::MissingArtifacts& e) {
    return fail(Exit::missing, e.what());
  } catch (const metric::DivergenceError& e) {
    return fail(Exit::divergence, e.what());
  } catch (const pipeline::LockBusy& e) {
    return fail(Exit::validation, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(Exit::validation, e.what());
  } catch (const std::exception& e) {
    return fail(Exit::other, e.what());
  }
}
