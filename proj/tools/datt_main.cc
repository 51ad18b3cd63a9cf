// datt: train, evaluate, gradient-check, and generate data for the dual
// attention speaker verifier.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "datt/commands.h"
#include "datt/error.h"
#include "datt/io.h"

namespace {

// The --seed flag behaves exactly like a "seed" key in the config file.
datt::RunConfig ReadConfig(const std::string& path, std::optional<std::uint64_t> seed) {
  nlohmann::json j = nlohmann::json::object();
  std::string origin = "<defaults>";
  if (!path.empty()) {
    origin = path;
    try {
      j = nlohmann::json::parse(datt::ReadFile(path));
    } catch (const nlohmann::json::parse_error& e) {
      throw datt::ConfigError(path + ": " + e.what());
    } catch (const datt::InputError& e) {
      throw datt::ConfigError(e.what());
    }
  }
  if (seed && j.is_object()) j["seed"] = *seed;
  return datt::ParseRunConfig(j.dump(), origin);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual attention speaker verification"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, trials, out, log_path, input;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1, num_trials = 200;

  CLI::App* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  train->add_option("--config", config_path, "JSON run config (defaults if omitted)");
  train->add_option("--seed", seed, "Overrides the config seed");
  train->add_option("--out", checkpoint, "Checkpoint path")->required();
  train->add_option("--log", log_path, "Per-step loss CSV (default <out>.log.csv)");
  train->add_option("--threads", threads, "Worker threads for calibration encoding");

  CLI::App* eval = app.add_subcommand("eval", "Score a trial list");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint path")->required();
  eval->add_option("--trials", trials, "Trial list: <label> <utt1> <utt2> per line")->required();
  eval->add_option("--out", out, "Per-trial score CSV")->required();
  eval->add_option("--threads", threads, "Worker threads");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  std::uint64_t gradcheck_seed = 0;
  gradcheck->add_option("--seed", gradcheck_seed, "Initialization and probe seed");

  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic corpus and trial list");
  synth->add_option("--config", config_path, "JSON run config (defaults if omitted)");
  synth->add_option("--seed", seed, "Overrides the config seed");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--num-trials", num_trials, "Trials written to trials.txt");

  CLI::App* fbank = app.add_subcommand("fbank", "Convert a WAV file to FBank features");
  fbank->add_option("input", input, "16 kHz mono 16-bit WAV")->required();
  fbank->add_option("--out", out, "Feature file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const datt::RunConfig config = ReadConfig(config_path, seed);
      if (log_path.empty()) log_path = checkpoint + ".log.csv";
      const datt::TrainOutcome outcome =
          datt::CmdTrain(config, checkpoint, log_path, threads, &std::cerr);
      std::printf("steps %zu\nfinal loss_all %.6f\ncheckpoint %s\nlog %s\n", outcome.log.size(),
                  outcome.log.empty() ? 0.0 : outcome.log.back().losses.loss_all,
                  checkpoint.c_str(), log_path.c_str());
    } else if (*eval) {
      const datt::EvalReport report = datt::CmdEval(checkpoint, trials, out, threads);
      for (const std::string& f : report.failures) std::cerr << "skipped: " << f << "\n";
      std::fputs(datt::SummaryText(report).c_str(), stdout);
    } else if (*gradcheck) {
      datt::GradcheckOptions options;
      options.seed = gradcheck_seed;
      const datt::GradcheckReport report = datt::RunGradcheck(options);
      std::fputs(report.Format().c_str(), stdout);
      if (!report.passed()) return 1;
    } else if (*synth) {
      datt::CmdSynth(ReadConfig(config_path, seed), out, num_trials);
      std::printf("wrote %s\n", out.c_str());
    } else if (*fbank) {
      datt::CmdFbank(input, out);
    }
  } catch (const datt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
