// flctl: run federated learning experiments.
//
//   flctl experiment   --config exp.ini [--out DIR] [--seed N]
//   flctl server       --config exp.ini [--out DIR] [--seed N]
//   flctl client       --config exp.ini --index I [--seed N]
//   flctl replay-bytes --config exp.ini [--out DIR]
//
// Exit codes: 0 success, 1 run failure, 2 config error, 3 address in use.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "fl/config.hpp"
#include "fl/experiment.hpp"

namespace {

constexpr int kExitRunFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitAddressInUse = 3;

struct Options {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::size_t index = 0;
};

fl::ExperimentConfig load(const Options& opts) {
  fl::ExperimentConfig cfg = fl::load_experiment_config(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (!opts.out_dir.empty()) cfg.output_dir = opts.out_dir;
  return cfg;
}

int finish_run(const fl::ExperimentConfig& cfg, const fl::RunResult& result) {
  fl::write_outputs(cfg, result, cfg.output_dir);
  spdlog::info("wrote {} rounds to {}", result.rounds.size(), cfg.output_dir);
  if (!result.completed) {
    spdlog::error("run stopped early: {}", result.error);
    return kExitRunFailure;
  }
  return 0;
}

int cmd_experiment(const Options& opts) { auto cfg = load(opts); return finish_run(cfg, fl::run_experiment(cfg)); }

int cmd_server(const Options& opts) { auto cfg = load(opts); return finish_run(cfg, fl::serve_experiment(cfg)); }

int cmd_client(const Options& opts) {
  auto cfg = load(opts);
  const auto exit = fl::run_experiment_client(cfg, opts.index);
  spdlog::info("client {} finished ({})", opts.index, exit == fl::ClientExit::Shutdown ? "shutdown" : "dropped");
  return 0;
}

int cmd_replay_bytes(const Options& opts) {
  auto cfg = load(opts);
  const std::string csv = fl::replay_csv(fl::replay_bytes(cfg));
  std::cout << csv;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(cfg.output_dir);
    std::ofstream(std::filesystem::path(cfg.output_dir) / "replay_bytes.csv") << csv;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("flctl"));

  CLI::App app{"Federated learning server, client and experiment runner"};
  app.require_subcommand(1);
  Options opts;

  auto add_common = [&](CLI::App* sub, bool with_out) {
    sub->add_option("--config", opts.config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
    if (with_out) sub->add_option("--out", opts.out_dir, "Output directory (overrides experiment.output_dir)");
    sub->add_option("--seed", opts.seed, "Seed (overrides experiment.seed)");
  };
  auto* experiment = app.add_subcommand("experiment", "Run server and all clients in-process over loopback");
  add_common(experiment, true);
  auto* server = app.add_subcommand("server", "Run the server over TCP");
  add_common(server, true);
  auto* client = app.add_subcommand("client", "Run one client over TCP");
  add_common(client, false);
  client->add_option("--index", opts.index, "Client index in [0, num_clients)")->required();
  auto* replay = app.add_subcommand("replay-bytes", "Report analytic bytes per round for each sampling rate");
  add_common(replay, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    if (*experiment) return cmd_experiment(opts);
    if (*server) return cmd_server(opts);
    if (*client) return cmd_client(opts);
    if (*replay) return cmd_replay_bytes(opts);
  } catch (const fl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fl::BindError& e) {
    std::cerr << "cannot bind: " << e.what() << "\n";
    return kExitAddressInUse;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunFailure;
  }
  return kExitRunFailure;
}
