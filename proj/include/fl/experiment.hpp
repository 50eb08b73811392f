#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fl/client.hpp"
#include "fl/config.hpp"
#include "fl/server.hpp"
#include "fl/trainer.hpp"

namespace fl {

struct ExperimentData {
  ModelSpec model;
  std::vector<LocalDataset> train;  // per client
  std::vector<LocalDataset> test;   // per client
  LocalDataset holdout;             // server-side, may be empty
};

/// Builds the dataset, partitions it and splits every partition into
/// train/test. Seeds are derived from config.seed only.
ExperimentData prepare_data(const ExperimentConfig& config);

Weights initial_weights(const ExperimentConfig& config, const ModelSpec& model);

/// "client-0007"
std::string client_name(std::size_t index);

/// TrainingClient with the configured compute profile and injected failures.
/// For a scheduled round the fit callback throws (error), throws
/// DropConnection (drop), or sleeps past read_timeout before answering
/// normally (timeout).
class ExperimentClient : public Client {
 public:
  ExperimentClient(TrainingClient base, ComputeProfile compute, std::vector<FailureInjection> failures,
                   std::chrono::milliseconds timeout_delay);

  Weights get_weights() override { return base_.get_weights(); }
  FitOutput fit(const Weights& weights, const ConfigMap& config) override;
  EvaluateOutput evaluate(const Weights& weights, const ConfigMap& config) override {
    return base_.evaluate(weights, config);
  }

 private:
  TrainingClient base_;
  std::vector<FailureInjection> failures_;
  std::chrono::milliseconds timeout_delay_;
  FitFn fit_;
};

std::unique_ptr<ExperimentClient> make_experiment_client(const ExperimentConfig& config, const ExperimentData& data,
                                                         std::size_t index);

/// Server plus num_clients clients in one process over loopback streams,
/// each shaped by its client's LinkProfile in both directions.
RunResult run_experiment(const ExperimentConfig& config);

/// TCP server on config.address. Throws BindError if the port is taken.
RunResult serve_experiment(const ExperimentConfig& config);

/// TCP client `index` connecting to config.address.
ClientExit run_experiment_client(const ExperimentConfig& config, std::size_t index);

/// metrics.csv column order.
inline constexpr const char* kMetricsHeader =
    "round,loss,accuracy,centralized_loss,centralized_accuracy,num_selected,num_success,num_failures,"
    "num_excluded,updated,update_divergence,eval_selected,eval_success,eval_failures,bytes_fit,"
    "bytes_evaluate,bytes_total";

std::string metrics_csv(const std::vector<RoundRecord>& rounds);
/// round,wall_time_s
std::string timing_csv(const std::vector<RoundRecord>& rounds);

/// Writes metrics.csv, timing.csv, final_weights.bin and config_echo.ini.
void write_outputs(const ExperimentConfig& config, const RunResult& result, const std::filesystem::path& dir);

struct ReplayRow {
  double sampling_rate = 0.0;
  std::size_t sample_size = 0;
  std::uint64_t fit_ins_bytes = 0;  // one FitIns frame
  std::uint64_t fit_res_bytes = 0;  // one FitRes frame
  std::uint64_t bytes_per_round = 0;
};

struct ReplayReport {
  std::uint64_t weights_bytes = 0;  // encoded Weights payload
  std::vector<ReplayRow> rows;
};

/// Encoded frame sizes of one FitIns and one FitRes for a model whose
/// Weights encoding takes weights_bytes, using the configured strategy's
/// round-1 fit config.
std::pair<std::uint64_t, std::uint64_t> fit_frame_sizes(const ExperimentConfig& config, std::uint64_t weights_bytes);

/// Encoded size of a Weights holding one f32 tensor "dummy" of n elements.
std::uint64_t dummy_weights_bytes(std::uint64_t n);

/// Analytic fit-phase bytes per round, sample_size * (FitIns + FitRes), for
/// every configured sampling rate. No training and no model allocation.
ReplayReport replay_bytes(const ExperimentConfig& config);

std::string replay_csv(const ReplayReport& report);

}  // namespace fl
