#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fl/client_manager.hpp"
#include "fl/strategy.hpp"

namespace fl {

/// Per-round metrics. num_success + num_failures == num_selected always
/// refers to the fit phase; evaluation has its own counters.
struct RoundRecord {
  int round = 0;
  std::size_t num_selected = 0;
  std::size_t num_success = 0;
  std::size_t num_failures = 0;
  /// False for a no-update round (global model carried over).
  bool updated = false;
  std::size_t num_excluded = 0;
  double update_divergence = 0.0;

  std::size_t eval_selected = 0;
  std::size_t eval_success = 0;
  std::size_t eval_failures = 0;
  bool eval_failed = false;
  std::optional<double> loss;
  std::optional<double> accuracy;
  std::optional<double> centralized_loss;
  std::optional<double> centralized_accuracy;

  std::uint64_t bytes_fit = 0;
  std::uint64_t bytes_evaluate = 0;
  std::uint64_t bytes_total = 0;
  double wall_time_s = 0.0;
};

/// Field-wise equality on everything except wall_time_s.
bool same_outcome(const RoundRecord& a, const RoundRecord& b);

struct ServerConfig {
  int num_rounds = 1;
  std::chrono::milliseconds read_timeout{600'000};
  /// run() waits for this many connected clients before round 1.
  std::size_t min_available_clients = 1;
  std::chrono::milliseconds availability_wait{60'000};
  /// Seeds the ClientManager's sampling streams.
  std::uint64_t seed = 0;

  void validate() const;
};

struct FitRoundOutcome {
  /// nullopt: the strategy declined to update.
  std::optional<Weights> weights;
  RoundRecord record;
};

struct EvaluateRoundOutcome {
  std::optional<EvaluateAggregate> aggregate;
  RoundRecord record;
};

/// One training round: the strategy picks clients and instructions, all
/// FitIns go out concurrently, results and failures are collected and passed
/// back to the strategy for aggregation. Client failures (errors, timeouts,
/// disconnects) are recorded, never thrown; InsufficientClients propagates.
FitRoundOutcome fit_round(Strategy& strategy, ClientManager& clients, const Weights& global, int round,
                          std::chrono::milliseconds timeout);

/// Distributed evaluation of `global`, analogous to fit_round.
EvaluateRoundOutcome evaluate_round(Strategy& strategy, ClientManager& clients, const Weights& global, int round,
                                    std::chrono::milliseconds timeout);

/// (loss, accuracy) on server-held data.
using CentralizedEval = std::function<std::pair<double, double>(const Weights&)>;

struct RunResult {
  std::vector<RoundRecord> rounds;
  Weights final_weights;
  bool completed = false;
  std::string error;
};

/// Runs num_rounds rounds of fit then evaluate. Evaluation problems are
/// recorded but never stop training; running out of clients stops the run
/// and returns the rounds completed so far.
RunResult run(Strategy& strategy, ClientManager& clients, const ServerConfig& config, Weights initial,
              const CentralizedEval& centralized = {});

}  // namespace fl
