#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fl/strategy.hpp"

namespace fl {

class AggregationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- aggregation rules -------------------------------------------------------

/// Example-weighted mean sum(n_k * w_k) / sum(n_k), accumulated in double in
/// ascending client-id order so the result is independent of result order,
/// then clamped elementwise to [min_k w_k, max_k w_k]. Output tensors keep the input dtype. Throws AggregationError on empty
/// input, mismatched layouts, or sum(n_k) == 0.
Weights fedavg_aggregate(std::span<const FitResult> results);

/// nullopt when fewer than min_completion results arrived.
std::optional<Weights> fault_tolerant_aggregate(std::span<const FitResult> results, std::size_t min_completion);

struct QFedAvgInput {
  std::string client_id;
  const Weights* weights = nullptr;
  double train_loss = 0.0;  // F_k, clipped below at kLossFloor
};

/// Fairness-weighted update (q-FFL):
///   delta_k = L * (global - w_k)
///   h_k     = q * F_k^(q-1) * ||delta_k||^2 + L * F_k^q
///   global' = global - sum_k F_k^q * delta_k / sum_k h_k
/// ||.|| is the l2 norm over all tensors concatenated. Double precision
/// throughout, ascending client-id order.
Weights qfedavg_aggregate(const Weights& global, std::span<const QFedAvgInput> inputs, double q, double lipschitz);

inline constexpr double kLossFloor = 1e-10;

/// Example-weighted mean loss and accuracy ("accuracy" metric, 0 if absent).
std::optional<EvaluateAggregate> weighted_loss_avg(std::span<const EvaluateResult> results);

/// Mean pairwise l2 distance between client models; 0 with fewer than two.
double mean_pairwise_distance(std::span<const FitResult> results);

// --- built-in strategies -------------------------------------------------------

struct FedAvgConfig {
  std::size_t clients_per_round = 10;
  /// Clients sampled for distributed evaluation; 0 disables it.
  std::size_t eval_clients = 10;
  int local_epochs = 1;
  double learning_rate = 0.1;
  /// Sent to clients when > 0; clients default to 32.
  int batch_size = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Samples C clients uniformly, sends everyone the same instruction and
/// aggregates by example-weighted mean.
class FedAvg : public Strategy {
 public:
  explicit FedAvg(FedAvgConfig config);

  std::string name() const override { return "fedavg"; }
  std::vector<FitInstruction> configure_fit(int round, const Weights& global, ClientManager& clients) override;
  std::vector<EvaluateInstruction> configure_evaluate(int round, const Weights& global,
                                                      ClientManager& clients) override;
  FitAggregate aggregate_fit(int round, std::span<const FitResult> results,
                             std::span<const Failure> failures) override;
  std::optional<EvaluateAggregate> aggregate_evaluate(int round, std::span<const EvaluateResult> results,
                                                      std::span<const Failure> failures) override;

  const FedAvgConfig& config() const noexcept { return config_; }

  /// {"epochs", "lr", "round", "seed"[, "batch_size"]}; subclasses add keys.
  virtual ConfigMap fit_config(int round) const;
  /// {"round"}
  virtual ConfigMap evaluate_config(int round) const;

 protected:
  std::uint64_t sample_stream(int round, std::uint64_t phase) const;

  FedAvgConfig config_;
};

/// FedAvg that rejects a round unless at least min_completion clients
/// succeed.
class FaultTolerantFedAvg : public FedAvg {
 public:
  FaultTolerantFedAvg(FedAvgConfig config, std::size_t min_completion);

  std::string name() const override { return "fault_tolerant"; }
  FitAggregate aggregate_fit(int round, std::span<const FitResult> results,
                             std::span<const Failure> failures) override;

  std::size_t min_completion() const noexcept { return min_completion_; }

 private:
  std::size_t min_completion_;
};

/// FedAvg on the server; ships the proximal coefficient as "proximal_mu" so
/// clients add (mu/2)||w - w_global||^2 to their objective.
class FedProx : public FedAvg {
 public:
  FedProx(FedAvgConfig config, double proximal_mu);

  std::string name() const override { return "fedprox"; }
  double proximal_mu() const noexcept { return mu_; }
  ConfigMap fit_config(int round) const override;

 private:
  double mu_;
};

/// q-fair aggregation. Clients must report "train_loss"; results without it
/// are excluded and counted in FitAggregate::excluded.
class QFedAvg : public FedAvg {
 public:
  QFedAvg(FedAvgConfig config, double q, double lipschitz);

  std::string name() const override { return "qfedavg"; }
  std::vector<FitInstruction> configure_fit(int round, const Weights& global, ClientManager& clients) override;
  FitAggregate aggregate_fit(int round, std::span<const FitResult> results,
                             std::span<const Failure> failures) override;

 private:
  double q_;
  double lipschitz_;
  Weights global_;  // model the current round's clients started from
};

/// Straggler-aware scheduling. This is an interpretation: rank clients by
/// the trailing mean of their observed fit durations (no history ranks
/// fastest), take the fastest ceil(fast_fraction * C), fill the remaining
/// slots uniformly at random, and give filled-in clients that are slower
/// than every fast pick a reduced epoch budget
/// max(1, round(E * slow_epoch_scale)).
class FedFS : public FedAvg {
 public:
  FedFS(FedAvgConfig config, double fast_fraction, double slow_epoch_scale, std::size_t history_window = 3);

  std::string name() const override { return "fedfs"; }
  std::vector<FitInstruction> configure_fit(int round, const Weights& global, ClientManager& clients) override;

  int slow_epochs() const;

 private:
  double fast_fraction_;
  double slow_epoch_scale_;
  std::size_t history_window_;
};

}  // namespace fl
