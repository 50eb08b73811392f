#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fl/client_manager.hpp"
#include "fl/protocol.hpp"
#include "fl/tensor.hpp"

namespace fl {

struct FitInstruction {
  std::shared_ptr<ClientHandle> client;
  FitIns ins;
};

struct EvaluateInstruction {
  std::shared_ptr<ClientHandle> client;
  EvaluateIns ins;
};

struct FitResult {
  std::string client_id;
  Weights weights;
  std::uint64_t num_examples = 0;
  ConfigMap metrics;
};

struct EvaluateResult {
  std::string client_id;
  double loss = 0.0;
  std::uint64_t num_examples = 1;
  ConfigMap metrics;
};

struct Failure {
  std::string client_id;
  Outcome outcome = Outcome::ClientError;
  std::string detail;
};

/// What aggregate_fit decided. An empty `weights` is a no-update round: the
/// previous global model carries over.
struct FitAggregate {
  std::optional<Weights> weights;
  /// Results left out of the aggregate (e.g. missing a metric the rule needs).
  std::size_t excluded = 0;
};

struct EvaluateAggregate {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Server plug-in deciding selection, per-client instructions and
/// aggregation. Called only from the round-loop thread; implementations must
/// not keep references to results after returning.
class Strategy {
 public:
  virtual ~Strategy() = default;

  virtual std::string name() const = 0;
  virtual std::vector<FitInstruction> configure_fit(int round, const Weights& global, ClientManager& clients) = 0;
  virtual std::vector<EvaluateInstruction> configure_evaluate(int round, const Weights& global,
                                                              ClientManager& clients) = 0;
  virtual FitAggregate aggregate_fit(int round, std::span<const FitResult> results,
                                     std::span<const Failure> failures) = 0;
  /// nullopt when there is nothing to aggregate.
  virtual std::optional<EvaluateAggregate> aggregate_evaluate(int round, std::span<const EvaluateResult> results,
                                                              std::span<const Failure> failures) = 0;
};

}  // namespace fl
