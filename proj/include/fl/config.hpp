#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fl/data.hpp"
#include "fl/sim.hpp"
#include "fl/strategies.hpp"
#include "fl/trainer.hpp"

namespace fl {

/// Invalid or unparsable experiment config. key() is "section.key" where
/// one applies.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key.empty() ? message : key + ": " + message), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

enum class FailureMode { Error, Timeout, Drop };

const char* failure_mode_name(FailureMode mode);

/// Client `client` misbehaves during the fit phase of `round`.
struct FailureInjection {
  std::size_t client = 0;
  int round = 1;
  FailureMode mode = FailureMode::Error;

  friend bool operator==(const FailureInjection&, const FailureInjection&) = default;
};

struct ClientProfile {
  LinkProfile link;
  ComputeProfile compute;
};

struct ExperimentConfig {
  // [experiment]
  int rounds = 1;
  std::size_t num_clients = 10;
  std::uint64_t seed = 0;
  double read_timeout_s = 600.0;
  std::string address = "127.0.0.1:8080";
  std::string output_dir = "out";
  double wait_for_clients_s = 60.0;

  // [strategy]
  std::string strategy = "fedavg";
  FedAvgConfig fedavg;
  std::size_t min_completion = 1;
  double proximal_mu = 0.0;
  double q = 0.0;
  double lipschitz = 1.0;
  double fast_fraction = 0.5;
  double slow_epoch_scale = 0.5;

  // [model]
  Architecture architecture = Architecture::Logistic;
  std::size_t hidden_width = 32;

  // [data]
  std::string data_source = "synthetic";
  std::string csv_path;
  SyntheticSpec synthetic;
  /// Examples generated separately for centralized evaluation; 0 disables it.
  std::size_t holdout_examples = 0;
  /// Trailing share of each client's partition kept for local evaluation.
  double local_test_fraction = 0.2;

  // [partition]
  double iid_fraction = 1.0;

  // [client.N]
  std::map<std::size_t, ClientProfile> client_profiles;

  // [failures]
  std::vector<FailureInjection> failures;

  // [replay]
  /// replay-bytes models a single f32 tensor of this many elements, or an
  /// empty Weights for 0. Unset uses the configured model.
  std::optional<std::uint64_t> dummy_elements;
  std::vector<double> sampling_rates{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};

  /// Cross-field checks. Throws ConfigError naming the offending key.
  void validate() const;

  ClientProfile profile_for(std::size_t client) const;
  std::vector<FailureInjection> failures_for(std::size_t client) const;
};

/// Parses the INI-style text format documented in the README. Unknown
/// sections and keys are errors. The result is validated.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

/// Every resolved setting, in the same format parse_experiment_config reads.
std::string to_ini(const ExperimentConfig& config);

std::unique_ptr<FedAvg> make_strategy(const ExperimentConfig& config);

}  // namespace fl
