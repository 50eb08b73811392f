#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fl/protocol.hpp"
#include "fl/transport.hpp"

namespace fl {

enum class Phase : std::uint8_t { Fit, Evaluate };

enum class Outcome : std::uint8_t { Success, ClientError, Timeout, Disconnected, ProtocolViolation };

const char* outcome_name(Outcome outcome);

struct HistoryEntry {
  int round = 0;
  Phase phase = Phase::Fit;
  double duration_s = 0.0;
  std::uint64_t bytes_up = 0;    // client -> server
  std::uint64_t bytes_down = 0;  // server -> client
  Outcome outcome = Outcome::Success;
};

/// Server-side proxy for one connected client.
class ClientHandle {
 public:
  ClientHandle(std::string id, ConfigMap capabilities, std::shared_ptr<Connection> connection);

  const std::string& id() const noexcept { return id_; }
  const ConfigMap& capabilities() const noexcept { return capabilities_; }
  Connection& connection() const noexcept { return *connection_; }
  bool is_connected() const noexcept { return connection_->is_open(); }

  void record(const HistoryEntry& entry);
  std::vector<HistoryEntry> history() const;
  /// Mean duration of the last `window` fit attempts; nullopt without history.
  std::optional<double> trailing_fit_duration(std::size_t window) const;

 private:
  std::string id_;
  ConfigMap capabilities_;
  std::shared_ptr<Connection> connection_;
  mutable std::mutex mu_;
  std::vector<HistoryEntry> history_;
};

class InsufficientClients : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thread-safe registry of connected clients, keyed and ordered by id.
class ClientManager {
 public:
  explicit ClientManager(std::uint64_t seed = 0, std::chrono::milliseconds sample_wait = std::chrono::seconds(0));

  /// A handle with an id already present evicts (and closes) the old one.
  void register_client(std::shared_ptr<ClientHandle> handle);
  /// Closes the client's connection; unknown ids are ignored.
  void unregister(const std::string& id);

  std::size_t num_available() const;
  /// Blocks until at least n clients are connected or the wait elapses.
  bool wait_for(std::size_t n, std::chrono::milliseconds wait) const;

  /// Connected clients ordered by id.
  std::vector<std::shared_ptr<ClientHandle>> all() const;

  /// k distinct connected clients drawn uniformly without replacement. The
  /// draw is a partial Fisher-Yates shuffle of all() seeded from (seed,
  /// stream), so it is reproducible for an unchanged registry, and sample(k)
  /// is a prefix of sample(n) for the same stream. Throws InsufficientClients
  /// if fewer than k connect within the sample wait.
  std::vector<std::shared_ptr<ClientHandle>> sample(std::size_t k, std::uint64_t stream) const;

  std::uint64_t seed() const noexcept { return seed_; }
  void set_sample_wait(std::chrono::milliseconds wait) { sample_wait_ = wait; }

 private:
  std::size_t count_connected_locked() const;

  std::uint64_t seed_;
  std::chrono::milliseconds sample_wait_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::map<std::string, std::shared_ptr<ClientHandle>> clients_;
};

}  // namespace fl
