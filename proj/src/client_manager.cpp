#include "fl/client_manager.hpp"

#include <algorithm>

#include "fl/rng.hpp"

namespace fl {

const char* outcome_name(Outcome outcome) {
  switch (outcome) {
    case Outcome::Success: return "success";
    case Outcome::ClientError: return "client_error";
    case Outcome::Timeout: return "timeout";
    case Outcome::Disconnected: return "disconnected";
    case Outcome::ProtocolViolation: return "protocol_violation";
  }
  return "unknown";
}

ClientHandle::ClientHandle(std::string id, ConfigMap capabilities, std::shared_ptr<Connection> connection)
    : id_(std::move(id)), capabilities_(std::move(capabilities)), connection_(std::move(connection)) {}

void ClientHandle::record(const HistoryEntry& entry) {
  std::lock_guard lock(mu_);
  history_.push_back(entry);
}

std::vector<HistoryEntry> ClientHandle::history() const {
  std::lock_guard lock(mu_);
  return history_;
}

std::optional<double> ClientHandle::trailing_fit_duration(std::size_t window) const {
  std::lock_guard lock(mu_);
  double sum = 0.0;
  std::size_t n = 0;
  for (auto it = history_.rbegin(); it != history_.rend() && n < window; ++it) {
    if (it->phase != Phase::Fit) continue;
    sum += it->duration_s;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

ClientManager::ClientManager(std::uint64_t seed, std::chrono::milliseconds sample_wait)
    : seed_(seed), sample_wait_(sample_wait) {}

void ClientManager::register_client(std::shared_ptr<ClientHandle> handle) {
  std::shared_ptr<ClientHandle> evicted;
  {
    std::lock_guard lock(mu_);
    auto& slot = clients_[handle->id()];
    evicted = std::move(slot);
    slot = std::move(handle);
  }
  if (evicted) evicted->connection().close();
  cv_.notify_all();
}

void ClientManager::unregister(const std::string& id) {
  std::shared_ptr<ClientHandle> removed;
  {
    std::lock_guard lock(mu_);
    auto it = clients_.find(id);
    if (it == clients_.end()) return;
    removed = std::move(it->second);
    clients_.erase(it);
  }
  removed->connection().close();
  cv_.notify_all();
}

std::size_t ClientManager::count_connected_locked() const {
  return static_cast<std::size_t>(
      std::count_if(clients_.begin(), clients_.end(), [](const auto& kv) { return kv.second->is_connected(); }));
}

std::size_t ClientManager::num_available() const {
  std::lock_guard lock(mu_);
  return count_connected_locked();
}

bool ClientManager::wait_for(std::size_t n, std::chrono::milliseconds wait) const {
  std::unique_lock lock(mu_);
  if (wait.count() <= 0) return count_connected_locked() >= n;
  // Closures are not signalled through the manager, so poll as a fallback.
  const auto deadline = std::chrono::steady_clock::now() + wait;
  while (count_connected_locked() < n) {
    if (std::chrono::steady_clock::now() >= deadline) return false;
    cv_.wait_until(lock, std::min(deadline, std::chrono::steady_clock::now() + std::chrono::milliseconds(50)));
  }
  return true;
}

std::vector<std::shared_ptr<ClientHandle>> ClientManager::all() const {
  std::lock_guard lock(mu_);
  std::vector<std::shared_ptr<ClientHandle>> out;
  out.reserve(clients_.size());
  for (const auto& [id, handle] : clients_) {
    if (handle->is_connected()) out.push_back(handle);
  }
  return out;
}

std::vector<std::shared_ptr<ClientHandle>> ClientManager::sample(std::size_t k, std::uint64_t stream) const {
  if (k == 0) throw std::invalid_argument("sample size must be >= 1");
  if (!wait_for(k, sample_wait_)) {
    throw InsufficientClients("need " + std::to_string(k) + " clients, " + std::to_string(num_available()) +
                              " connected");
  }
  auto pool = all();
  if (pool.size() < k) {
    throw InsufficientClients("need " + std::to_string(k) + " clients, " + std::to_string(pool.size()) +
                              " connected");
  }
  Xoshiro256 rng(derive_seed(seed_, {stream}));
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace fl
