#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "fl/client.hpp"
#include "fl/client_manager.hpp"
#include "fl/rng.hpp"
#include "fl/stream.hpp"
#include "fl/tensor.hpp"
#include "fl/transport.hpp"

namespace fl::test {

/// 1..max_tensors tensors of random rank, extents, dtype and values.
inline Weights random_weights(Xoshiro256& rng, std::size_t max_tensors = 4, std::uint32_t max_extent = 5) {
  Weights w;
  const std::size_t n = 1 + rng.below(max_tensors);
  for (std::size_t t = 0; t < n; ++t) {
    std::vector<std::uint32_t> shape(rng.below(4));
    std::size_t count = 1;
    for (auto& e : shape) {
      e = static_cast<std::uint32_t>(1 + rng.below(max_extent));
      count *= e;
    }
    const std::string name = "t" + std::to_string(t) + "_" + std::to_string(rng.below(1000));
    if (rng.below(2) == 0) {
      std::vector<float> v(count);
      for (auto& x : v) x = static_cast<float>(rng.normal());
      w.add(Tensor(name, shape, std::move(v)));
    } else {
      std::vector<double> v(count);
      for (auto& x : v) x = rng.normal();
      w.add(Tensor(name, shape, std::move(v)));
    }
  }
  return w;
}

inline Weights vector_weights(std::vector<double> values, std::string name = "w") {
  Weights w;
  const auto n = static_cast<std::uint32_t>(values.size());
  w.add(Tensor(std::move(name), {n}, std::move(values)));
  return w;
}

/// Client defined by callbacks; defaults echo the weights back.
class ScriptedClient : public Client {
 public:
  std::function<FitOutput(const Weights&, const ConfigMap&)> on_fit = [](const Weights& w, const ConfigMap&) {
    return FitOutput{w, 1, {}};
  };
  std::function<EvaluateOutput(const Weights&, const ConfigMap&)> on_evaluate = [](const Weights&, const ConfigMap&) {
    return EvaluateOutput{0.5, 1, {}};
  };
  Weights initial;

  Weights get_weights() override { return initial; }
  FitOutput fit(const Weights& w, const ConfigMap& c) override {
    ++fits;
    return on_fit(w, c);
  }
  EvaluateOutput evaluate(const Weights& w, const ConfigMap& c) override {
    ++evaluations;
    return on_evaluate(w, c);
  }

  std::atomic<int> fits{0};
  std::atomic<int> evaluations{0};
};

/// Clients wired to a ClientManager over in-memory streams, each running
/// the real client app loop on its own thread.
class LoopbackHarness {
 public:
  explicit LoopbackHarness(std::uint64_t seed = 0) : manager(seed) {}
  ~LoopbackHarness() { stop(); }

  /// Registers `client` under `id`; the harness keeps it alive.
  ScriptedClient& add(std::string id, std::unique_ptr<ScriptedClient> client = std::make_unique<ScriptedClient>()) {
    auto [server_end, client_end] = make_loopback_pair();
    streams.push_back(server_end.get());
    auto server_conn = std::make_shared<Connection>(std::move(server_end), id);
    auto client_conn = std::make_shared<Connection>(std::move(client_end), "server");
    server_conns.push_back(server_conn);
    manager.register_client(std::make_shared<ClientHandle>(id, ConfigMap{}, server_conn));
    ScriptedClient& ref = *client;
    clients.push_back(std::move(client));
    threads.emplace_back([client_conn, &ref]() {
      bool dialed = false;
      Dialer dialer = [&]() -> std::shared_ptr<Connection> {
        if (dialed) throw ConnectError("harness clients do not redial");
        dialed = true;
        return client_conn;
      };
      try {
        start_client(dialer, ref);
      } catch (const std::exception&) {
      }
    });
    return ref;
  }

  void stop() {
    for (auto& c : server_conns) c->close();
    for (auto& t : threads) {
      if (t.joinable()) t.join();
    }
  }

  /// Bytes moved in both directions over all server-side streams.
  std::uint64_t stream_bytes() const {
    std::uint64_t total = 0;
    for (auto* s : streams) total += s->bytes_written() + s->bytes_read_side_total();
    return total;
  }

  ClientManager manager;
  std::vector<std::unique_ptr<ScriptedClient>> clients;
  std::vector<std::shared_ptr<Connection>> server_conns;
  std::vector<LoopbackStream*> streams;
  std::vector<std::thread> threads;
};

/// Handles backed by idle loopback connections, for selection-only tests.
struct HandleRegistry {
  std::vector<std::unique_ptr<LoopbackStream>> peers;

  std::shared_ptr<ClientHandle> handle(const std::string& id) {
    auto [a, b] = make_loopback_pair();
    peers.push_back(std::move(b));
    return std::make_shared<ClientHandle>(id, ConfigMap{}, std::make_shared<Connection>(std::move(a), id));
  }
};

inline std::string client_id(std::size_t i) {
  std::string s = std::to_string(i);
  return "c" + std::string(3 - std::min<std::size_t>(3, s.size()), '0') + s;
}

}  // namespace fl::test
