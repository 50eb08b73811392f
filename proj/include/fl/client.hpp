#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include "fl/protocol.hpp"
#include "fl/tensor.hpp"
#include "fl/transport.hpp"

namespace fl {

struct FitOutput {
  Weights weights;
  std::uint64_t num_examples = 0;
  ConfigMap metrics;
};

struct EvaluateOutput {
  double loss = 0.0;
  std::uint64_t num_examples = 1;
  ConfigMap metrics;
};

/// User-side callbacks driven by the client app loop.
class Client {
 public:
  virtual ~Client() = default;
  virtual Weights get_weights() = 0;
  /// Must return weights with the same layout as the input.
  virtual FitOutput fit(const Weights& weights, const ConfigMap& config) = 0;
  /// Must not change client state.
  virtual EvaluateOutput evaluate(const Weights& weights, const ConfigMap& config) = 0;
};

/// Thrown from a Client callback to make the app loop drop the connection
/// without replying (simulates a device vanishing mid-round).
class DropConnection : public std::runtime_error {
 public:
  DropConnection() : std::runtime_error("connection dropped by client") {}
};

/// ErrorRes codes sent when a callback throws.
inline constexpr std::uint16_t kErrorClientException = 1;
inline constexpr std::uint16_t kErrorUnexpectedMessage = 2;

enum class ClientExit { Shutdown, Dropped };

/// Opens a fresh connection (including the ClientHello).
using Dialer = std::function<std::shared_ptr<Connection>()>;

/// Serves instructions until the server asks for a permanent disconnect.
///
/// GetWeightsIns, FitIns and EvaluateIns are dispatched to the client;
/// exceptions come back as ErrorRes and the loop keeps going.
/// ReconnectIns{s > 0} replies DisconnectRes{ReconnectLater}, closes, sleeps s
/// seconds and redials; ReconnectIns{0} replies DisconnectRes{Shutdown} and
/// returns. Throws TransportError if the connection is lost.
ClientExit start_client(const Dialer& dial, Client& client);

/// TCP convenience: dials `address` ("host:port", "[::1]:8080") as
/// `client_name`, retrying refused connections for up to connect_wait.
ClientExit start_client(const std::string& address, Client& client, const std::string& client_name,
                        std::chrono::milliseconds connect_wait = std::chrono::seconds(30));

}  // namespace fl
