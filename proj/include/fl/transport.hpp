#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "fl/protocol.hpp"
#include "fl/stream.hpp"

namespace fl {

/// The client answered an instruction with ErrorRes. The connection stays open.
class ClientError : public TransportError {
 public:
  ClientError(std::uint16_t code, const std::string& detail)
      : TransportError("client error " + std::to_string(code) + ": " + detail), code_(code) {}
  std::uint16_t code() const noexcept { return code_; }

 private:
  std::uint16_t code_;
};

/// Message channel over one byte stream. Sends and receives are each
/// serialized internally; request() assumes a single logical owner.
class Connection {
 public:
  Connection(std::unique_ptr<ByteStream> stream, std::string peer);
  ~Connection();
  Connection(const Connection&) = delete;
  Connection& operator=(const Connection&) = delete;

  /// Returns the encoded frame length. Throws ConnectionClosed after close().
  std::size_t send(const Message& message);
  /// Throws TimeoutError, ConnectionClosed, or ProtocolError (which also
  /// closes the connection).
  Message receive(Deadline deadline);

  void close();
  bool is_open() const noexcept { return open_.load(); }
  const std::string& peer() const noexcept { return peer_; }

  std::uint64_t bytes_sent() const noexcept { return bytes_sent_.load(); }
  std::uint64_t bytes_received() const noexcept { return bytes_received_.load(); }

 private:
  friend Message request(Connection&, const Message&, std::chrono::milliseconds);

  std::unique_ptr<ByteStream> stream_;
  std::string peer_;
  std::atomic<bool> open_{true};
  std::mutex send_mu_;
  std::mutex recv_mu_;
  FrameDecoder decoder_;
  std::atomic<std::uint64_t> bytes_sent_{0};
  std::atomic<std::uint64_t> bytes_received_{0};
  // Results still owed for instructions whose request timed out; they are
  // discarded when they eventually arrive.
  std::size_t stale_results_ = 0;
};

/// Sends an instruction and waits for its result.
///
/// Returns the matching result variant. Throws ClientError on ErrorRes,
/// TimeoutError when no result arrives within `timeout` (the late result is
/// dropped on a later request), and ConnectionClosed if the stream ends or
/// the client answers with DisconnectRes.
Message request(Connection& conn, const Message& instruction, std::chrono::milliseconds timeout);

struct ServerEndpoint {
  std::string bind_address = "[::]:8080";
  std::size_t max_clients = 1024;
  std::chrono::milliseconds read_timeout{600'000};
};

using ConnectCallback = std::function<void(std::shared_ptr<Connection>, ClientHello)>;

/// Accepts client streams, validates their ClientHello and hands them to the
/// callback. Streams can come from a TCP listener or be attached directly
/// (in-memory loopback); both follow the same handshake path.
class Server {
 public:
  Server(ServerEndpoint endpoint, ConnectCallback on_connect);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting TCP connections. Throws BindError.
  void listen();
  std::uint16_t port() const noexcept { return port_; }

  void attach(std::unique_ptr<ByteStream> stream, std::string peer);

  /// Sends ReconnectIns{0} to every connected client, collects their
  /// DisconnectRes for a short grace period, then closes everything.
  void shutdown();

  std::size_t connected() const;
  const ServerEndpoint& endpoint() const noexcept { return endpoint_; }

 private:
  void handshake(std::unique_ptr<ByteStream> stream, std::string peer);
  void accept_loop();

  ServerEndpoint endpoint_;
  ConnectCallback on_connect_;
  std::unique_ptr<class TcpListener> listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  mutable std::mutex mu_;
  std::vector<std::thread> handshakes_;
  std::vector<std::shared_ptr<Connection>> handshaking_;
  std::vector<std::shared_ptr<Connection>> connections_;
};

/// Starts a TCP server on endpoint.bind_address.
std::unique_ptr<Server> serve(ServerEndpoint endpoint, ConnectCallback on_connect);

/// Dials a TCP address and sends the hello. Throws ConnectError.
std::shared_ptr<Connection> dial(const std::string& address, const ClientHello& hello,
                                 std::chrono::milliseconds connect_timeout = std::chrono::seconds(5));
/// Sends the hello over an already connected stream.
std::shared_ptr<Connection> dial(std::unique_ptr<ByteStream> stream, const ClientHello& hello, std::string peer);

}  // namespace fl
