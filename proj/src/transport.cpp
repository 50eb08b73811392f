#include "fl/transport.hpp"

#include <algorithm>

#include "fl/stream.hpp"

namespace fl {

Connection::Connection(std::unique_ptr<ByteStream> stream, std::string peer)
    : stream_(std::move(stream)), peer_(std::move(peer)) {}

Connection::~Connection() { close(); }

std::size_t Connection::send(const Message& message) {
  const std::vector<std::uint8_t> frame = encode_message(message);
  std::lock_guard lock(send_mu_);
  if (!is_open()) throw ConnectionClosed("connection to " + peer_ + " is closed");
  try {
    stream_->write_all(frame);
  } catch (const ConnectionClosed&) {
    close();
    throw;
  }
  bytes_sent_ += frame.size();
  return frame.size();
}

Message Connection::receive(Deadline deadline) {
  std::lock_guard lock(recv_mu_);
  std::vector<std::uint8_t> chunk(std::size_t{1} << 20);
  for (;;) {
    try {
      if (auto m = decoder_.next()) {
        bytes_received_ += decoder_.last_frame_size();
        return std::move(*m);
      }
    } catch (const ProtocolError&) {
      close();
      throw;
    }
    if (!is_open() && decoder_.buffered() == 0) throw ConnectionClosed("connection to " + peer_ + " is closed");
    const std::size_t n = stream_->read_some(chunk, deadline);
    if (n == 0) {
      close();
      throw ConnectionClosed("connection to " + peer_ + " closed by peer");
    }
    decoder_.feed(std::span<const std::uint8_t>(chunk.data(), n));
  }
}

void Connection::close() {
  if (open_.exchange(false)) stream_->close();
}

namespace {

MessageType expected_result(const Message& instruction) {
  switch (message_type(instruction)) {
    case MessageType::GetWeightsIns: return MessageType::GetWeightsRes;
    case MessageType::FitIns: return MessageType::FitRes;
    case MessageType::EvaluateIns: return MessageType::EvaluateRes;
    case MessageType::ReconnectIns: return MessageType::DisconnectRes;
    default: throw std::logic_error("request() needs an instruction, got " + std::string(message_name(instruction)));
  }
}

bool is_result(MessageType t) {
  return t == MessageType::GetWeightsRes || t == MessageType::FitRes || t == MessageType::EvaluateRes ||
         t == MessageType::ErrorRes;
}

}  // namespace

Message request(Connection& conn, const Message& instruction, std::chrono::milliseconds timeout) {
  const MessageType want = expected_result(instruction);
  conn.send(instruction);
  const Deadline deadline = deadline_after(timeout);
  for (;;) {
    Message reply;
    try {
      reply = conn.receive(deadline);
    } catch (const TimeoutError&) {
      ++conn.stale_results_;
      throw;
    }
    const MessageType got = message_type(reply);
    if (got == MessageType::DisconnectRes && want != MessageType::DisconnectRes) {
      conn.close();
      throw ConnectionClosed("client " + conn.peer() + " disconnected");
    }
    if (is_result(got) && conn.stale_results_ > 0) {
      --conn.stale_results_;
      continue;
    }
    if (got == MessageType::ErrorRes) {
      const auto& err = std::get<ErrorRes>(reply);
      throw ClientError(err.code, err.detail);
    }
    if (got == want) return reply;
    conn.close();
    throw ProtocolError("expected " + std::string(message_name(want)) + " but received " +
                        std::string(message_name(got)));
  }
}

Server::Server(ServerEndpoint endpoint, ConnectCallback on_connect)
    : endpoint_(std::move(endpoint)), on_connect_(std::move(on_connect)) {
  if (endpoint_.max_clients < 1) throw std::invalid_argument("max_clients must be >= 1");
}

Server::~Server() { shutdown(); }

void Server::listen() {
  listener_ = std::make_unique<TcpListener>(endpoint_.bind_address);
  port_ = listener_->port();
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void Server::accept_loop() {
  while (!stopping_.load()) {
    auto stream = listener_->accept(std::chrono::milliseconds(100));
    if (stream) attach(std::move(stream), "tcp");
  }
  listener_->close();
}

void Server::attach(std::unique_ptr<ByteStream> stream, std::string peer) {
  std::lock_guard lock(mu_);
  if (stopping_.load()) {
    stream->close();
    return;
  }
  handshakes_.emplace_back([this, s = std::move(stream), p = std::move(peer)]() mutable {
    handshake(std::move(s), std::move(p));
  });
}

void Server::handshake(std::unique_ptr<ByteStream> stream, std::string peer) {
  auto conn = std::make_shared<Connection>(std::move(stream), std::move(peer));
  {
    // Tracked before the hello arrives so shutdown can interrupt the wait.
    std::lock_guard lock(mu_);
    if (stopping_.load()) return;
    handshaking_.push_back(conn);
  }
  ClientHello hello;
  bool accepted = false;
  try {
    Message first = conn->receive(deadline_after(endpoint_.read_timeout));
    if (auto* h = std::get_if<ClientHello>(&first)) {
      hello = std::move(*h);
      accepted = true;
    }
  } catch (const std::exception&) {
  }
  {
    std::lock_guard lock(mu_);
    std::erase(handshaking_, conn);
    std::erase_if(connections_, [](const auto& c) { return !c->is_open(); });
    if (stopping_.load() || connections_.size() >= endpoint_.max_clients) accepted = false;
    if (!accepted) {
      conn->close();
      return;
    }
    connections_.push_back(conn);
  }
  on_connect_(conn, std::move(hello));
}

void Server::shutdown() {
  if (stopping_.exchange(true)) return;
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::shared_ptr<Connection>> conns;
  {
    std::lock_guard lock(mu_);
    for (auto& c : handshaking_) c->close();
    conns = connections_;
  }
  for (auto& c : conns) {
    if (!c->is_open()) continue;
    try {
      c->send(ReconnectIns{0});
    } catch (const std::exception&) {
    }
  }
  const Deadline grace = Clock::now() + std::chrono::seconds(2);
  for (auto& c : conns) {
    try {
      while (c->is_open()) {
        if (std::holds_alternative<DisconnectRes>(c->receive(grace))) break;
      }
    } catch (const std::exception&) {
    }
    c->close();
  }
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(mu_);
    threads.swap(handshakes_);
  }
  for (auto& t : threads) {
    if (t.joinable()) t.join();
  }
}

std::size_t Server::connected() const {
  std::lock_guard lock(mu_);
  return static_cast<std::size_t>(
      std::count_if(connections_.begin(), connections_.end(), [](const auto& c) { return c->is_open(); }));
}

std::unique_ptr<Server> serve(ServerEndpoint endpoint, ConnectCallback on_connect) {
  auto server = std::make_unique<Server>(std::move(endpoint), std::move(on_connect));
  server->listen();
  return server;
}

std::shared_ptr<Connection> dial(const std::string& address, const ClientHello& hello,
                                 std::chrono::milliseconds connect_timeout) {
  return dial(tcp_connect(address, connect_timeout), hello, address);
}

std::shared_ptr<Connection> dial(std::unique_ptr<ByteStream> stream, const ClientHello& hello, std::string peer) {
  auto conn = std::make_shared<Connection>(std::move(stream), std::move(peer));
  conn->send(hello);
  return conn;
}

}  // namespace fl
