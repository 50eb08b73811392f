#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fl {

using Clock = std::chrono::steady_clock;
using Deadline = Clock::time_point;

inline Deadline no_deadline() { return Deadline::max(); }
inline Deadline deadline_after(std::chrono::milliseconds d) {
  if (d.count() <= 0 || d >= std::chrono::hours(24 * 365)) return no_deadline();
  return Clock::now() + d;
}

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The peer or the local side closed the stream.
class ConnectionClosed : public TransportError {
 public:
  using TransportError::TransportError;
};

/// No data before the read deadline (a laggard client).
class TimeoutError : public TransportError {
 public:
  using TransportError::TransportError;
};

/// Could not establish a connection; callers may retry.
class ConnectError : public TransportError {
 public:
  using TransportError::TransportError;
};

/// Reliable, in-order, bidirectional byte stream.
class ByteStream {
 public:
  virtual ~ByteStream() = default;

  /// Blocks until at least one byte is available. Returns 0 at end of stream;
  /// throws TimeoutError when the deadline passes first.
  virtual std::size_t read_some(std::span<std::uint8_t> buffer, Deadline deadline) = 0;
  /// Throws ConnectionClosed if the stream is closed.
  virtual void write_all(std::span<const std::uint8_t> data) = 0;
  /// Closes both directions and wakes blocked readers and writers.
  virtual void close() = 0;
};

/// One direction of an in-memory stream with bounded capacity.
class LoopbackPipe {
 public:
  explicit LoopbackPipe(std::size_t capacity) : capacity_(capacity) {}

  void write(std::span<const std::uint8_t> data);
  std::size_t read(std::span<std::uint8_t> out, Deadline deadline);
  void close();
  std::uint64_t bytes_written() const;

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::uint8_t> buffer_;
  std::size_t head_ = 0;
  std::size_t capacity_;
  bool closed_ = false;
  std::uint64_t total_ = 0;
};

class LoopbackStream : public ByteStream {
 public:
  LoopbackStream(std::shared_ptr<LoopbackPipe> inbound, std::shared_ptr<LoopbackPipe> outbound)
      : in_(std::move(inbound)), out_(std::move(outbound)) {}
  ~LoopbackStream() override { close(); }

  std::size_t read_some(std::span<std::uint8_t> buffer, Deadline deadline) override {
    return in_->read(buffer, deadline);
  }
  void write_all(std::span<const std::uint8_t> data) override { out_->write(data); }
  void close() override {
    in_->close();
    out_->close();
  }

  /// Bytes this end has written / the peer has written towards it.
  std::uint64_t bytes_written() const { return out_->bytes_written(); }
  std::uint64_t bytes_read_side_total() const { return in_->bytes_written(); }

 private:
  std::shared_ptr<LoopbackPipe> in_;
  std::shared_ptr<LoopbackPipe> out_;
};

/// Connected pair of in-memory streams (first <-> second).
std::pair<std::unique_ptr<LoopbackStream>, std::unique_ptr<LoopbackStream>> make_loopback_pair(
    std::size_t capacity = std::size_t{8} << 20);

/// "host:port" with IPv6 literals in brackets, e.g. "[::]:8080".
struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};
HostPort parse_address(const std::string& address);

class TcpStream : public ByteStream {
 public:
  explicit TcpStream(int fd);
  ~TcpStream() override;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;

  std::size_t read_some(std::span<std::uint8_t> buffer, Deadline deadline) override;
  void write_all(std::span<const std::uint8_t> data) override;
  void close() override;

 private:
  int fd_;
  std::mutex close_mu_;
  bool closed_ = false;
};

/// Throws ConnectError on refusal or when the deadline passes.
std::unique_ptr<TcpStream> tcp_connect(const std::string& address, std::chrono::milliseconds timeout);

class BindError : public TransportError {
 public:
  using TransportError::TransportError;
};

class TcpListener {
 public:
  /// Throws BindError when the address cannot be bound.
  explicit TcpListener(const std::string& address);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  /// Waits up to `wait` for a connection; nullptr on timeout or after close().
  std::unique_ptr<TcpStream> accept(std::chrono::milliseconds wait);
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace fl
