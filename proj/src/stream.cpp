#include "fl/stream.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>

namespace fl {

void LoopbackPipe::write(std::span<const std::uint8_t> data) {
  std::unique_lock lock(mu_);
  while (!data.empty()) {
    cv_.wait(lock, [&] { return closed_ || buffer_.size() - head_ < capacity_; });
    if (closed_) throw ConnectionClosed("loopback stream closed");
    if (head_ > 0) {
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(head_));
      head_ = 0;
    }
    const std::size_t n = std::min(data.size(), capacity_ - buffer_.size());
    buffer_.insert(buffer_.end(), data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n));
    total_ += n;
    data = data.subspan(n);
    cv_.notify_all();
  }
}

std::size_t LoopbackPipe::read(std::span<std::uint8_t> out, Deadline deadline) {
  std::unique_lock lock(mu_);
  auto ready = [&] { return closed_ || head_ < buffer_.size(); };
  if (deadline == no_deadline()) {
    cv_.wait(lock, ready);
  } else if (!cv_.wait_until(lock, deadline, ready)) {
    throw TimeoutError("read timed out");
  }
  const std::size_t available = buffer_.size() - head_;
  if (available == 0) return 0;  // closed and drained
  const std::size_t n = std::min(available, out.size());
  std::memcpy(out.data(), buffer_.data() + head_, n);
  head_ += n;
  if (head_ == buffer_.size()) {
    buffer_.clear();
    head_ = 0;
  }
  cv_.notify_all();
  return n;
}

void LoopbackPipe::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  cv_.notify_all();
}

std::uint64_t LoopbackPipe::bytes_written() const {
  std::lock_guard lock(mu_);
  return total_;
}

std::pair<std::unique_ptr<LoopbackStream>, std::unique_ptr<LoopbackStream>> make_loopback_pair(std::size_t capacity) {
  auto a_to_b = std::make_shared<LoopbackPipe>(capacity);
  auto b_to_a = std::make_shared<LoopbackPipe>(capacity);
  return {std::make_unique<LoopbackStream>(b_to_a, a_to_b), std::make_unique<LoopbackStream>(a_to_b, b_to_a)};
}

HostPort parse_address(const std::string& address) {
  HostPort hp;
  std::string port_text;
  if (!address.empty() && address.front() == '[') {
    const auto close = address.find(']');
    if (close == std::string::npos || close + 1 >= address.size() || address[close + 1] != ':') {
      throw std::invalid_argument("malformed address '" + address + "'");
    }
    hp.host = address.substr(1, close - 1);
    port_text = address.substr(close + 2);
  } else {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) throw std::invalid_argument("address '" + address + "' has no port");
    hp.host = address.substr(0, colon);
    port_text = address.substr(colon + 1);
  }
  unsigned value = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), value);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || value > 65535) {
    throw std::invalid_argument("bad port in address '" + address + "'");
  }
  hp.port = static_cast<std::uint16_t>(value);
  return hp;
}

namespace {

struct AddrInfoDeleter {
  void operator()(addrinfo* p) const { freeaddrinfo(p); }
};
using AddrInfoPtr = std::unique_ptr<addrinfo, AddrInfoDeleter>;

AddrInfoPtr resolve(const HostPort& hp, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* result = nullptr;
  const std::string port = std::to_string(hp.port);
  const char* host = hp.host.empty() ? nullptr : hp.host.c_str();
  if (int rc = getaddrinfo(host, port.c_str(), &hints, &result); rc != 0) {
    throw ConnectError("cannot resolve '" + hp.host + "': " + gai_strerror(rc));
  }
  return AddrInfoPtr(result);
}

int poll_timeout_ms(Deadline deadline) {
  if (deadline == no_deadline()) return -1;
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return static_cast<int>(std::clamp<long long>(left, 0, 1 << 30));
}

}  // namespace

TcpStream::TcpStream(int fd) : fd_(fd) {
  int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

TcpStream::~TcpStream() {
  close();
  ::close(fd_);
}

std::size_t TcpStream::read_some(std::span<std::uint8_t> buffer, Deadline deadline) {
  for (;;) {
    pollfd pfd{fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, poll_timeout_ms(deadline));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("poll failed: ") + std::strerror(errno));
    }
    if (rc == 0) throw TimeoutError("read timed out");
    const ssize_t n = ::recv(fd_, buffer.data(), buffer.size(), 0);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return 0;  // reset or shut down: treat as end of stream
    }
    return static_cast<std::size_t>(n);
  }
}

void TcpStream::write_all(std::span<const std::uint8_t> data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw ConnectionClosed(std::string("send failed: ") + std::strerror(errno));
    }
    data = data.subspan(static_cast<std::size_t>(n));
  }
}

void TcpStream::close() {
  std::lock_guard lock(close_mu_);
  if (closed_) return;
  closed_ = true;
  ::shutdown(fd_, SHUT_RDWR);
}

std::unique_ptr<TcpStream> tcp_connect(const std::string& address, std::chrono::milliseconds timeout) {
  const HostPort hp = parse_address(address);
  auto info = resolve(hp, false);
  std::string last_error = "no addresses";
  for (addrinfo* ai = info.get(); ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc < 0 && errno == EINPROGRESS) {
      pollfd pfd{fd, POLLOUT, 0};
      rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
      if (rc == 1) {
        int err = 0;
        socklen_t len = sizeof(err);
        ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
        rc = err == 0 ? 0 : -1;
        errno = err;
      } else {
        rc = -1;
        errno = ETIMEDOUT;
      }
    }
    if (rc == 0) {
      ::fcntl(fd, F_SETFL, flags);
      return std::make_unique<TcpStream>(fd);
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  throw ConnectError("cannot connect to " + address + ": " + last_error);
}

TcpListener::TcpListener(const std::string& address) {
  const HostPort hp = parse_address(address);
  AddrInfoPtr info;
  try {
    info = resolve(hp, true);
  } catch (const ConnectError& e) {
    throw BindError(e.what());
  }
  std::string last_error = "no addresses";
  for (addrinfo* ai = info.get(); ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    if (ai->ai_family == AF_INET6) {
      int zero = 0;
      ::setsockopt(fd, IPPROTO_IPV6, IPV6_V6ONLY, &zero, sizeof(zero));
    }
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 128) == 0) {
      fd_ = fd;
      sockaddr_storage bound{};
      socklen_t len = sizeof(bound);
      ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
      port_ = bound.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&bound)->sin6_port)
                                          : ntohs(reinterpret_cast<sockaddr_in*>(&bound)->sin_port);
      return;
    }
    last_error = std::strerror(errno);
    ::close(fd);
  }
  throw BindError("cannot bind " + address + ": " + last_error);
}

TcpListener::~TcpListener() { close(); }

std::unique_ptr<TcpStream> TcpListener::accept(std::chrono::milliseconds wait) {
  if (fd_ < 0) return nullptr;
  pollfd pfd{fd_, POLLIN, 0};
  const int rc = ::poll(&pfd, 1, static_cast<int>(wait.count()));
  if (rc <= 0 || fd_ < 0) return nullptr;
  const int client = ::accept(fd_, nullptr, nullptr);
  if (client < 0) return nullptr;
  return std::make_unique<TcpStream>(client);
}

void TcpListener::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

}  // namespace fl
