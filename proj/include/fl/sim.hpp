#pragma once

#include <chrono>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>

#include "fl/client.hpp"
#include "fl/stream.hpp"

namespace fl {

struct LinkProfile {
  /// Sustained rate in bits per second; infinity disables shaping.
  double bandwidth_bps = std::numeric_limits<double>::infinity();
  /// Extra delay before the first byte of every write.
  double latency_s = 0.0;

  static LinkProfile unlimited() { return {}; }
  bool is_unlimited() const noexcept { return bandwidth_bps == std::numeric_limits<double>::infinity(); }
  void validate() const;
};

struct ComputeProfile {
  /// Multiplier on fit wall time; 1 leaves it unchanged.
  double slowdown = 1.0;
  void validate() const;
};

/// Token bucket in bytes. Holds at most `burst_seconds` worth of tokens and
/// starts empty, so a transfer of B bytes takes at least
/// (B - burst) / rate seconds after the first refill.
class TokenBucket {
 public:
  TokenBucket(double bytes_per_second, double burst_seconds = 0.1);

  /// Blocks until n bytes may be sent (n must not exceed capacity()).
  void consume(std::size_t n);
  std::size_t capacity() const noexcept { return capacity_; }

 private:
  void refill(Clock::time_point now);

  double rate_;
  std::size_t capacity_;
  double tokens_ = 0.0;
  Clock::time_point last_;
};

/// Rate-limits writes on a wrapped stream; reads pass through. Content and
/// order are never changed.
class ShapedStream : public ByteStream {
 public:
  ShapedStream(std::unique_ptr<ByteStream> inner, LinkProfile profile);

  std::size_t read_some(std::span<std::uint8_t> buffer, Deadline deadline) override;
  void write_all(std::span<const std::uint8_t> data) override;
  void close() override;

 private:
  std::unique_ptr<ByteStream> inner_;
  LinkProfile profile_;
  std::unique_ptr<TokenBucket> bucket_;
  std::mutex write_mu_;
};

/// Returns `stream` unchanged for an unlimited profile, else a ShapedStream.
std::unique_ptr<ByteStream> shape_stream(std::unique_ptr<ByteStream> stream, const LinkProfile& profile);

using FitFn = std::function<FitOutput(const Weights&, const ConfigMap&)>;

/// Wraps fit so that after measuring its own duration t it sleeps
/// (slowdown - 1) * t before returning the unchanged result.
FitFn throttle_compute(FitFn fit, const ComputeProfile& profile);

/// Client decorator applying throttle_compute to fit.
class ThrottledClient : public Client {
 public:
  ThrottledClient(Client& inner, ComputeProfile profile);

  Weights get_weights() override { return inner_.get_weights(); }
  FitOutput fit(const Weights& weights, const ConfigMap& config) override { return fit_(weights, config); }
  EvaluateOutput evaluate(const Weights& weights, const ConfigMap& config) override {
    return inner_.evaluate(weights, config);
  }

 private:
  Client& inner_;
  FitFn fit_;
};

}  // namespace fl
