#include "fl/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace fl {

void LinkProfile::validate() const {
  if (!(bandwidth_bps > 0.0)) throw std::invalid_argument("bandwidth_bps must be > 0");
  if (!(latency_s >= 0.0)) throw std::invalid_argument("latency_s must be >= 0");
}

void ComputeProfile::validate() const {
  if (!(slowdown >= 1.0)) throw std::invalid_argument("slowdown must be >= 1");
}

TokenBucket::TokenBucket(double bytes_per_second, double burst_seconds)
    : rate_(bytes_per_second),
      capacity_(std::max<std::size_t>(1, static_cast<std::size_t>(bytes_per_second * burst_seconds))),
      last_(Clock::now()) {
  if (!(bytes_per_second > 0.0)) throw std::invalid_argument("token bucket rate must be positive");
}

void TokenBucket::refill(Clock::time_point now) {
  const double elapsed = std::chrono::duration<double>(now - last_).count();
  tokens_ = std::min(static_cast<double>(capacity_), tokens_ + elapsed * rate_);
  last_ = now;
}

void TokenBucket::consume(std::size_t n) {
  if (n > capacity_) throw std::invalid_argument("token request exceeds bucket capacity");
  refill(Clock::now());
  while (tokens_ < static_cast<double>(n)) {
    const double wait = (static_cast<double>(n) - tokens_) / rate_;
    std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    refill(Clock::now());
  }
  tokens_ -= static_cast<double>(n);
}

ShapedStream::ShapedStream(std::unique_ptr<ByteStream> inner, LinkProfile profile)
    : inner_(std::move(inner)), profile_(profile) {
  profile_.validate();
  if (!profile_.is_unlimited()) bucket_ = std::make_unique<TokenBucket>(profile_.bandwidth_bps / 8.0);
}

std::size_t ShapedStream::read_some(std::span<std::uint8_t> buffer, Deadline deadline) {
  return inner_->read_some(buffer, deadline);
}

void ShapedStream::write_all(std::span<const std::uint8_t> data) {
  std::lock_guard lock(write_mu_);
  if (profile_.latency_s > 0.0) std::this_thread::sleep_for(std::chrono::duration<double>(profile_.latency_s));
  if (!bucket_) {
    inner_->write_all(data);
    return;
  }
  while (!data.empty()) {
    const std::size_t n = std::min(data.size(), bucket_->capacity());
    bucket_->consume(n);
    inner_->write_all(data.first(n));
    data = data.subspan(n);
  }
}

void ShapedStream::close() { inner_->close(); }

std::unique_ptr<ByteStream> shape_stream(std::unique_ptr<ByteStream> stream, const LinkProfile& profile) {
  profile.validate();
  if (profile.is_unlimited() && profile.latency_s == 0.0) return stream;
  return std::make_unique<ShapedStream>(std::move(stream), profile);
}

FitFn throttle_compute(FitFn fit, const ComputeProfile& profile) {
  profile.validate();
  if (profile.slowdown == 1.0) return fit;
  return [fit = std::move(fit), slowdown = profile.slowdown](const Weights& w, const ConfigMap& c) {
    const auto t0 = Clock::now();
    FitOutput out = fit(w, c);
    const auto took = Clock::now() - t0;
    std::this_thread::sleep_for(std::chrono::duration<double>(
        (slowdown - 1.0) * std::chrono::duration<double>(took).count()));
    return out;
  };
}

ThrottledClient::ThrottledClient(Client& inner, ComputeProfile profile)
    : inner_(inner),
      fit_(throttle_compute([this](const Weights& w, const ConfigMap& c) { return inner_.fit(w, c); }, profile)) {}

}  // namespace fl
