#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <thread>

#include "fl/sim.hpp"
#include "helpers.hpp"

namespace fl {
namespace {

using namespace std::chrono_literals;
using Seconds = std::chrono::duration<double>;

std::vector<std::uint8_t> read_n(ByteStream& s, std::size_t n) {
  std::vector<std::uint8_t> out(n);
  std::size_t got = 0;
  while (got < n) got += s.read_some(std::span(out).subspan(got), deadline_after(30s));
  return out;
}

TEST(TokenBucketTest, CapacityAndRate) {
  TokenBucket b(1000.0, 0.1);
  EXPECT_EQ(b.capacity(), 100u);
  const auto t0 = Clock::now();
  // starts empty: 300 bytes at 1000 B/s take about 0.3 s
  for (int i = 0; i < 3; ++i) b.consume(100);
  const double t = Seconds(Clock::now() - t0).count();
  EXPECT_GE(t, 0.28);
  EXPECT_LT(t, 0.6);
  EXPECT_THROW(TokenBucket(0.0), std::invalid_argument);
}

TEST(LinkProfileTest, Validation) {
  EXPECT_TRUE(LinkProfile::unlimited().is_unlimited());
  EXPECT_THROW((LinkProfile{-1, 0}.validate()), std::invalid_argument);
  EXPECT_THROW((LinkProfile{1e6, -1}.validate()), std::invalid_argument);
  EXPECT_THROW(ComputeProfile{0.5}.validate(), std::invalid_argument);
}

TEST(ShapedStreamTest, UnlimitedIsPassThrough) {
  auto [a, b] = make_loopback_pair();
  auto* raw = a.get();
  auto s = shape_stream(std::move(a), LinkProfile::unlimited());
  EXPECT_EQ(s.get(), raw);
}

// Property: shaping never changes content or order.
TEST(ShapedStreamTest, TransparentForContent) {
  auto [a, b] = make_loopback_pair();
  auto s = shape_stream(std::move(a), LinkProfile{8e6, 0.001});
  Xoshiro256 rng(3);
  std::vector<std::uint8_t> sent;
  for (int i = 0; i < 50; ++i) {
    std::vector<std::uint8_t> chunk(rng.below(5000));
    for (auto& x : chunk) x = static_cast<std::uint8_t>(rng.below(256));
    s->write_all(chunk);
    sent.insert(sent.end(), chunk.begin(), chunk.end());
  }
  EXPECT_EQ(read_n(*b, sent.size()), sent);
  // reads pass through unshaped
  const std::vector<std::uint8_t> back{1, 2, 3};
  b->write_all(back);
  EXPECT_EQ(read_n(*s, 3), back);
}

TEST(ShapedStreamTest, ThroughputWithinTenPercent) {
  auto [a, b] = make_loopback_pair();
  const double bps = 16e6;  // 2 MB/s
  auto s = shape_stream(std::move(a), LinkProfile{bps, 0.0});
  const std::size_t n = 2'000'000;
  std::vector<std::uint8_t> payload(n, 7);
  std::thread reader([&, &b = b] { read_n(*b, n); });
  const auto t0 = Clock::now();
  s->write_all(payload);
  reader.join();
  const double t = Seconds(Clock::now() - t0).count();
  const double expected = n * 8.0 / bps;
  EXPECT_NEAR(t, expected, 0.1 * expected);
}

TEST(ShapedStreamTest, LatencyPerWrite) {
  auto [a, b] = make_loopback_pair();
  auto s = shape_stream(std::move(a), LinkProfile{1e12, 0.05});
  const std::vector<std::uint8_t> one{1};
  const auto t0 = Clock::now();
  for (int i = 0; i < 4; ++i) s->write_all(one);
  EXPECT_GE(Seconds(Clock::now() - t0).count(), 0.19);
}

TEST(ThrottleTest, StretchesFitAndKeepsOutput) {
  FitFn fit = [](const Weights& w, const ConfigMap&) {
    std::this_thread::sleep_for(100ms);
    return FitOutput{w, 3, {}};
  };
  auto slow = throttle_compute(fit, ComputeProfile{3.5});
  const Weights w = test::vector_weights({1, 2});
  const auto t0 = Clock::now();
  const auto out = slow(w, {});
  const double t = Seconds(Clock::now() - t0).count();
  EXPECT_EQ(out.weights, w);
  EXPECT_EQ(out.num_examples, 3u);
  EXPECT_GE(t, 0.35);
  EXPECT_LT(t, 0.45);

  const auto t1 = Clock::now();
  throttle_compute(fit, ComputeProfile{1.0})(w, {});
  EXPECT_LT(Seconds(Clock::now() - t1).count(), 0.15);
}

TEST(ThrottleTest, ClientDecorator) {
  test::ScriptedClient inner;
  inner.initial = test::vector_weights({4});
  ThrottledClient c(inner, ComputeProfile{2.0});
  EXPECT_EQ(c.get_weights(), inner.initial);
  EXPECT_EQ(c.fit(inner.initial, {}).weights, inner.initial);
  EXPECT_EQ(c.evaluate(inner.initial, {}).loss, 0.5);
  EXPECT_EQ(inner.fits.load(), 1);
}

}  // namespace
}  // namespace fl
