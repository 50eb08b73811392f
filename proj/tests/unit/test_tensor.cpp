#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <limits>

#include "fl/rng.hpp"
#include "fl/tensor.hpp"
#include "helpers.hpp"

namespace fl {
namespace {

TEST(Rng, SameSeedSameSequence) {
  Xoshiro256 a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs = differs || x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, DeriveSeedIsOrderSensitive) {
  EXPECT_NE(derive_seed(1, {2, 3}), derive_seed(1, {3, 2}));
  EXPECT_EQ(derive_seed(1, {2, 3}), derive_seed(1, {2, 3}));
  EXPECT_NE(derive_seed(1, {2}), derive_seed(2, {2}));
}

TEST(Rng, BelowStaysInRangeAndCoversIt) {
  Xoshiro256 rng(7);
  std::vector<int> hits(7);
  for (int i = 0; i < 7000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++hits[v];
  }
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Rng, UniformAndNormalMoments) {
  Xoshiro256 rng(3);
  double su = 0, sn = 0, sn2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.01);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(Tensor, RejectsBadShapes) {
  EXPECT_THROW(Tensor("a", {2, 2}, std::vector<float>(3)), std::invalid_argument);
  EXPECT_THROW(Tensor("a", {0}, std::vector<float>{}), std::invalid_argument);
  Tensor scalar("s", {}, std::vector<double>{1.5});
  EXPECT_EQ(scalar.size(), 1u);
}

TEST(Tensor, AssignRoundsToStorageType) {
  Tensor t = Tensor::zeros("x", {2}, DType::F32);
  const std::vector<double> v{0.1, -2.5};
  t.assign(v);
  EXPECT_EQ(t.f32()[0], 0.1f);
  EXPECT_EQ(t.at(1), -2.5);
}

TEST(Weights, DuplicateNameRejected) {
  Weights w;
  w.add(Tensor::zeros("a", {1}, DType::F32));
  EXPECT_THROW(w.add(Tensor::zeros("a", {2}, DType::F64)), std::invalid_argument);
}

TEST(WeightsCodec, EmptyWeightsIsFourZeroBytes) {
  const auto bytes = encode_weights(Weights{});
  EXPECT_EQ(bytes, (std::vector<std::uint8_t>{0, 0, 0, 0}));
  EXPECT_TRUE(decode_weights(bytes).empty());
  EXPECT_EQ(weights_byte_size(Weights{}), 4u);
}

TEST(WeightsCodec, SingleScalarTensorIsSeventeenBytes) {
  Weights w;
  w.add(Tensor("b", {1}, std::vector<float>{0.0f}));
  const auto bytes = encode_weights(w);
  ASSERT_EQ(bytes.size(), 17u);
  const std::vector<std::uint8_t> expected{0, 0, 0, 1, 0, 1, 'b', 0, 1, 0, 0, 0, 1, 0, 0, 0, 0};
  EXPECT_EQ(bytes, expected);
}

TEST(WeightsCodec, HeaderIsBigEndianDataLittleEndian) {
  Weights w;
  w.add(Tensor("ab", {2, 1}, std::vector<double>{1.0, -0.0}));
  const auto b = encode_weights(w);
  // count, name, tag=1, rank=2, extents 2 and 1
  const std::vector<std::uint8_t> head{0, 0, 0, 1, 0, 2, 'a', 'b', 1, 2, 0, 0, 0, 2, 0, 0, 0, 1};
  ASSERT_EQ(std::vector<std::uint8_t>(b.begin(), b.begin() + 18), head);
  // 1.0 = 0x3FF0000000000000, little-endian
  EXPECT_EQ(b[18 + 7], 0x3F);
  EXPECT_EQ(b[18 + 6], 0xF0);
  EXPECT_EQ(b[18 + 15], 0x80);  // sign bit of -0.0
}

TEST(WeightsCodec, CorruptDtypeTagReportsItsOffset) {
  Weights w;
  w.add(Tensor("b", {1}, std::vector<float>{0.0f}));
  auto bytes = encode_weights(w);
  bytes[7] = 7;  // 4 count + 2 len + 1 name
  try {
    decode_weights(bytes);
    FAIL() << "expected CodecError";
  } catch (const CodecError& e) {
    EXPECT_EQ(e.offset(), 7u);
  }
}

TEST(WeightsCodec, TruncationAtEveryLengthFails) {
  Xoshiro256 rng(5);
  const Weights w = test::random_weights(rng);
  const auto bytes = encode_weights(w);
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    EXPECT_THROW(decode_weights(std::span(bytes).first(n)), CodecError) << "length " << n;
  }
}

TEST(WeightsCodec, TrailingBytesRejected) {
  auto bytes = encode_weights(Weights{});
  bytes.push_back(0);
  EXPECT_THROW(decode_weights(bytes), CodecError);
}

TEST(WeightsCodec, DuplicateNamesRejectedOnDecode) {
  Weights w;
  w.add(Tensor("a", {1}, std::vector<float>{1.0f}));
  w.add(Tensor("b", {1}, std::vector<float>{2.0f}));
  auto bytes = encode_weights(w);
  // second tensor's name starts after 4 + (2+1+1+1+4+4) + 2
  bytes[4 + 13 + 2] = 'a';
  try {
    decode_weights(bytes);
    FAIL() << "expected CodecError";
  } catch (const CodecError& e) {
    EXPECT_EQ(e.offset(), 17u);
  }
}

TEST(WeightsCodec, ZeroExtentRejected) {
  Weights w;
  w.add(Tensor("a", {1}, std::vector<float>{1.0f}));
  auto bytes = encode_weights(w);
  bytes[12] = 0;  // extent low byte -> 0
  EXPECT_THROW(decode_weights(bytes), CodecError);
}

TEST(WeightsCodec, EncodeRejectsOversizeNameAndRank) {
  Weights long_name;
  long_name.add(Tensor(std::string(70000, 'x'), {1}, std::vector<float>{0}));
  EXPECT_THROW(encode_weights(long_name), EncodeError);
  Weights high_rank;
  high_rank.add(Tensor("r", std::vector<std::uint32_t>(256, 1), std::vector<float>{0}));
  EXPECT_THROW(encode_weights(high_rank), EncodeError);
}

TEST(WeightsCodec, NanPayloadsSurviveBitExact) {
  const float nan_f = std::bit_cast<float>(0x7fc12345u);
  const double nan_d = std::bit_cast<double>(0x7ff8000000abcdefull);
  Weights w;
  w.add(Tensor("f", {2}, std::vector<float>{nan_f, -std::numeric_limits<float>::infinity()}));
  w.add(Tensor("d", {1}, std::vector<double>{nan_d}));
  const Weights back = decode_weights(encode_weights(w));
  EXPECT_EQ(back, w);
  EXPECT_EQ(std::bit_cast<std::uint32_t>(back[0].f32()[0]), 0x7fc12345u);
  EXPECT_EQ(std::bit_cast<std::uint64_t>(back[1].f64()[0]), 0x7ff8000000abcdefull);
}

TEST(WeightsCodec, ResnetScaleByteSize) {
  // one f32 tensor of 25.6M elements, counted without materializing bytes
  Weights w;
  w.add(Tensor::zeros("dummy", {25'600'000}, DType::F32));
  EXPECT_EQ(weights_byte_size(w), 102'400'000u + 4 + 2 + 5 + 1 + 1 + 4);
}

// Property: round trip, determinism and size agreement on random values.
TEST(WeightsCodecProperty, RoundTripDeterminismAndSize) {
  Xoshiro256 rng(2024);
  for (int i = 0; i < 500; ++i) {
    const Weights w = test::random_weights(rng, 6, 6);
    const auto a = encode_weights(w);
    const auto b = encode_weights(w);
    ASSERT_EQ(a, b);
    ASSERT_EQ(a.size(), weights_byte_size(w));
    const Weights back = decode_weights(a);
    ASSERT_EQ(back, w);
    ASSERT_EQ(encode_weights(back), a);
  }
}

}  // namespace
}  // namespace fl
