#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "fl/data.hpp"
#include "fl/rng.hpp"

namespace fl {
namespace {

SyntheticSpec spec(std::size_t n, std::size_t d, std::size_t k, double sep = 6, std::uint64_t seed = 1) {
  SyntheticSpec s;
  s.num_examples = n;
  s.num_features = d;
  s.num_classes = k;
  s.class_separation = sep;
  s.seed = seed;
  return s;
}

std::vector<double> class_mean(const LocalDataset& d, int label) {
  std::vector<double> m(d.num_features, 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.labels[i] != label) continue;
    auto r = d.row(i);
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += r[j];
    ++count;
  }
  for (auto& x : m) x /= static_cast<double>(count);
  return m;
}

TEST(Synthetic, BalancedLabelsAndDeterminism) {
  const auto d = make_synthetic(spec(1000, 10, 10));
  d.validate();
  EXPECT_EQ(d.size(), 1000u);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d.labels[i], static_cast<int>(i % 10));
  EXPECT_EQ(make_synthetic(spec(1000, 10, 10)), d);
  EXPECT_NE(make_synthetic(spec(1000, 10, 10), 1), d);
  EXPECT_NE(make_synthetic(spec(1000, 10, 10, 6, 2)), d);
}

TEST(Synthetic, ClassMeansAreSeparated) {
  const auto d = make_synthetic(spec(20000, 4, 3, 6));
  const auto m0 = class_mean(d, 0), m1 = class_mean(d, 1), m2 = class_mean(d, 2);
  auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  EXPECT_NEAR(dist(m0, m1), 6.0, 0.15);
  EXPECT_NEAR(dist(m1, m2), 6.0, 0.15);
  EXPECT_NEAR(dist(m0, m2), 6.0, 0.15);
}

TEST(Synthetic, Validation) {
  EXPECT_THROW(spec(10, 3, 4).validate(), std::invalid_argument);  // k > d
  EXPECT_THROW(spec(0, 2, 2).validate(), std::invalid_argument);
  EXPECT_THROW(spec(10, 2, 1).validate(), std::invalid_argument);
}

// Properties: disjoint, covering, balanced sizes.
TEST(PartitionProperty, DisjointCoverAndBalanced) {
  Xoshiro256 rng(2);
  for (int iter = 0; iter < 60; ++iter) {
    const std::size_t k = 2 + rng.below(5), clients = 1 + rng.below(30);
    const std::size_t n = clients * k * (4 + rng.below(10)) + rng.below(clients);
    const auto d = make_synthetic(spec(n, 6, k, 6, iter));
    // at least half iid keeps every class large enough for its clients
    PartitionSpec ps{clients, rng.below(2) ? 1.0 : rng.uniform(0.5, 1.0), static_cast<std::uint64_t>(iter)};
    const auto parts = partition_indices(d, ps);
    ASSERT_EQ(parts.size(), clients);
    std::vector<int> seen(n, 0);
    std::size_t lo = n, hi = 0;
    for (auto& p : parts) {
      for (auto i : p) ++seen[i];
      lo = std::min(lo, p.size());
      hi = std::max(hi, p.size());
    }
    ASSERT_TRUE(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    ASSERT_LE(hi - lo, 1u);
    ASSERT_EQ(partition_indices(d, ps), parts);
  }
}

TEST(Partition, IidHistogramsAreNearUniform) {
  const auto d = make_synthetic(spec(10000, 10, 10));
  const auto parts = partition(d, PartitionSpec{10, 1.0, 3});
  for (auto& p : parts) {
    std::map<int, int> hist;
    for (int l : p.labels) ++hist[l];
    for (int c = 0; c < 10; ++c) EXPECT_NEAR(hist[c], 100, 40);
  }
}

TEST(Partition, NonIidHalfFromOneLabel) {
  const auto d = make_synthetic(spec(10000, 10, 10));
  const auto parts = partition(d, PartitionSpec{100, 0.5, 3});
  for (std::size_t c = 0; c < parts.size(); ++c) {
    const auto dominant = static_cast<int>(c % 10);
    const auto count = std::count(parts[c].labels.begin(), parts[c].labels.end(), dominant);
    EXPECT_GE(2 * count, static_cast<long>(parts[c].size()));
  }
}

TEST(Partition, SingleClientGetsInput) {
  const auto d = make_synthetic(spec(100, 3, 3));
  const auto parts = partition(d, PartitionSpec{1, 0.2, 3});
  ASSERT_EQ(parts.size(), 1u);
  EXPECT_EQ(parts[0], d);
}

TEST(Partition, Errors) {
  const auto d = make_synthetic(spec(100, 3, 2));
  EXPECT_THROW(partition(d, PartitionSpec{101, 1.0, 0}), PartitionError);
  // 4 clients of 25, two per class of 50
  EXPECT_NO_THROW(partition(d, PartitionSpec{4, 0.0, 0}));
  // class 0 has 16 rows but clients 0 and 2 want 11 + 10 of them
  const auto skew = make_synthetic(spec(31, 3, 2));
  EXPECT_THROW(partition(skew, PartitionSpec{3, 0.0, 0}), PartitionError);
  EXPECT_THROW(PartitionSpec({0, 1.0, 0}).validate(), std::invalid_argument);
  EXPECT_THROW(PartitionSpec({2, 1.5, 0}).validate(), std::invalid_argument);
}

TEST(Split, TrailingRowsBecomeTest) {
  const auto d = make_synthetic(spec(10, 3, 2));
  auto [train, test] = split_train_test(d, 0.25);
  EXPECT_EQ(train.size(), 7u);
  EXPECT_EQ(test.size(), 3u);
  EXPECT_EQ(test.labels[0], d.labels[7]);
  auto [all, none] = split_train_test(d, 0.0);
  EXPECT_EQ(all, d);
  EXPECT_TRUE(none.empty());
  const auto one = d.subset(std::vector<std::size_t>{0});
  auto [t1, e1] = split_train_test(one, 0.9);
  EXPECT_EQ(t1.size(), 1u);
}

TEST(Csv, LoadsLabelColumnAnywhere) {
  const auto path = std::filesystem::temp_directory_path() / "fl_csv_test.csv";
  std::ofstream(path) << "a,label,b\n1.5,2,-3\n0,0,4e1\n";
  const auto d = load_csv(path.string());
  EXPECT_EQ(d.num_features, 2u);
  EXPECT_EQ(d.num_classes, 3u);
  EXPECT_EQ(d.features, (std::vector<double>{1.5, -3, 0, 40}));
  EXPECT_EQ(d.labels, (std::vector<std::int32_t>{2, 0}));
  std::ofstream(path) << "a,b\n1,2\n";
  EXPECT_THROW(load_csv(path.string()), std::invalid_argument);
  std::ofstream(path) << "a,label\nx,1\n";
  EXPECT_THROW(load_csv(path.string()), std::invalid_argument);
  std::filesystem::remove(path);
  EXPECT_ANY_THROW(load_csv("/nonexistent/file.csv"));
}

}  // namespace
}  // namespace fl
