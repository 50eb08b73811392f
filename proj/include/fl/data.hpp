#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fl/dataset.hpp"

namespace fl {

class PartitionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SyntheticSpec {
  std::size_t num_examples = 1000;
  std::size_t num_features = 20;
  std::size_t num_classes = 10;
  /// Distance between every pair of class means.
  double class_separation = 6.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// k unit-variance Gaussian blobs; needs num_features >= k. Class means sit on a regular simplex
/// (pairwise distance = class_separation) rotated by a seeded Householder
/// reflection; example i has label i mod k. The means depend only on
/// spec.seed, the samples on (spec.seed, sample_stream), so different
/// streams give disjoint draws from the same distribution.
LocalDataset make_synthetic(const SyntheticSpec& spec, std::uint64_t sample_stream = 0);

struct PartitionSpec {
  std::size_t num_clients = 1;
  /// Share of each client's examples drawn uniformly; the rest come from a
  /// single class assigned round-robin (client c -> class c mod k).
  double iid_fraction = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Splits into num_clients disjoint datasets covering the input, sizes
/// differing by at most one. Client c gets ceil((1 - iid_fraction) * size_c)
/// examples of its class first, then the rest from the shuffled leftover
/// pool. Throws PartitionError when a class runs out. One client gets the
/// input unchanged.
std::vector<LocalDataset> partition(const LocalDataset& data, const PartitionSpec& spec);

/// Index form of partition(), for inspection and tests.
std::vector<std::vector<std::size_t>> partition_indices(const LocalDataset& data, const PartitionSpec& spec);

/// Trailing ceil(test_fraction * n) rows become the test split, keeping at
/// least one training row. test_fraction 0 gives an empty test split.
std::pair<LocalDataset, LocalDataset> split_train_test(const LocalDataset& data, double test_fraction);

/// CSV with a header row; the column named "label" holds integer class ids,
/// all other columns are numeric features. num_classes = max label + 1.
LocalDataset load_csv(const std::string& path);

}  // namespace fl
