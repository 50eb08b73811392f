#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace fl {

/// Labelled examples held by one client: row-major features plus class ids
/// in [0, num_classes).
struct LocalDataset {
  std::size_t num_features = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;
  std::vector<std::int32_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * num_features, num_features}; }

  /// Throws std::invalid_argument on inconsistent sizes or labels out of range.
  void validate() const;

  /// Copies the listed rows, in the listed order.
  LocalDataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const LocalDataset&, const LocalDataset&) = default;
};

}  // namespace fl
