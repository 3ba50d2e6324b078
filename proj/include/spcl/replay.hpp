#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace spcl {

struct ReplayItem {
  std::vector<double> features;
  std::size_t label = 0;
  std::size_t task = 0;

  bool operator==(const ReplayItem&) const = default;
};

// Fixed-capacity reservoir (Algorithm R) over every item ever offered.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 0) : capacity_(capacity) {}

  void reservoir_insert(ReplayItem item, std::mt19937_64& rng);
  /// Uniform draw; with replacement only when n exceeds the stored count.
  std::vector<ReplayItem> sample_batch(std::size_t n, std::mt19937_64& rng) const;

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  std::uint64_t seen_count() const { return seen_; }
  const std::vector<ReplayItem>& items() const { return items_; }

  /// Restores a serialized buffer; validates the size invariant.
  static ReplayBuffer restore(std::size_t capacity, std::vector<ReplayItem> items,
                              std::uint64_t seen_count);

 private:
  std::size_t capacity_;
  std::vector<ReplayItem> items_;
  std::uint64_t seen_ = 0;
};

}  // namespace spcl
