#include "spcl/replay.hpp"

#include <algorithm>
#include <numeric>

#include "spcl/error.hpp"

namespace spcl {

void ReplayBuffer::reservoir_insert(ReplayItem item, std::mt19937_64& rng) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(item));
  } else if (capacity_ > 0) {
    // Keep with probability capacity / (seen + 1), replacing a uniform slot.
    std::uniform_int_distribution<std::uint64_t> pick(0, seen_);
    const std::uint64_t j = pick(rng);
    if (j < capacity_) items_[static_cast<std::size_t>(j)] = std::move(item);
  }
  ++seen_;
}

std::vector<ReplayItem> ReplayBuffer::sample_batch(std::size_t n, std::mt19937_64& rng) const {
  if (items_.empty()) fail(ErrorCode::kEmptyBuffer, "sample_batch: replay buffer is empty");
  std::vector<ReplayItem> out;
  out.reserve(n);
  if (n > items_.size()) {
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    for (std::size_t k = 0; k < n; ++k) out.push_back(items_[pick(rng)]);
    return out;
  }
  std::vector<std::size_t> order(items_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t k = 0; k < n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, order.size() - 1);
    std::swap(order[k], order[pick(rng)]);
    out.push_back(items_[order[k]]);
  }
  return out;
}

ReplayBuffer ReplayBuffer::restore(std::size_t capacity, std::vector<ReplayItem> items,
                                   std::uint64_t seen_count) {
  if (items.size() != std::min<std::uint64_t>(seen_count, capacity)) {
    fail(ErrorCode::kState, "replay buffer: item count inconsistent with seen count");
  }
  ReplayBuffer b(capacity);
  b.items_ = std::move(items);
  b.seen_ = seen_count;
  return b;
}

}  // namespace spcl
