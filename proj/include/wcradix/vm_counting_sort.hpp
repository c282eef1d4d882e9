// Single-pass counting sort over pre-reserved lanes.
//
// Every possible key gets a lane big enough for its worst case inside one
// address-space reservation, so items are scattered straight to
// lane[key] without a counting pass. Only pages that receive items are ever
// backed by physical memory: commit is O(N + lanes * page size) although the
// reservation is lanes * stride items.
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <ranges>
#include <span>
#include <stdexcept>
#include <vector>

#include "wcradix/address_reservoir.hpp"
#include "wcradix/item.hpp"
#include "wcradix/wc_staging.hpp"

namespace wcradix {

inline constexpr std::size_t kMaxLanes = std::size_t{1} << 16;

/// Rounds a lane capacity up so every lane starts on a cache-line boundary.
template <SortItem Item>
constexpr std::size_t round_stride(std::size_t stride) {
  constexpr std::size_t per_line = kLineBytes / sizeof(Item);
  return stride == 0 ? per_line : (stride + per_line - 1) / per_line * per_line;
}

/// `lane_count` lanes of `stride` items each inside one ReservedRegion.
/// Lane i occupies item indices [i * stride, (i + 1) * stride); next(i) is
/// its write cursor.
template <SortItem Item>
class LaneSet {
 public:
  LaneSet() = default;

  LaneSet(std::size_t lane_count, std::size_t stride, std::size_t commit_limit = 0)
      : lane_count_(lane_count), stride_(round_stride<Item>(stride)) {
    if (lane_count == 0 || lane_count > kMaxLanes) {
      throw std::invalid_argument("LaneSet: lane count must be in [1, 65536]");
    }
    region_ = ReservedRegion::reserve(lane_bytes(), PageMode::kSmall, commit_limit);
    data_ = region_.as<Item>();
    page_items_ = region_.page_bytes() / sizeof(Item);
    starts_.resize(lane_count);
    for (std::size_t i = 0; i < lane_count; ++i) starts_[i] = i * stride_;
    next_ = starts_;
  }

  std::size_t lane_count() const { return lane_count_; }
  std::size_t stride() const { return stride_; }

  /// Address space taken by the lanes: lane_count * stride * item size.
  std::size_t lane_bytes() const { return lane_count_ * stride_ * sizeof(Item); }

  std::uint64_t next(std::size_t lane) const { return next_[lane]; }
  std::size_t length(std::size_t lane) const { return next_[lane] - starts_[lane]; }

  std::span<const Item> lane(std::size_t i) const { return {data_ + starts_[i], length(i)}; }

  std::size_t total() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < lane_count_; ++i) n += length(i);
    return n;
  }

  /// Empties all lanes. Committed pages stay committed and are reused.
  void reset() { next_ = starts_; }

  /// Direct (unstaged) append.
  void push(std::size_t lane, const Item& item) {
    const std::uint64_t pos = next_[lane];
    if (pos == starts_[lane] + stride_) throw LaneOverflowError(lane, stride_);
    if (pos % page_items_ == 0 || pos == starts_[lane]) {
      region_.touch(pos * sizeof(Item), sizeof(Item));
    }
    data_[pos] = item;
    next_[lane] = pos + 1;
  }

  void set_next(std::size_t lane, std::uint64_t pos) { next_[lane] = pos; }

  std::span<const std::uint64_t> starts() const { return starts_; }
  Item* data() const { return data_; }
  ReservedRegion& region() { return region_; }
  const ReservedRegion& region() const { return region_; }

 private:
  std::size_t lane_count_ = 0;
  std::size_t stride_ = 0;
  ReservedRegion region_;
  Item* data_ = nullptr;
  std::size_t page_items_ = 1;
  std::vector<std::uint64_t> starts_;
  std::vector<std::uint64_t> next_;
};

/// Scatters straight into the lanes.
template <SortItem Item>
class DirectLaneWriter {
 public:
  explicit DirectLaneWriter(LaneSet<Item>& lanes) : lanes_(lanes) {}

  void put(std::size_t lane, const Item& item) {
    lanes_.push(lane, item);
    ++items_;
  }
  void finish() {}

  std::uint64_t bytes_written() const { return items_ * sizeof(Item); }
  std::uint64_t bytes_streamed() const { return 0; }

 private:
  LaneSet<Item>& lanes_;
  std::uint64_t items_ = 0;
};

/// Scatters through a StagingBufferSet; finish() drains, publishes the
/// cursors back to the LaneSet and fences.
template <SortItem Item, std::size_t MaxLanes>
class StagedLaneWriter {
 public:
  StagedLaneWriter(LaneSet<Item>& lanes, StagingBufferSet<Item, MaxLanes>& staging)
      : lanes_(lanes), staging_(staging) {
    staging_.reset_counters();
    staging_.attach(lanes.data(), lanes.starts(), lanes.stride(), &lanes.region());
  }

  void put(std::size_t lane, const Item& item) { staging_.stage(lane, item); }

  void finish() {
    staging_.drain();
    for (std::size_t i = 0; i < lanes_.lane_count(); ++i) lanes_.set_next(i, staging_.position(i));
    store_fence();
  }

  std::uint64_t bytes_written() const { return staging_.bytes_written(); }
  std::uint64_t bytes_streamed() const { return staging_.bytes_streamed(); }

 private:
  LaneSet<Item>& lanes_;
  StagingBufferSet<Item, MaxLanes>& staging_;
};

struct CountingOptions {
  bool use_wc = true;
  StoreMode store_mode = default_store_mode();
  std::size_t commit_limit = 0;
};

namespace detail {

template <class Writer, class Range, class KeyFn>
void scatter_checked(Range&& items, KeyFn& key_fn, std::size_t lane_count, Writer& writer) {
  for (auto&& item : items) {
    const std::size_t lane = key_fn(item);
    if (lane >= lane_count) throw std::out_of_range("counting_sort: key outside lane range");
    writer.put(lane, item);
  }
  writer.finish();
}

}  // namespace detail

/// Distributes `items` into `lane_count` lanes by key_fn(item), reading the
/// input exactly once. Lane k receives the items with key_fn == k in input
/// order. `stride` is the per-lane capacity (the input size is always
/// enough); a lane that exceeds it raises LaneOverflowError.
template <std::ranges::input_range Range, class KeyFn>
  requires SortItem<std::ranges::range_value_t<Range>>
auto counting_sort(Range&& items, KeyFn key_fn, std::size_t lane_count, std::size_t stride,
                   const CountingOptions& options = {}) {
  using Item = std::ranges::range_value_t<Range>;
  LaneSet<Item> lanes(lane_count, stride, options.commit_limit);
  if (!options.use_wc) {
    DirectLaneWriter<Item> writer(lanes);
    detail::scatter_checked(items, key_fn, lane_count, writer);
  } else if (lane_count <= 256) {
    auto staging = std::make_unique<StagingBufferSet<Item, 256>>(lane_count, options.store_mode);
    StagedLaneWriter<Item, 256> writer(lanes, *staging);
    detail::scatter_checked(items, key_fn, lane_count, writer);
  } else {
    auto staging =
        std::make_unique<StagingBufferSet<Item, kMaxLanes>>(lane_count, options.store_mode);
    StagedLaneWriter<Item, kMaxLanes> writer(lanes, *staging);
    detail::scatter_checked(items, key_fn, lane_count, writer);
  }
  return lanes;
}

/// Copies the lanes to `out` in lane order; returns the item count.
template <SortItem Item>
std::size_t concatenate(const LaneSet<Item>& lanes, std::span<Item> out) {
  if (out.size() < lanes.total()) throw std::invalid_argument("concatenate: output too small");
  std::size_t pos = 0;
  for (std::size_t i = 0; i < lanes.lane_count(); ++i) {
    auto lane = lanes.lane(i);
    std::copy(lane.begin(), lane.end(), out.begin() + pos);
    pos += lane.size();
  }
  return pos;
}

}  // namespace wcradix
