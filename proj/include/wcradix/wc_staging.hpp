// Software write-combining.
//
// Items bound for many output streams are first collected in one 64-byte
// staging line per stream. A line that fills up is copied to its stream's
// destination as a single full-line burst (non-temporal stores where
// available), so the destination is never read and the hardware
// write-combine buffers see only complete lines.
//
// All per-lane state lives in one contiguous, line-aligned block: the
// staging lines, the destination cursors and the fill counters. For 256
// lanes that block is well under a 32 KiB L1 data cache, and consecutive
// 64-byte lines spread evenly over the cache sets.
#pragma once

#include <array>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wcradix/address_reservoir.hpp"
#include "wcradix/item.hpp"

namespace wcradix {

inline constexpr std::size_t kLineBytes = 64;

/// L1 geometry used for the anti-aliasing check: lines whose addresses are
/// congruent modulo kAliasBytes (sets * line size) compete for one set.
inline constexpr std::size_t kAliasBytes = 4096;

enum class StoreMode { kStreaming, kPlain };

const char* to_string(StoreMode mode);

/// Cache-line size reported by the OS, or kLineBytes when unknown.
std::size_t cache_line_bytes();

/// True when non-temporal stores are compiled in, supported by the CPU and
/// the cache line is kLineBytes long.
bool streaming_stores_supported();

/// kStreaming when supported, otherwise kPlain. Warns once on stderr if the
/// cache line size does not match kLineBytes.
StoreMode default_store_mode();

/// Copies one 64-byte line from `src` to `dst`. Both must be 64-byte
/// aligned. Only loads from src and stores to dst are issued.
void flush_line(const void* src, void* dst, StoreMode mode);

/// Orders preceding streaming stores before later stores. Issued once per
/// pass, after the last flush.
void store_fence();

/// Thrown when a lane runs out of its reserved capacity.
class LaneOverflowError : public std::runtime_error {
 public:
  LaneOverflowError(std::size_t lane, std::size_t stride)
      : std::runtime_error("lane " + std::to_string(lane) + " overflowed its capacity of " +
                           std::to_string(stride) + " items"),
        lane_(lane) {}
  std::size_t lane() const { return lane_; }

 private:
  std::size_t lane_;
};

struct LayoutDiagnostics {
  std::size_t buffers = 0;
  /// Pairs of buffers whose addresses are congruent modulo the alias span.
  std::size_t conflicting_pairs = 0;
  /// Largest number of buffers sharing one congruence class.
  std::size_t max_class_size = 0;
  /// ceil(buffers / classes): the best any layout can do.
  std::size_t min_class_size = 0;
  bool flagged = false;
};

/// Counts aliasing among line-sized buffers at the given addresses.
LayoutDiagnostics layout_check(std::span<const std::uintptr_t> addresses,
                               std::size_t alias_bytes = kAliasBytes,
                               std::size_t line_bytes = kLineBytes);

/// Per-lane staging lines plus destination cursors for up to MaxLanes
/// output streams.
///
/// Lane state: `cursor` is the item index of the destination line the
/// staging line maps onto, `fill` the next free slot and `head` the first
/// slot not yet written out. A lane attached at an unaligned position starts
/// with head = fill = position % items_per_line; such a partial head line
/// and any drained tail go out with plain stores, full lines with the
/// configured store mode.
template <SortItem Item, std::size_t MaxLanes = 256>
class StagingBufferSet {
 public:
  static constexpr std::size_t kItemsPerLine = kLineBytes / sizeof(Item);
  static_assert(kLineBytes % sizeof(Item) == 0, "item size must divide the cache line");
  static_assert(kItemsPerLine <= 255);

  explicit StagingBufferSet(std::size_t lane_count = MaxLanes,
                            StoreMode mode = default_store_mode())
      : lane_count_(lane_count), requested_mode_(mode), mode_(mode) {
    if (lane_count == 0 || lane_count > MaxLanes) {
      throw std::invalid_argument("StagingBufferSet: lane count out of range");
    }
  }

  /// Points lane i at item index positions[i] of `dest`. With stride > 0,
  /// lane i may not write past item (i + 1) * stride. With a region, every
  /// first write to a page is reported through region->touch(); `dest` must
  /// then be region->data().
  void attach(Item* dest, std::span<const std::uint64_t> positions, std::size_t stride = 0,
              ReservedRegion* region = nullptr) {
    assert(positions.size() == lane_count_);
    assert(region == nullptr || reinterpret_cast<std::byte*>(dest) == region->data());
    dest_ = dest;
    stride_ = stride;
    region_ = region;
    page_items_ = region != nullptr ? region->page_bytes() / sizeof(Item) : 0;
    const bool aligned = reinterpret_cast<std::uintptr_t>(dest) % kLineBytes == 0;
    mode_ = aligned ? requested_mode_ : StoreMode::kPlain;
    for (std::size_t lane = 0; lane < lane_count_; ++lane) {
      const std::uint64_t pos = positions[lane];
      const auto offset = static_cast<std::uint8_t>(pos % kItemsPerLine);
      cursor_[lane] = pos - offset;
      fill_[lane] = offset;
      head_[lane] = offset;
      fresh_[lane] = 1;
    }
  }

  /// Appends `item` to the lane's line. Returns true when this filled the
  /// line and it was written out.
  bool stage(std::size_t lane, const Item& item) {
    assert(lane < lane_count_);
    std::uint8_t f = fill_[lane];
    lines_[lane].slot[f] = item;
    if (++f % kItemsPerLine == 0) {
      flush_lane(lane);
      return true;
    }
    fill_[lane] = f;
    return false;
  }

  /// Writes every lane's staged but unwritten items with plain stores. The
  /// lanes stay attached; staging may continue afterwards.
  void drain() {
    for (std::size_t lane = 0; lane < lane_count_; ++lane) {
      const std::size_t head = head_[lane];
      const std::size_t fill = fill_[lane];
      if (fill == head) continue;
      const std::uint64_t start = cursor_[lane];
      if (stride_ != 0 && start + fill > (lane + 1) * stride_) {
        throw LaneOverflowError(lane, stride_);
      }
      note_write(lane, start);
      std::memcpy(dest_ + start + head, &lines_[lane].slot[head], (fill - head) * sizeof(Item));
      bytes_written_ += (fill - head) * sizeof(Item);
      head_[lane] = static_cast<std::uint8_t>(fill);
    }
  }

  /// Item index at which the lane's next item will land.
  std::uint64_t position(std::size_t lane) const { return cursor_[lane] + fill_[lane]; }
  std::size_t fill(std::size_t lane) const { return fill_[lane]; }
  std::size_t pending(std::size_t lane) const { return fill_[lane] - head_[lane]; }

  std::size_t lane_count() const { return lane_count_; }
  StoreMode store_mode() const { return mode_; }
  std::uint64_t bytes_written() const { return bytes_written_; }
  std::uint64_t bytes_streamed() const { return bytes_streamed_; }
  void reset_counters() { bytes_written_ = bytes_streamed_ = 0; }

  std::vector<std::uintptr_t> buffer_addresses() const {
    std::vector<std::uintptr_t> out(lane_count_);
    for (std::size_t lane = 0; lane < lane_count_; ++lane) {
      out[lane] = reinterpret_cast<std::uintptr_t>(&lines_[lane]);
    }
    return out;
  }

  /// Bytes of hot per-lane state: staging lines, cursors and counters.
  static constexpr std::size_t working_set_bytes() {
    return sizeof(lines_) + sizeof(cursor_) + sizeof(fill_) + sizeof(head_) + sizeof(fresh_);
  }

 private:
  struct alignas(kLineBytes) Line {
    Item slot[kItemsPerLine];
  };

  void flush_lane(std::size_t lane) {
    const std::uint64_t start = cursor_[lane];
    if (stride_ != 0 && start + kItemsPerLine > (lane + 1) * stride_) {
      throw LaneOverflowError(lane, stride_);
    }
    note_write(lane, start);
    const std::size_t head = head_[lane];
    if (head == 0) {
      flush_line(&lines_[lane], dest_ + start, mode_);
      if (mode_ == StoreMode::kStreaming) bytes_streamed_ += kLineBytes;
    } else {
      std::memcpy(dest_ + start + head, &lines_[lane].slot[head],
                  (kItemsPerLine - head) * sizeof(Item));
    }
    bytes_written_ += (kItemsPerLine - head) * sizeof(Item);
    cursor_[lane] = start + kItemsPerLine;
    fill_[lane] = 0;
    head_[lane] = 0;
  }

  // Lines never straddle a page, so the line start identifies the page.
  void note_write(std::size_t lane, std::uint64_t line_start) {
    if (region_ == nullptr) return;
    if (fresh_[lane] != 0 || line_start % page_items_ == 0) {
      region_->touch(line_start * sizeof(Item), kLineBytes);
      fresh_[lane] = 0;
    }
  }

  std::array<Line, MaxLanes> lines_;
  std::array<std::uint64_t, MaxLanes> cursor_{};
  std::array<std::uint8_t, MaxLanes> fill_{};
  std::array<std::uint8_t, MaxLanes> head_{};
  std::array<std::uint8_t, MaxLanes> fresh_{};

  std::size_t lane_count_;
  StoreMode requested_mode_;
  StoreMode mode_;
  Item* dest_ = nullptr;
  std::size_t stride_ = 0;
  ReservedRegion* region_ = nullptr;
  std::size_t page_items_ = 0;
  std::uint64_t bytes_written_ = 0;
  std::uint64_t bytes_streamed_ = 0;
};

static_assert(StagingBufferSet<KeyValue>::working_set_bytes() <= 32 * 1024);
static_assert(StagingBufferSet<std::uint32_t>::working_set_bytes() <= 32 * 1024);

}  // namespace wcradix
