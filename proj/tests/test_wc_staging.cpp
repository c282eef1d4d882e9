#include <algorithm>
#include <cstring>
#include <memory>
#include <random>
#include <vector>

#include "doctest.h"
#include "wcradix/wc_staging.hpp"

using namespace wcradix;

namespace {

template <class T>
struct AlignedBuffer {
  explicit AlignedBuffer(std::size_t n, T fill = T{})
      : data(static_cast<T*>(std::aligned_alloc(kLineBytes, round(n * sizeof(T))))), size(n) {
    std::fill(data, data + n, fill);
  }
  ~AlignedBuffer() { std::free(data); }
  static std::size_t round(std::size_t b) { return (b + kLineBytes - 1) / kLineBytes * kLineBytes; }
  T* data;
  std::size_t size;
};

constexpr KeyValue kSentinel{0xDEADBEEF, 0xFEEDFACE};

}  // namespace

TEST_CASE("eight 8-byte items fill one line") {
  // 64-byte line / 8-byte item = 8 items per line
  static_assert(StagingBufferSet<KeyValue>::kItemsPerLine == 8);
  static_assert(StagingBufferSet<std::uint32_t>::kItemsPerLine == 16);

  auto set = std::make_unique<StagingBufferSet<KeyValue, 4>>(4);
  AlignedBuffer<KeyValue> dest(4 * 16, kSentinel);
  std::vector<std::uint64_t> starts{0, 16, 32, 48};
  set->attach(dest.data, starts);

  for (std::uint32_t i = 0; i < 7; ++i) {
    CHECK_FALSE(set->stage(1, {i, i}));
    CHECK(dest.data[16 + i] == kSentinel);
  }
  CHECK(set->stage(1, {7, 7}));
  for (std::uint32_t i = 0; i < 8; ++i) CHECK(dest.data[16 + i] == KeyValue{i, i});
  CHECK(dest.data[24] == kSentinel);
  CHECK(set->position(1) == 24);
  CHECK(set->fill(1) == 0);
  CHECK(set->bytes_written() == 64);
}

TEST_CASE("interleaved lanes flush at their own boundaries") {
  auto set = std::make_unique<StagingBufferSet<KeyValue, 2>>(2);
  AlignedBuffer<KeyValue> dest(64, kSentinel);
  std::vector<std::uint64_t> starts{0, 32};
  set->attach(dest.data, starts);
  for (std::uint32_t i = 0; i < 32; ++i) {
    const std::size_t lane = i % 2;
    const bool flushed = set->stage(lane, {i, 0});
    // Lane-local count after this stage is i / 2 + 1.
    CHECK(flushed == ((i / 2 + 1) % 8 == 0));
  }
  for (std::uint32_t k = 0; k < 16; ++k) {
    CHECK(dest.data[k].key == 2 * k);
    CHECK(dest.data[32 + k].key == 2 * k + 1);
  }
}

TEST_CASE("flush_line copies a line bit-exactly in both modes") {
  alignas(64) std::uint8_t src[64];
  alignas(64) std::uint8_t dst[64];
  for (int i = 0; i < 64; ++i) src[i] = static_cast<std::uint8_t>(i * 37 + 11);
  for (StoreMode mode : {StoreMode::kStreaming, StoreMode::kPlain}) {
    std::memset(dst, 0, sizeof dst);
    flush_line(src, dst, mode);
    store_fence();
    CHECK(std::memcmp(src, dst, 64) == 0);
  }
}

TEST_CASE("drain writes exactly the staged items") {
  auto set = std::make_unique<StagingBufferSet<KeyValue, 8>>(8);
  AlignedBuffer<KeyValue> dest(8 * 16, kSentinel);
  std::vector<std::uint64_t> starts(8);
  for (std::size_t i = 0; i < 8; ++i) starts[i] = i * 16;
  set->attach(dest.data, starts);

  SUBCASE("nothing staged") {
    set->drain();
    CHECK(set->bytes_written() == 0);
    CHECK(std::all_of(dest.data, dest.data + dest.size, [](auto& x) { return x == kSentinel; }));
  }
  SUBCASE("three items in one lane") {
    for (std::uint32_t i = 0; i < 3; ++i) set->stage(5, {i, 100 + i});
    set->drain();
    CHECK(set->bytes_written() == 3 * sizeof(KeyValue));
    CHECK(set->pending(5) == 0);
    for (std::uint32_t i = 0; i < 3; ++i) CHECK(dest.data[80 + i] == KeyValue{i, 100 + i});
    CHECK(dest.data[83] == kSentinel);
    CHECK(set->position(5) == 83);
  }
  SUBCASE("staging resumes after a drain") {
    for (std::uint32_t i = 0; i < 3; ++i) set->stage(2, {i, 0});
    set->drain();
    for (std::uint32_t i = 3; i < 12; ++i) set->stage(2, {i, 0});
    set->drain();
    for (std::uint32_t i = 0; i < 12; ++i) CHECK(dest.data[32 + i].key == i);
    CHECK(dest.data[44] == kSentinel);
    CHECK(set->bytes_written() == 12 * sizeof(KeyValue));
  }
}

TEST_CASE("unaligned start positions never touch neighbouring items") {
  // Lanes start mid-line; the slots before each start belong to someone else.
  auto set = std::make_unique<StagingBufferSet<std::uint32_t, 3>>(3);
  AlignedBuffer<std::uint32_t> dest(200, 0xFFFFFFFFu);
  std::vector<std::uint64_t> starts{5, 41, 77};
  set->attach(dest.data, starts);
  for (std::uint32_t i = 0; i < 30; ++i) {
    for (std::size_t lane = 0; lane < 3; ++lane) set->stage(lane, static_cast<std::uint32_t>(lane * 1000 + i));
  }
  set->drain();
  for (std::size_t lane = 0; lane < 3; ++lane) {
    CHECK(dest.data[starts[lane] - 1] == 0xFFFFFFFFu);
    for (std::uint32_t i = 0; i < 30; ++i) CHECK(dest.data[starts[lane] + i] == lane * 1000 + i);
    CHECK(dest.data[starts[lane] + 30] == 0xFFFFFFFFu);
  }
  CHECK(set->bytes_written() == 90 * sizeof(std::uint32_t));
}

TEST_CASE("property: flush iff post-incremented fill divides the line, output equals direct scatter") {
  constexpr std::size_t kLanes = 256;
  std::mt19937 rng(12345);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t lanes = 1 + rng() % kLanes;
    const std::size_t stride = 64;
    const std::size_t count = rng() % (lanes * 40);
    const bool streaming = trial % 2 == 0;

    auto set = std::make_unique<StagingBufferSet<KeyValue, kLanes>>(
        lanes, streaming ? StoreMode::kStreaming : StoreMode::kPlain);
    AlignedBuffer<KeyValue> staged(lanes * stride, kSentinel);
    std::vector<KeyValue> direct(lanes * stride, kSentinel);
    std::vector<std::uint64_t> starts(lanes);
    for (std::size_t i = 0; i < lanes; ++i) starts[i] = i * stride;
    set->attach(staged.data, starts, stride);

    std::vector<std::size_t> staged_count(lanes, 0);
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t lane = rng() % lanes;
      if (staged_count[lane] == stride) continue;
      const KeyValue item{static_cast<std::uint32_t>(rng()), static_cast<std::uint32_t>(i)};
      const bool flushed = set->stage(lane, item);
      ++staged_count[lane];
      REQUIRE(flushed == (staged_count[lane] % 8 == 0));
      REQUIRE(set->fill(lane) < 8);
      direct[lane * stride + staged_count[lane] - 1] = item;
    }
    set->drain();
    store_fence();
    for (std::size_t i = 0; i < lanes; ++i) REQUIRE(set->pending(i) == 0);
    REQUIRE(std::equal(direct.begin(), direct.end(), staged.data));
  }
}

TEST_CASE("random fills across 256 lanes drain to the direct-scatter result") {
  std::mt19937 rng(99);
  auto set = std::make_unique<StagingBufferSet<KeyValue>>(256);
  AlignedBuffer<KeyValue> dest(256 * 8, kSentinel);
  std::vector<KeyValue> oracle(256 * 8, kSentinel);
  std::vector<std::uint64_t> starts(256);
  for (std::size_t i = 0; i < 256; ++i) starts[i] = i * 8;
  set->attach(dest.data, starts, 8);
  for (std::size_t lane = 0; lane < 256; ++lane) {
    const std::size_t fill = rng() % 8;  // never a full line: only drain writes
    for (std::size_t k = 0; k < fill; ++k) {
      const KeyValue item{static_cast<std::uint32_t>(lane), static_cast<std::uint32_t>(k)};
      set->stage(lane, item);
      oracle[lane * 8 + k] = item;
    }
  }
  CHECK(set->bytes_written() == 0);
  set->drain();
  CHECK(std::equal(oracle.begin(), oracle.end(), dest.data));
}

TEST_CASE("overflowing a lane's stride throws") {
  auto set = std::make_unique<StagingBufferSet<KeyValue, 2>>(2);
  AlignedBuffer<KeyValue> dest(16);
  std::vector<std::uint64_t> starts{0, 8};
  set->attach(dest.data, starts, 8);
  for (std::uint32_t i = 0; i < 8; ++i) set->stage(0, {i, i});
  set->stage(0, {8, 8});  // staged only
  CHECK_THROWS_AS(set->drain(), LaneOverflowError);
  try {
    set->drain();
  } catch (const LaneOverflowError& e) {
    CHECK(e.lane() == 0);
  }
}

TEST_CASE("flushes into a region report first writes per page") {
  const std::size_t page = system_page_bytes();
  const std::size_t per_page = page / sizeof(KeyValue);
  auto region = ReservedRegion::reserve(4 * page);
  auto set = std::make_unique<StagingBufferSet<KeyValue, 2>>(2);
  // Lane 0 starts mid-page 0 and runs into page 1; lane 1 starts on page 3.
  std::vector<std::uint64_t> starts{per_page - 16, 3 * per_page};
  set->attach(region.as<KeyValue>(), starts, 0, &region);
  for (std::uint32_t i = 0; i < 40; ++i) set->stage(0, {i, 0});
  for (std::uint32_t i = 0; i < 3; ++i) set->stage(1, {i, 1});
  set->drain();
  CHECK(region.committed_bytes() == 3 * page);
}

TEST_CASE("layout_check counts congruent buffers") {
  SUBCASE("256 contiguous lines: 16 KiB over 4 KiB classes, at most 4 per class") {
    std::vector<std::uintptr_t> addrs(256);
    for (std::size_t i = 0; i < 256; ++i) addrs[i] = 0x100000 + i * 64;
    const auto d = layout_check(addrs);
    CHECK(d.max_class_size == 4);
    CHECK(d.min_class_size == 4);
    CHECK(d.conflicting_pairs == 64 * 6);
    CHECK_FALSE(d.flagged);
  }
  SUBCASE("4 KiB stride puts every buffer in one class") {
    std::vector<std::uintptr_t> addrs(256);
    for (std::size_t i = 0; i < 256; ++i) addrs[i] = 0x100000 + i * 4096;
    const auto d = layout_check(addrs);
    CHECK(d.max_class_size == 256);
    CHECK(d.conflicting_pairs == 256 * 255 / 2);
    CHECK(d.flagged);
  }
  SUBCASE("single buffer") {
    std::vector<std::uintptr_t> addrs{0x1000};
    const auto d = layout_check(addrs);
    CHECK(d.conflicting_pairs == 0);
    CHECK_FALSE(d.flagged);
  }
  SUBCASE("the real staging block is at the analytic minimum") {
    auto set = std::make_unique<StagingBufferSet<KeyValue>>(256);
    const auto addrs = set->buffer_addresses();
    for (auto a : addrs) CHECK(a % 64 == 0);
    const auto d = layout_check(addrs);
    CHECK(d.max_class_size == 4);
    CHECK_FALSE(d.flagged);
  }
}

TEST_CASE("hot per-lane state fits a 32 KiB L1") {
  CHECK(StagingBufferSet<KeyValue>::working_set_bytes() <= 32 * 1024);
  CHECK(StagingBufferSet<std::uint32_t>::working_set_bytes() <= 32 * 1024);
}

TEST_CASE("unaligned destinations fall back to plain stores") {
  auto set = std::make_unique<StagingBufferSet<std::uint32_t, 1>>(1, StoreMode::kStreaming);
  AlignedBuffer<std::uint32_t> dest(64, 0);
  std::vector<std::uint64_t> starts{0};
  set->attach(dest.data + 1, starts);
  CHECK(set->store_mode() == StoreMode::kPlain);
  for (std::uint32_t i = 0; i < 20; ++i) set->stage(0, i + 1);
  set->drain();
  CHECK(dest.data[0] == 0);
  for (std::uint32_t i = 0; i < 20; ++i) CHECK(dest.data[1 + i] == i + 1);
}
