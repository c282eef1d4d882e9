// Parallel reverse-sorting radix sort for 32-bit keys.
//
// One MSD counting-sort pass partitions each worker's share of the input by
// the top digit. After a barrier the per-digit sizes are summed over workers
// and prefix-summed into global output offsets, and each worker takes a
// contiguous block of MSD values. For every MSD value it owns, a worker
// gathers that bucket from all workers (digit 0), scatters by digit 1 while
// building the digit-2 histogram, and finally scatters by digit 2 straight
// into the output. Four passes, each writing N items once.
#pragma once

#include <algorithm>
#include <atomic>
#include <barrier>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "wcradix/address_reservoir.hpp"
#include "wcradix/item.hpp"
#include "wcradix/vm_counting_sort.hpp"
#include "wcradix/wc_staging.hpp"

namespace wcradix {

/// Key width and digit width. The pipeline is fixed at four passes: one MSD
/// partition and three local LSD passes.
template <unsigned KeyBits, unsigned DigitBits>
struct RadixGeometry {
  static constexpr unsigned kKeyBits = KeyBits;
  static constexpr unsigned kDigitBits = DigitBits;
  static constexpr unsigned kPasses = KeyBits / DigitBits;
  static constexpr std::size_t kRadix = std::size_t{1} << DigitBits;
  static_assert(KeyBits % DigitBits == 0);
  static_assert(kPasses == 4, "the pipeline has exactly four digit passes");
};

using StandardGeometry = RadixGeometry<32, 8>;
/// 16-bit keys, 4-bit digits: small enough for exhaustive checks.
using ReducedGeometry = RadixGeometry<16, 4>;

/// Digit `pass` of `key`, pass 0 being the least significant.
template <class Geometry = StandardGeometry>
constexpr std::uint32_t digit(std::uint32_t key, unsigned pass) {
  return (key >> (Geometry::kDigitBits * pass)) & (Geometry::kRadix - 1);
}

template <class Geometry = StandardGeometry>
constexpr std::uint32_t digit(const KeyValue& item, unsigned pass) {
  return digit<Geometry>(item.key, pass);
}

struct StridePolicy {
  enum class Kind { kFull, kExpectedUniform };
  Kind kind = Kind::kFull;
  /// Multiplier on the expected per-lane population (kExpectedUniform).
  double slack = 2.0;

  static StridePolicy full() { return {}; }
  static StridePolicy uniform(double slack) { return {Kind::kExpectedUniform, slack}; }

  /// Lane capacity in items for an input of n items, `radix` lanes per set
  /// and `pe_count` workers. Full: n, never overflows. Expected-uniform:
  /// slack times a worker's expected MSD bucket share, plus one line.
  std::size_t lane_items(std::size_t n, std::size_t radix, std::size_t pe_count) const;
};

struct RadixConfig {
  std::size_t pe_count = 1;
  StridePolicy stride = StridePolicy::full();
  bool use_wc = true;
  StoreMode store_mode = default_store_mode();
  /// Pin workers to cores, best effort.
  bool pin_threads = true;
  /// Pre-fault each worker's output range from that worker before the final
  /// pass, so first-touch placement puts it on the worker's NUMA node.
  bool first_touch_output = true;
};

/// Output of the cross-worker reduction after the MSD pass.
struct GlobalPlan {
  std::vector<std::size_t> bucket_sizes;
  /// Exclusive prefix sum of bucket_sizes.
  std::vector<std::size_t> output_indices;
  /// MSD value -> owning worker.
  std::vector<std::uint32_t> owner;
  /// Per worker, the half-open block [first, last) of MSD values it owns.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges;
};

/// Builds the plan from bucket sizes already summed over workers. Values
/// are assigned to workers in contiguous blocks, cutting a block once its
/// running item count reaches the worker's proportional share.
GlobalPlan plan_from_sizes(std::vector<std::size_t> bucket_sizes, std::size_t pe_count);

template <SortItem Item>
GlobalPlan build_plan(std::span<const LaneSet<Item>* const> buckets3, std::size_t pe_count) {
  if (buckets3.empty()) throw std::invalid_argument("build_plan: no buckets");
  std::vector<std::size_t> sizes(buckets3.front()->lane_count(), 0);
  for (const LaneSet<Item>* pe : buckets3) {
    for (std::size_t i = 0; i < sizes.size(); ++i) sizes[i] += pe->length(i);
  }
  return plan_from_sizes(std::move(sizes), pe_count);
}

struct PassTraffic {
  std::uint64_t bytes_written = 0;
  std::uint64_t bytes_streamed = 0;
};

struct SortReport {
  std::size_t n = 0;
  std::size_t item_bytes = 0;
  std::size_t pe_count = 0;
  unsigned digit_bits = 0;
  std::size_t stride = 0;
  bool use_wc = false;
  StoreMode store_mode = StoreMode::kPlain;
  /// Store mode of the final pass; plain when the output is not line aligned.
  StoreMode final_store_mode = StoreMode::kPlain;
  /// Set by the caller that owns the input allocation.
  bool large_pages = false;

  std::chrono::steady_clock::time_point t0{};  // earliest worker start
  std::chrono::steady_clock::time_point t1{};  // latest worker finish
  double msd_seconds = 0;
  double plan_seconds = 0;
  double local_seconds = 0;

  /// Scatter traffic; index 0 is the MSD pass, then digits 0, 1 and 2.
  std::array<PassTraffic, 4> passes{};
  std::size_t reserved_lane_bytes = 0;
  std::size_t committed_lane_bytes = 0;

  double seconds() const { return std::chrono::duration<double>(t1 - t0).count(); }
  std::uint64_t total_bytes_written() const {
    std::uint64_t sum = 0;
    for (const auto& p : passes) sum += p.bytes_written;
    return sum;
  }
};

/// Per-worker lane sets, kept alive between sorts so repeated runs reuse
/// committed pages.
template <SortItem Item, class Geometry = StandardGeometry>
class SortWorkspace {
 public:
  struct Worker {
    LaneSet<Item> buckets3;
    LaneSet<Item> buckets0;
    LaneSet<Item> buckets1;
    std::unique_ptr<StagingBufferSet<Item, Geometry::kRadix>> staging;
  };

  void prepare(std::size_t pe_count, std::size_t stride, StoreMode mode) {
    if (workers_.size() == pe_count && stride_ == stride && mode_ == mode) {
      for (auto& w : workers_) {
        w.buckets3.reset();
        w.buckets0.reset();
        w.buckets1.reset();
      }
      return;
    }
    workers_.clear();
    workers_.resize(pe_count);
    for (auto& w : workers_) {
      w.buckets3 = LaneSet<Item>(Geometry::kRadix, stride);
      w.buckets0 = LaneSet<Item>(Geometry::kRadix, stride);
      w.buckets1 = LaneSet<Item>(Geometry::kRadix, stride);
      w.staging = std::make_unique<StagingBufferSet<Item, Geometry::kRadix>>(Geometry::kRadix, mode);
    }
    stride_ = stride;
    mode_ = mode;
  }

  std::vector<Worker>& workers() { return workers_; }

  std::size_t reserved_lane_bytes() const {
    std::size_t sum = 0;
    for (const auto& w : workers_) {
      sum += w.buckets3.lane_bytes() + w.buckets0.lane_bytes() + w.buckets1.lane_bytes();
    }
    return sum;
  }

  std::size_t committed_lane_bytes() const {
    std::size_t sum = 0;
    for (const auto& w : workers_) {
      sum += w.buckets3.region().committed_bytes() + w.buckets0.region().committed_bytes() +
             w.buckets1.region().committed_bytes();
    }
    return sum;
  }

 private:
  std::vector<Worker> workers_;
  std::size_t stride_ = 0;
  StoreMode mode_ = StoreMode::kPlain;
};

namespace detail {

void pin_current_thread(std::size_t pe);
void prefault_for_write(void* begin, std::size_t bytes);

/// Final-pass writer without staging: output[cursor[d]++] = item.
template <SortItem Item, std::size_t Radix>
class DirectOutputWriter {
 public:
  DirectOutputWriter(std::span<Item> out, const std::array<std::uint64_t, Radix>& cursors)
      : out_(out.data()), cursors_(cursors) {}
  void put(std::size_t d, const Item& item) {
    out_[cursors_[d]++] = item;
    ++items_;
  }
  void finish() {}
  std::uint64_t bytes_written() const { return items_ * sizeof(Item); }
  std::uint64_t bytes_streamed() const { return 0; }

 private:
  Item* out_;
  std::array<std::uint64_t, Radix> cursors_;
  std::uint64_t items_ = 0;
};

/// Final-pass writer through the staging lines. Output positions are not
/// line aligned in general; partial head and tail lines go out with plain
/// stores inside StagingBufferSet.
template <SortItem Item, std::size_t Radix>
class StagedOutputWriter {
 public:
  StagedOutputWriter(std::span<Item> out, const std::array<std::uint64_t, Radix>& cursors,
                     StagingBufferSet<Item, Radix>& staging)
      : staging_(staging) {
    staging_.reset_counters();
    staging_.attach(out.data(), cursors);
  }
  void put(std::size_t d, const Item& item) { staging_.stage(d, item); }
  void finish() {
    staging_.drain();
    store_fence();
  }
  std::uint64_t bytes_written() const { return staging_.bytes_written(); }
  std::uint64_t bytes_streamed() const { return staging_.bytes_streamed(); }

 private:
  StagingBufferSet<Item, Radix>& staging_;
};

template <class Writer>
void add_traffic(PassTraffic& t, const Writer& w) {
  t.bytes_written += w.bytes_written();
  t.bytes_streamed += w.bytes_streamed();
}

}  // namespace detail

/// MSD pass for one worker: counting sort of its input slice into buckets3
/// by the top digit.
template <class Geometry = StandardGeometry, bool kStaged = true, SortItem Item>
PassTraffic msd_partition(std::span<const Item> slice, LaneSet<Item>& buckets3,
                          StagingBufferSet<Item, Geometry::kRadix>& staging) {
  constexpr unsigned kTop = Geometry::kPasses - 1;
  PassTraffic traffic;
  auto run = [&](auto& writer) {
    for (const Item& item : slice) writer.put(digit<Geometry>(key_of(item), kTop), item);
    writer.finish();
    detail::add_traffic(traffic, writer);
  };
  if constexpr (kStaged) {
    StagedLaneWriter<Item, Geometry::kRadix> writer(buckets3, staging);
    run(writer);
  } else {
    DirectLaneWriter<Item> writer(buckets3);
    run(writer);
  }
  return traffic;
}

/// Local LSD sort of every MSD value in [first, last) for one worker.
/// Reads all workers' buckets3 (in worker order, which keeps the sort
/// stable), uses `buckets0`/`buckets1` as scratch, and writes each MSD
/// bucket to output[output_indices[m], output_indices[m] + bucket_sizes[m]).
/// Returns traffic for the digit-0, digit-1 and digit-2 passes.
template <class Geometry = StandardGeometry, bool kStaged = true, SortItem Item>
std::array<PassTraffic, 3> local_sort(std::uint32_t first, std::uint32_t last,
                                      std::span<const LaneSet<Item>* const> all_buckets3,
                                      const GlobalPlan& plan, std::span<Item> output,
                                      LaneSet<Item>& buckets0, LaneSet<Item>& buckets1,
                                      StagingBufferSet<Item, Geometry::kRadix>& staging) {
  constexpr std::size_t kRadix = Geometry::kRadix;
  std::array<PassTraffic, 3> traffic{};
  std::array<std::uint64_t, kRadix> histogram2{};
  std::array<std::uint64_t, kRadix> cursors{};

  auto lane_writer = [&](LaneSet<Item>& lanes) {
    if constexpr (kStaged) {
      return StagedLaneWriter<Item, kRadix>(lanes, staging);
    } else {
      return DirectLaneWriter<Item>(lanes);
    }
  };

  for (std::uint32_t m = first; m < last; ++m) {
    if (plan.bucket_sizes[m] == 0) continue;

    // Digit 0: gather bucket m from every worker into local lanes.
    buckets0.reset();
    {
      auto writer = lane_writer(buckets0);
      for (const LaneSet<Item>* pe : all_buckets3) {
        for (const Item& item : pe->lane(m)) writer.put(digit<Geometry>(key_of(item), 0), item);
      }
      writer.finish();
      detail::add_traffic(traffic[0], writer);
    }

    // Digit 1, counting the final digit on the way.
    buckets1.reset();
    histogram2.fill(0);
    {
      auto writer = lane_writer(buckets1);
      for (std::size_t l = 0; l < kRadix; ++l) {
        for (const Item& item : buckets0.lane(l)) {
          const std::uint32_t key = key_of(item);
          writer.put(digit<Geometry>(key, 1), item);
          ++histogram2[digit<Geometry>(key, 2)];
        }
      }
      writer.finish();
      detail::add_traffic(traffic[1], writer);
    }

    // Digit 2 straight to the output.
    std::uint64_t base = plan.output_indices[m];
    for (std::size_t d = 0; d < kRadix; ++d) {
      cursors[d] = base;
      base += histogram2[d];
    }
    auto emit = [&](auto& writer) {
      for (std::size_t l = 0; l < kRadix; ++l) {
        for (const Item& item : buckets1.lane(l)) writer.put(digit<Geometry>(key_of(item), 2), item);
      }
      writer.finish();
      detail::add_traffic(traffic[2], writer);
    };
    if constexpr (kStaged) {
      detail::StagedOutputWriter<Item, kRadix> writer(output, cursors, staging);
      emit(writer);
    } else {
      detail::DirectOutputWriter<Item, kRadix> writer(output, cursors);
      emit(writer);
    }
  }
  return traffic;
}

namespace detail {

template <class Geometry, bool kStaged, SortItem Item>
void run_sort(std::span<const Item> input, std::span<Item> output, const RadixConfig& cfg,
              SortWorkspace<Item, Geometry>& ws, SortReport& report) {
  using clock = std::chrono::steady_clock;
  const std::size_t n = input.size();
  const std::size_t pes = cfg.pe_count;
  auto& workers = ws.workers();

  std::vector<const LaneSet<Item>*> buckets3(pes);
  for (std::size_t p = 0; p < pes; ++p) buckets3[p] = &workers[p].buckets3;

  GlobalPlan plan;
  std::vector<clock::time_point> started(pes), finished(pes);
  std::vector<std::array<PassTraffic, 4>> traffic(pes);
  clock::time_point plan_begin, plan_end;
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto fail = [&] {
    std::lock_guard lock(error_mutex);
    if (!error) error = std::current_exception();
    failed.store(true);
  };

  auto complete = [&]() noexcept {
    plan_begin = clock::now();
    plan = build_plan<Item>(buckets3, pes);
    plan_end = clock::now();
  };
  std::barrier sync(static_cast<std::ptrdiff_t>(pes), complete);

  auto worker = [&](std::size_t p) {
    if (cfg.pin_threads && pes > 1) pin_current_thread(p);
    auto& w = workers[p];
    started[p] = clock::now();
    try {
      const std::size_t lo = n * p / pes;
      const std::size_t hi = n * (p + 1) / pes;
      traffic[p][0] = msd_partition<Geometry, kStaged>(input.subspan(lo, hi - lo), w.buckets3,
                                                       *w.staging);
    } catch (...) {
      fail();
    }
    sync.arrive_and_wait();
    if (!failed.load()) {
      try {
        const auto [first, last] = plan.ranges[p];
        if (cfg.first_touch_output && first < last) {
          const std::size_t lo = plan.output_indices[first];
          const std::size_t hi = last < Geometry::kRadix ? plan.output_indices[last] : n;
          prefault_for_write(output.data() + lo, (hi - lo) * sizeof(Item));
        }
        auto local = local_sort<Geometry, kStaged>(first, last, std::span<const LaneSet<Item>* const>(buckets3), plan, output,
                                                   w.buckets0, w.buckets1, *w.staging);
        for (std::size_t i = 0; i < 3; ++i) traffic[p][i + 1] = local[i];
      } catch (...) {
        fail();
      }
    }
    finished[p] = clock::now();
  };

  if (pes == 1) {
    worker(0);
  } else {
    std::vector<std::jthread> threads;
    threads.reserve(pes);
    for (std::size_t p = 0; p < pes; ++p) threads.emplace_back(worker, p);
  }
  if (error) std::rethrow_exception(error);

  report.t0 = *std::min_element(started.begin(), started.end());
  report.t1 = *std::max_element(finished.begin(), finished.end());
  report.msd_seconds = std::chrono::duration<double>(plan_begin - report.t0).count();
  report.plan_seconds = std::chrono::duration<double>(plan_end - plan_begin).count();
  report.local_seconds = std::chrono::duration<double>(report.t1 - plan_end).count();
  for (const auto& t : traffic) {
    for (std::size_t i = 0; i < 4; ++i) {
      report.passes[i].bytes_written += t[i].bytes_written;
      report.passes[i].bytes_streamed += t[i].bytes_streamed;
    }
  }
}

}  // namespace detail

/// Stable sort of `input` by key into `output` (same size, disjoint).
/// With the reduced geometry, keys must fit in Geometry::kKeyBits.
template <class Geometry = StandardGeometry, SortItem Item>
SortReport radix_sort(std::span<const Item> input, std::span<Item> output, const RadixConfig& cfg,
                      SortWorkspace<Item, Geometry>* workspace = nullptr) {
  if (output.size() != input.size()) {
    throw std::invalid_argument("radix_sort: output size must equal input size");
  }
  if (cfg.pe_count == 0) throw std::invalid_argument("radix_sort: pe_count must be >= 1");
  if constexpr (Geometry::kKeyBits < 32) {
    for (const Item& item : input) {
      if (key_of(item) >> Geometry::kKeyBits) {
        throw std::invalid_argument("radix_sort: key wider than the configured key bits");
      }
    }
  }

  SortReport report;
  report.n = input.size();
  report.item_bytes = sizeof(Item);
  report.pe_count = cfg.pe_count;
  report.digit_bits = Geometry::kDigitBits;
  report.use_wc = cfg.use_wc;
  report.store_mode = cfg.use_wc ? cfg.store_mode : StoreMode::kPlain;
  const bool out_aligned = reinterpret_cast<std::uintptr_t>(output.data()) % kLineBytes == 0;
  report.final_store_mode = out_aligned ? report.store_mode : StoreMode::kPlain;
  report.stride =
      round_stride<Item>(cfg.stride.lane_items(input.size(), Geometry::kRadix, cfg.pe_count));
  if (input.empty()) {
    report.t0 = report.t1 = std::chrono::steady_clock::now();
    return report;
  }

  SortWorkspace<Item, Geometry> local_ws;
  SortWorkspace<Item, Geometry>& ws = workspace != nullptr ? *workspace : local_ws;
  ws.prepare(cfg.pe_count, report.stride, cfg.store_mode);

  if (cfg.use_wc) {
    detail::run_sort<Geometry, true>(input, output, cfg, ws, report);
  } else {
    detail::run_sort<Geometry, false>(input, output, cfg, ws, report);
  }
  report.reserved_lane_bytes = ws.reserved_lane_bytes();
  report.committed_lane_bytes = ws.committed_lane_bytes();
  return report;
}

SortReport sort_keys(std::span<const std::uint32_t> input, std::span<std::uint32_t> output,
                     const RadixConfig& cfg);
SortReport sort_pairs(std::span<const KeyValue> input, std::span<KeyValue> output,
                      const RadixConfig& cfg);

}  // namespace wcradix
