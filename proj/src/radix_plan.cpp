#include <pthread.h>
#include <sched.h>
#include <sys/mman.h>

#include <cmath>

#include "wcradix/radix_sort.hpp"

#ifndef MADV_POPULATE_WRITE
#define MADV_POPULATE_WRITE 23
#endif

namespace wcradix {

std::size_t StridePolicy::lane_items(std::size_t n, std::size_t radix,
                                     std::size_t pe_count) const {
  if (kind == Kind::kFull) return n;
  const double expected = static_cast<double>(n) / static_cast<double>(radix * pe_count);
  const auto items = static_cast<std::size_t>(std::ceil(slack * expected)) + kLineBytes / 4;
  return std::min(items, n);
}

GlobalPlan plan_from_sizes(std::vector<std::size_t> bucket_sizes, std::size_t pe_count) {
  if (pe_count == 0) throw std::invalid_argument("plan_from_sizes: pe_count must be >= 1");
  GlobalPlan plan;
  const std::size_t radix = bucket_sizes.size();
  plan.output_indices.resize(radix);
  std::size_t total = 0;
  for (std::size_t i = 0; i < radix; ++i) {
    plan.output_indices[i] = total;
    total += bucket_sizes[i];
  }

  plan.owner.resize(radix);
  plan.ranges.assign(pe_count, {0, 0});
  std::size_t pe = 0;
  std::size_t running = 0;
  for (std::size_t v = 0; v < radix; ++v) {
    plan.owner[v] = static_cast<std::uint32_t>(pe);
    running += bucket_sizes[v];
    // Close this worker's block once it holds its share of the first pe+1
    // shares. Compared in 128 bits: running * pe_count overflows for huge n.
    if (pe + 1 < pe_count &&
        static_cast<unsigned __int128>(running) * pe_count >=
            static_cast<unsigned __int128>(total) * (pe + 1)) {
      ++pe;
    }
  }

  // Owners are non-decreasing, so each worker's values form one block.
  std::vector<bool> seen(pe_count, false);
  for (std::size_t v = 0; v < radix; ++v) {
    const auto p = plan.owner[v];
    if (!seen[p]) {
      plan.ranges[p].first = static_cast<std::uint32_t>(v);
      seen[p] = true;
    }
    plan.ranges[p].second = static_cast<std::uint32_t>(v + 1);
  }
  plan.bucket_sizes = std::move(bucket_sizes);
  return plan;
}

namespace detail {

void pin_current_thread(std::size_t pe) {
  const unsigned cpus = std::thread::hardware_concurrency();
  if (cpus == 0) return;
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(pe % cpus, &set);
  ::pthread_setaffinity_np(::pthread_self(), sizeof(set), &set);
}

// Only pages entirely inside the range are populated: the boundary pages
// are shared with the neighbouring worker's output.
void prefault_for_write(void* begin, std::size_t bytes) {
  const std::size_t page = system_page_bytes();
  auto lo = reinterpret_cast<std::uintptr_t>(begin);
  auto hi = lo + bytes;
  lo = (lo + page - 1) / page * page;
  hi = hi / page * page;
  if (hi <= lo) return;
  ::madvise(reinterpret_cast<void*>(lo), hi - lo, MADV_POPULATE_WRITE);
}

}  // namespace detail

SortReport sort_keys(std::span<const std::uint32_t> input, std::span<std::uint32_t> output,
                     const RadixConfig& cfg) {
  return radix_sort<StandardGeometry>(input, output, cfg);
}

SortReport sort_pairs(std::span<const KeyValue> input, std::span<KeyValue> output,
                      const RadixConfig& cfg) {
  return radix_sort<StandardGeometry>(input, output, cfg);
}

}  // namespace wcradix
