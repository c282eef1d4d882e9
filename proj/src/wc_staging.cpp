#include "wcradix/wc_staging.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <mutex>
#include <unordered_map>

#if defined(__SSE2__)
#include <emmintrin.h>
#endif

namespace wcradix {

const char* to_string(StoreMode mode) {
  return mode == StoreMode::kStreaming ? "streaming" : "plain";
}

std::size_t cache_line_bytes() {
#ifdef _SC_LEVEL1_DCACHE_LINESIZE
  long v = ::sysconf(_SC_LEVEL1_DCACHE_LINESIZE);
  if (v > 0) return static_cast<std::size_t>(v);
#endif
  return kLineBytes;
}

bool streaming_stores_supported() {
#if defined(__SSE2__) && (defined(__x86_64__) || defined(__i386__))
  static const bool supported = __builtin_cpu_supports("sse2") && cache_line_bytes() == kLineBytes;
  return supported;
#else
  return false;
#endif
}

StoreMode default_store_mode() {
  static std::once_flag warned;
  if (cache_line_bytes() != kLineBytes) {
    std::call_once(warned, [] {
      std::fprintf(stderr,
                   "wcradix: cache line is %zu bytes, expected %zu; using plain stores\n",
                   cache_line_bytes(), kLineBytes);
    });
    return StoreMode::kPlain;
  }
  return streaming_stores_supported() ? StoreMode::kStreaming : StoreMode::kPlain;
}

void flush_line(const void* src, void* dst, StoreMode mode) {
  assert(reinterpret_cast<std::uintptr_t>(src) % kLineBytes == 0);
  assert(reinterpret_cast<std::uintptr_t>(dst) % kLineBytes == 0);
#if defined(__SSE2__)
  if (mode == StoreMode::kStreaming) {
    const auto* s = static_cast<const __m128i*>(src);
    auto* d = static_cast<__m128i*>(dst);
    const __m128i a = _mm_load_si128(s + 0);
    const __m128i b = _mm_load_si128(s + 1);
    const __m128i c = _mm_load_si128(s + 2);
    const __m128i e = _mm_load_si128(s + 3);
    _mm_stream_si128(d + 0, a);
    _mm_stream_si128(d + 1, b);
    _mm_stream_si128(d + 2, c);
    _mm_stream_si128(d + 3, e);
    return;
  }
#endif
  (void)mode;
  std::memcpy(dst, src, kLineBytes);
}

void store_fence() {
#if defined(__SSE2__)
  _mm_sfence();
#else
  std::atomic_thread_fence(std::memory_order_release);
#endif
}

LayoutDiagnostics layout_check(std::span<const std::uintptr_t> addresses, std::size_t alias_bytes,
                               std::size_t line_bytes) {
  LayoutDiagnostics d;
  d.buffers = addresses.size();
  const std::size_t classes = std::max<std::size_t>(1, alias_bytes / line_bytes);
  d.min_class_size = (d.buffers + classes - 1) / classes;

  std::unordered_map<std::uintptr_t, std::size_t> population;
  for (std::uintptr_t a : addresses) ++population[(a % alias_bytes) / line_bytes];
  for (const auto& [cls, count] : population) {
    d.conflicting_pairs += count * (count - 1) / 2;
    d.max_class_size = std::max(d.max_class_size, count);
  }
  d.flagged = d.max_class_size > d.min_class_size;
  return d;
}

}  // namespace wcradix
