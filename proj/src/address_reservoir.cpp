#include "wcradix/address_reservoir.hpp"

#include <sys/mman.h>
#include <unistd.h>

#include <atomic>
#include <bit>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

namespace wcradix {

namespace {

constexpr std::size_t kLargePageBytes = std::size_t{2} << 20;

std::size_t round_up(std::size_t value, std::size_t multiple) {
  return (value + multiple - 1) / multiple * multiple;
}

bool env_disables_large_pages() {
  const char* v = std::getenv(kNoLargePagesEnv);
  return v != nullptr && *v != '\0' && std::strcmp(v, "0") != 0;
}

void* map_reserved(std::size_t bytes) {
  void* p = ::mmap(nullptr, bytes, PROT_READ | PROT_WRITE,
                   MAP_PRIVATE | MAP_ANONYMOUS | MAP_NORESERVE, -1, 0);
  return p == MAP_FAILED ? nullptr : p;
}

}  // namespace

std::size_t system_page_bytes() {
  static const std::size_t bytes = [] {
    long v = ::sysconf(_SC_PAGESIZE);
    return v > 0 ? static_cast<std::size_t>(v) : std::size_t{4096};
  }();
  return bytes;
}

bool large_pages_available() {
  if (env_disables_large_pages()) return false;
#ifdef MADV_HUGEPAGE
  std::ifstream f("/sys/kernel/mm/transparent_hugepage/enabled");
  std::string line;
  if (!std::getline(f, line)) return false;
  return line.find("[never]") == std::string::npos;
#else
  return false;
#endif
}

std::size_t physical_memory_bytes() {
  long pages = ::sysconf(_SC_PHYS_PAGES);
  if (pages <= 0) return SIZE_MAX;
  return static_cast<std::size_t>(pages) * system_page_bytes();
}

std::size_t process_resident_bytes() {
  std::ifstream f("/proc/self/statm");
  std::size_t size = 0, resident = 0;
  if (!(f >> size >> resident)) return 0;
  return resident * system_page_bytes();
}

struct ReservedRegion::Impl {
  std::byte* base = nullptr;
  std::size_t reserved = 0;
  std::size_t page = 0;
  std::size_t commit_limit = 0;
  bool large = false;

  // One bit per small page; lives in its own lazily committed mapping so
  // that the bookkeeping for a huge reservation costs no resident memory.
  std::uint64_t* bitmap = nullptr;
  std::size_t bitmap_bytes = 0;
  std::atomic<std::size_t> committed{0};

  ~Impl() {
    if (base != nullptr) ::munmap(base, reserved);
    if (bitmap != nullptr) ::munmap(bitmap, bitmap_bytes);
  }
};

ReservedRegion::ReservedRegion() noexcept = default;
ReservedRegion::ReservedRegion(ReservedRegion&&) noexcept = default;
ReservedRegion& ReservedRegion::operator=(ReservedRegion&&) noexcept = default;
ReservedRegion::~ReservedRegion() = default;

ReservedRegion ReservedRegion::reserve(std::size_t capacity, PageMode mode,
                                       std::size_t commit_limit) {
  if (capacity == 0) throw std::invalid_argument("reserve: capacity must be > 0");
  if constexpr (sizeof(void*) < 8) {
    throw ReservationError("reserve: virtual-memory sorting requires a 64-bit address space");
  }

  auto impl = std::make_unique<Impl>();
  impl->page = system_page_bytes();
  impl->reserved = round_up(capacity, impl->page);
  impl->commit_limit = commit_limit != 0 ? commit_limit : physical_memory_bytes();

  const bool want_large = mode == PageMode::kLarge && large_pages_available();
  if (want_large) {
    // Over-reserve so the base can sit on a large-page boundary.
    const std::size_t padded = impl->reserved + kLargePageBytes;
    auto* raw = static_cast<std::byte*>(map_reserved(padded));
    if (raw == nullptr) {
      throw ReservationError("reserve: mmap of " + std::to_string(padded) +
                             " bytes failed: " + std::strerror(errno));
    }
    auto addr = reinterpret_cast<std::uintptr_t>(raw);
    std::uintptr_t aligned = round_up(addr, kLargePageBytes);
    std::size_t head = aligned - addr;
    std::size_t tail = padded - head - impl->reserved;
    if (head != 0) ::munmap(raw, head);
    if (tail != 0) ::munmap(raw + head + impl->reserved, tail);
    impl->base = raw + head;
#ifdef MADV_HUGEPAGE
    impl->large = ::madvise(impl->base, impl->reserved, MADV_HUGEPAGE) == 0;
#endif
  } else {
    impl->base = static_cast<std::byte*>(map_reserved(impl->reserved));
    if (impl->base == nullptr) {
      throw ReservationError("reserve: mmap of " + std::to_string(impl->reserved) +
                             " bytes failed: " + std::strerror(errno));
    }
  }

  const std::size_t pages = impl->reserved / impl->page;
  impl->bitmap_bytes = round_up((pages + 63) / 64 * sizeof(std::uint64_t), impl->page);
  impl->bitmap = static_cast<std::uint64_t*>(map_reserved(impl->bitmap_bytes));
  if (impl->bitmap == nullptr) {
    throw ReservationError("reserve: commit bitmap mapping failed");
  }

  ReservedRegion region;
  region.impl_ = std::move(impl);
  return region;
}

const ReservedRegion::Impl& ReservedRegion::checked() const {
  if (!impl_) throw RegionReleasedError("region is not reserved (released or moved-from)");
  return *impl_;
}

ReservedRegion::Impl& ReservedRegion::checked() {
  if (!impl_) throw RegionReleasedError("region is not reserved (released or moved-from)");
  return *impl_;
}

std::size_t ReservedRegion::touch(std::size_t offset, std::size_t length) {
  Impl& r = checked();
  if (length == 0) return 0;
  if (offset > r.reserved || length > r.reserved - offset) {
    throw std::out_of_range("touch: range exceeds reservation");
  }
  const std::size_t first = offset / r.page;
  const std::size_t last = (offset + length - 1) / r.page;

  std::size_t fresh_pages = 0;
  for (std::size_t word = first / 64; word <= last / 64; ++word) {
    const std::size_t lo = word == first / 64 ? first % 64 : 0;
    const std::size_t hi = word == last / 64 ? last % 64 : 63;
    const std::uint64_t mask =
        (hi == 63 ? ~std::uint64_t{0} : ((std::uint64_t{1} << (hi + 1)) - 1)) &
        ~((std::uint64_t{1} << lo) - 1);
    std::atomic_ref<std::uint64_t> bits(r.bitmap[word]);
    if ((bits.load(std::memory_order_relaxed) & mask) == mask) continue;
    const std::uint64_t old = bits.fetch_or(mask, std::memory_order_relaxed);
    fresh_pages += static_cast<std::size_t>(std::popcount(mask & ~old));
  }
  if (fresh_pages == 0) return 0;

  const std::size_t delta = fresh_pages * r.page;
  const std::size_t total = r.committed.fetch_add(delta, std::memory_order_relaxed) + delta;
  if (total > r.commit_limit) {
    throw CommitError("touch: committing " + std::to_string(delta) + " bytes exceeds the limit of " +
                      std::to_string(r.commit_limit) + " bytes");
  }
  return delta;
}

std::size_t ReservedRegion::committed_bytes() const {
  return checked().committed.load(std::memory_order_relaxed);
}

std::size_t ReservedRegion::reserved_bytes() const { return checked().reserved; }

std::size_t ReservedRegion::page_bytes() const { return checked().page; }

bool ReservedRegion::large_pages() const { return checked().large; }

std::byte* ReservedRegion::data() const { return checked().base; }

void ReservedRegion::release() {
  checked();
  impl_.reset();
}

}  // namespace wcradix
