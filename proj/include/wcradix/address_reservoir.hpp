// Address-space reservation with lazily committed pages.
//
// A ReservedRegion claims a (possibly huge) range of virtual addresses
// without attaching physical memory. Pages are backed by the OS on first
// write (demand paging); the region keeps its own commit accounting, fed by
// explicit touch() calls at the sites that write into it. The accounting is
// exact: committed_bytes() == page_bytes() * |distinct pages touched|.
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>

namespace wcradix {

/// Environment variable that force-disables large pages when set to a
/// non-empty value other than "0".
inline constexpr const char* kNoLargePagesEnv = "WCRADIX_NO_LARGE_PAGES";

/// Address space could not be reserved (exhausted, 32-bit host, ...).
class ReservationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Physical memory for a touched range could not be committed.
class CommitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation on a region that was released (or never reserved).
class RegionReleasedError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class PageMode { kSmall, kLarge };

/// Small-page size reported by the OS.
std::size_t system_page_bytes();

/// Whether large (transparent huge) pages can be requested on this host,
/// taking kNoLargePagesEnv into account.
bool large_pages_available();

/// Physical memory of the host in bytes; the default commit limit.
std::size_t physical_memory_bytes();

/// Resident set size of the calling process, from the OS.
std::size_t process_resident_bytes();

class ReservedRegion {
 public:
  ReservedRegion() noexcept;
  ReservedRegion(ReservedRegion&&) noexcept;
  ReservedRegion& operator=(ReservedRegion&&) noexcept;
  ReservedRegion(const ReservedRegion&) = delete;
  ReservedRegion& operator=(const ReservedRegion&) = delete;
  ~ReservedRegion();

  /// Reserves at least `capacity` bytes (rounded up to whole pages).
  /// `commit_limit` caps the accounted commit; 0 means physical memory.
  /// A large-page request falls back to small pages when unavailable;
  /// large_pages() reports what was granted.
  static ReservedRegion reserve(std::size_t capacity,
                                PageMode mode = PageMode::kSmall,
                                std::size_t commit_limit = 0);

  /// Commits every page overlapping [offset, offset + length) and returns
  /// the number of newly committed bytes. Safe to call concurrently.
  std::size_t touch(std::size_t offset, std::size_t length);

  std::size_t committed_bytes() const;
  std::size_t reserved_bytes() const;
  std::size_t page_bytes() const;
  bool large_pages() const;
  bool valid() const noexcept { return impl_ != nullptr; }

  std::byte* data() const;
  template <class T>
  T* as() const {
    return reinterpret_cast<T*>(data());
  }

  /// Returns address range and pages to the OS. A second release throws
  /// RegionReleasedError.
  void release();

 private:
  struct Impl;
  const Impl& checked() const;
  Impl& checked();

  std::unique_ptr<Impl> impl_;
};

}  // namespace wcradix
