#pragma once

#include <concepts>
#include <cstddef>
#include <cstdint>

namespace wcradix {

/// A 32-bit key fused with a 32-bit payload into one 64-bit record.
struct KeyValue {
  std::uint32_t key;
  std::uint32_t value;

  friend bool operator==(const KeyValue&, const KeyValue&) = default;
};
static_assert(sizeof(KeyValue) == 8);

constexpr std::uint32_t key_of(std::uint32_t key) { return key; }
constexpr std::uint32_t key_of(const KeyValue& item) { return item.key; }

/// Record types the sorts accept: bare keys or key/value pairs. Both divide
/// a 64-byte cache line.
template <class T>
concept SortItem = std::same_as<T, std::uint32_t> || std::same_as<T, KeyValue>;

}  // namespace wcradix
