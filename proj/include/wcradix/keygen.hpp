#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "wcradix/item.hpp"

namespace wcradix {

/// WELL512 generator (Panneton, L'Ecuyer and Matsumoto), 32-bit output.
class Well512 {
 public:
  using result_type = std::uint32_t;

  /// Expands a 64-bit seed into the 16-word state with splitmix64. An
  /// all-zero state is replaced by a fixed non-zero one.
  explicit Well512(std::uint64_t seed = 0);

  /// Starts from an explicit state; all-zero is rejected.
  explicit Well512(const std::array<std::uint32_t, 16>& state, unsigned index = 0);

  result_type operator()();

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return UINT32_MAX; }

  const std::array<std::uint32_t, 16>& state() const { return state_; }
  unsigned index() const { return index_; }

 private:
  std::array<std::uint32_t, 16> state_{};
  unsigned index_ = 0;
};

struct Distribution {
  enum class Kind { kUniform, kAllEqual, kSorted, kReverse, kMsdSkew, kDuplicates };
  Kind kind = Kind::kUniform;
  /// kMsdSkew: probability that a key's top byte is forced to zero.
  double skew = 0.0;
  /// kDuplicates: number of distinct keys.
  std::size_t distinct = 1;

  static Distribution uniform() { return {}; }
  static Distribution all_equal() { return {Kind::kAllEqual}; }
  static Distribution sorted() { return {Kind::kSorted}; }
  static Distribution reverse() { return {Kind::kReverse}; }
  static Distribution msd_skew(double p) { return {Kind::kMsdSkew, p}; }
  static Distribution duplicates(std::size_t k) { return {Kind::kDuplicates, 0.0, k}; }

  /// Parses "uniform", "all-equal", "sorted", "reverse", "msd-skew[:p]"
  /// (default p = 0.9) and "duplicates[:k]" (default k = 16).
  static Distribution parse(std::string_view text);
  std::string name() const;
};

/// Deterministic keys for (n, dist, seed).
std::vector<std::uint32_t> generate_keys(std::size_t n, const Distribution& dist,
                                         std::uint64_t seed);

/// Keys from generate_keys with value = original index.
std::vector<KeyValue> generate_pairs(std::size_t n, const Distribution& dist, std::uint64_t seed);

}  // namespace wcradix
