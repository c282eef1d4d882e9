// Benchmark and verification harness behind the wcradix-bench tool.
#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wcradix/item.hpp"
#include "wcradix/keygen.hpp"
#include "wcradix/radix_sort.hpp"
#include "json.hpp"

namespace wcradix {

inline constexpr int kReportSchemaVersion = 1;

enum class Algo { kVm, kVmWc, kReference };
enum class OutputFormat { kHuman, kJson, kCsv };

const char* to_string(Algo algo);
Algo parse_algo(std::string_view text);

struct BenchSpec {
  std::size_t n = std::size_t{64} << 20;
  unsigned value_bits = 0;
  Algo algo = Algo::kVmWc;
  std::size_t threads = 1;
  Distribution dist = Distribution::uniform();
  std::uint64_t seed = 1;
  std::size_t repetitions = 1;
  OutputFormat format = OutputFormat::kHuman;
  bool verify = true;
  StridePolicy stride = StridePolicy::full();
  bool large_pages = true;
  bool streaming = true;
  /// Count the cold first run in the summary statistics.
  bool include_warmup = false;

  /// Throws std::invalid_argument on an inconsistent spec.
  void validate() const;
};

struct Verdict {
  enum class Kind { kPass, kCountMismatch, kOrder, kMultiset, kStability };
  Kind kind = Kind::kPass;
  std::size_t index = 0;
  std::string detail;

  bool ok() const { return kind == Kind::kPass; }
};

const char* to_string(Verdict::Kind kind);

/// Checks that `output` is `input` sorted by key. Key/value inputs whose
/// values are their original indices are also checked for stability.
Verdict verify(std::span<const std::uint32_t> output, std::span<const std::uint32_t> input);
Verdict verify(std::span<const KeyValue> output, std::span<const KeyValue> input);

/// Stable reference sort: (key, sequence) pairs through std::stable_sort.
template <SortItem Item>
std::vector<Item> reference_sort(std::span<const Item> input);

/// Order-sensitive 64-bit digest of a buffer.
std::uint64_t checksum(std::span<const std::byte> bytes);

struct ThroughputResult {
  std::size_t repetition = 0;
  bool cold = false;
  double items_per_second = 0;
  /// Earliest worker start and latest worker finish, in seconds since the
  /// harness started.
  double t0 = 0;
  double t1 = 0;
  double msd_seconds = 0;
  double plan_seconds = 0;
  double local_seconds = 0;
  std::uint64_t output_checksum = 0;
  bool verified = false;
  std::string verdict = "not-run";
  SortReport report;
};

struct BenchResult {
  BenchSpec spec;
  std::string store_mode;
  bool large_pages = false;
  std::size_t page_bytes = 0;
  unsigned hardware_threads = 0;
  std::vector<ThroughputResult> runs;  // runs[0] is the cold run
  double best_items_per_second = 0;
  double median_items_per_second = 0;
  /// First verification failure, if any.
  std::optional<Verdict> failure;
};

/// Generates, sorts, verifies and times spec.repetitions warm runs after
/// one cold run.
BenchResult run(const BenchSpec& spec);

nlohmann::json to_json(const ThroughputResult& r);
ThroughputResult throughput_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BenchResult& r);

void write_human(std::ostream& out, const BenchResult& r);
void write_csv(std::ostream& out, const BenchResult& r);

}  // namespace wcradix
