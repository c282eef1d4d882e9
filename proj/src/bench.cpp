#include "wcradix/bench.hpp"

#include <algorithm>
#include <cstring>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

namespace wcradix {

const char* to_string(Algo algo) {
  switch (algo) {
    case Algo::kVm: return "vm";
    case Algo::kVmWc: return "vmwc";
    case Algo::kReference: return "ref";
  }
  return "?";
}

Algo parse_algo(std::string_view text) {
  if (text == "vm") return Algo::kVm;
  if (text == "vmwc" || text == "vm+wc") return Algo::kVmWc;
  if (text == "ref" || text == "reference") return Algo::kReference;
  throw std::invalid_argument("unknown algorithm '" + std::string(text) + "'");
}

const char* to_string(Verdict::Kind kind) {
  switch (kind) {
    case Verdict::Kind::kPass: return "pass";
    case Verdict::Kind::kCountMismatch: return "count-mismatch";
    case Verdict::Kind::kOrder: return "order";
    case Verdict::Kind::kMultiset: return "multiset";
    case Verdict::Kind::kStability: return "stability";
  }
  return "?";
}

void BenchSpec::validate() const {
  if (value_bits != 0 && value_bits != 32) throw std::invalid_argument("value bits must be 0 or 32");
  if (threads == 0) throw std::invalid_argument("threads must be >= 1");
  if (repetitions == 0) throw std::invalid_argument("repetitions must be >= 1");
  if (value_bits == 32 && n > UINT32_MAX) {
    throw std::invalid_argument("n must fit the 32-bit index payload");
  }
  if (stride.kind == StridePolicy::Kind::kExpectedUniform && !(stride.slack > 0)) {
    throw std::invalid_argument("stride slack must be positive");
  }
}

namespace {

Verdict count_mismatch(std::size_t got, std::size_t want) {
  return {Verdict::Kind::kCountMismatch, std::min(got, want),
          "output has " + std::to_string(got) + " items, input has " + std::to_string(want)};
}

Verdict order_violation(std::size_t i, std::uint32_t prev, std::uint32_t key) {
  return {Verdict::Kind::kOrder, i,
          "key " + std::to_string(key) + " at index " + std::to_string(i) + " follows " +
              std::to_string(prev)};
}

}  // namespace

Verdict verify(std::span<const std::uint32_t> output, std::span<const std::uint32_t> input) {
  if (output.size() != input.size()) return count_mismatch(output.size(), input.size());
  for (std::size_t i = 1; i < output.size(); ++i) {
    if (output[i] < output[i - 1]) return order_violation(i, output[i - 1], output[i]);
  }
  std::vector<std::uint32_t> expected(input.begin(), input.end());
  std::sort(expected.begin(), expected.end());
  for (std::size_t i = 0; i < output.size(); ++i) {
    if (output[i] != expected[i]) {
      return {Verdict::Kind::kMultiset, i,
              "key " + std::to_string(output[i]) + " at index " + std::to_string(i) +
                  " does not match the input multiset (expected " + std::to_string(expected[i]) +
                  ")"};
    }
  }
  return {};
}

Verdict verify(std::span<const KeyValue> output, std::span<const KeyValue> input) {
  if (output.size() != input.size()) return count_mismatch(output.size(), input.size());
  const std::size_t n = input.size();

  bool indexed = true;
  for (std::size_t i = 0; i < n && indexed; ++i) indexed = input[i].value == i;

  if (indexed) {
    std::vector<bool> seen(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      const KeyValue& cur = output[i];
      if (i > 0 && cur.key < output[i - 1].key) return order_violation(i, output[i - 1].key, cur.key);
      if (cur.value >= n || seen[cur.value] || input[cur.value] != cur) {
        return {Verdict::Kind::kMultiset, i,
                "record (" + std::to_string(cur.key) + ", " + std::to_string(cur.value) +
                    ") at index " + std::to_string(i) + " is not an unused input record"};
      }
      seen[cur.value] = true;
      if (i > 0 && cur.key == output[i - 1].key && cur.value < output[i - 1].value) {
        return {Verdict::Kind::kStability, i,
                "equal keys out of input order at index " + std::to_string(i) + " (original " +
                    std::to_string(output[i - 1].value) + " before " + std::to_string(cur.value) +
                    ")"};
      }
    }
    return {};
  }

  for (std::size_t i = 1; i < n; ++i) {
    if (output[i].key < output[i - 1].key) return order_violation(i, output[i - 1].key, output[i].key);
  }
  auto by_record = [](const KeyValue& a, const KeyValue& b) {
    return a.key != b.key ? a.key < b.key : a.value < b.value;
  };
  std::vector<KeyValue> want(input.begin(), input.end());
  std::vector<KeyValue> got(output.begin(), output.end());
  std::sort(want.begin(), want.end(), by_record);
  std::sort(got.begin(), got.end(), by_record);
  for (std::size_t i = 0; i < n; ++i) {
    if (want[i] != got[i]) {
      return {Verdict::Kind::kMultiset, i, "output records differ from the input multiset"};
    }
  }
  return {};
}

template <SortItem Item>
std::vector<Item> reference_sort(std::span<const Item> input) {
  std::vector<std::pair<std::uint32_t, std::size_t>> tagged(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) tagged[i] = {key_of(input[i]), i};
  std::stable_sort(tagged.begin(), tagged.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Item> out(input.size());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[tagged[i].second];
  return out;
}

template std::vector<std::uint32_t> reference_sort(std::span<const std::uint32_t>);
template std::vector<KeyValue> reference_sort(std::span<const KeyValue>);

std::uint64_t checksum(std::span<const std::byte> bytes) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  std::size_t i = 0;
  for (; i + 8 <= bytes.size(); i += 8) {
    std::uint64_t w;
    std::memcpy(&w, bytes.data() + i, 8);
    h = (h ^ w) * 0x100000001B3ull;
    h ^= h >> 29;
  }
  for (; i < bytes.size(); ++i) h = (h ^ std::to_integer<std::uint64_t>(bytes[i])) * 0x100000001B3ull;
  return h;
}

namespace {

using clock = std::chrono::steady_clock;

double since(clock::time_point origin, clock::time_point t) {
  return std::chrono::duration<double>(t - origin).count();
}

template <SortItem Item>
std::vector<Item> generate(const BenchSpec& spec) {
  if constexpr (std::is_same_v<Item, KeyValue>) {
    return generate_pairs(spec.n, spec.dist, spec.seed);
  } else {
    return generate_keys(spec.n, spec.dist, spec.seed);
  }
}

template <SortItem Item>
void run_typed(const BenchSpec& spec, BenchResult& result) {
  const clock::time_point origin = clock::now();
  const std::size_t bytes = std::max<std::size_t>(spec.n * sizeof(Item), 1);
  const PageMode pages = spec.large_pages ? PageMode::kLarge : PageMode::kSmall;

  ReservedRegion input_region = ReservedRegion::reserve(bytes, pages);
  ReservedRegion output_region = ReservedRegion::reserve(bytes, pages);
  result.large_pages = input_region.large_pages();
  std::span<Item> input(input_region.as<Item>(), spec.n);
  std::span<Item> output(output_region.as<Item>(), spec.n);
  {
    const auto generated = generate<Item>(spec);
    input_region.touch(0, spec.n * sizeof(Item));
    std::copy(generated.begin(), generated.end(), input.begin());
  }
  std::span<const Item> in(input.data(), input.size());

  RadixConfig cfg;
  cfg.pe_count = spec.threads;
  cfg.stride = spec.stride;
  cfg.use_wc = spec.algo == Algo::kVmWc;
  cfg.store_mode = spec.streaming ? default_store_mode() : StoreMode::kPlain;
  result.store_mode = to_string(cfg.use_wc ? cfg.store_mode : StoreMode::kPlain);
  SortWorkspace<Item> workspace;

  for (std::size_t rep = 0; rep <= spec.repetitions; ++rep) {
    ThroughputResult r;
    r.repetition = rep;
    r.cold = rep == 0;
    if (spec.algo == Algo::kReference) {
      r.report.n = spec.n;
      r.report.item_bytes = sizeof(Item);
      r.report.pe_count = 1;
      r.report.t0 = clock::now();
      const auto sorted = reference_sort<Item>(in);
      r.report.t1 = clock::now();
      std::copy(sorted.begin(), sorted.end(), output.begin());
    } else {
      r.report = radix_sort<StandardGeometry>(in, output, cfg, &workspace);
    }
    r.report.large_pages = result.large_pages;
    r.t0 = since(origin, r.report.t0);
    r.t1 = since(origin, r.report.t1);
    const double elapsed = r.t1 - r.t0;
    r.items_per_second = elapsed > 0 ? static_cast<double>(spec.n) / elapsed : 0.0;
    r.msd_seconds = r.report.msd_seconds;
    r.plan_seconds = r.report.plan_seconds;
    r.local_seconds = r.report.local_seconds;
    r.output_checksum = checksum(std::as_bytes(std::span<const Item>(output)));
    if (spec.verify) {
      const Verdict v = verify(std::span<const Item>(output), in);
      r.verified = true;
      r.verdict = v.ok() ? "pass" : std::string(to_string(v.kind)) + " at " + std::to_string(v.index);
      if (!v.ok()) {
        result.failure = v;
        result.runs.push_back(std::move(r));
        return;
      }
    }
    result.runs.push_back(std::move(r));
  }
}

}  // namespace

BenchResult run(const BenchSpec& spec) {
  spec.validate();
  BenchResult result;
  result.spec = spec;
  result.page_bytes = system_page_bytes();
  result.hardware_threads = std::thread::hardware_concurrency();
  if (spec.value_bits == 32) {
    run_typed<KeyValue>(spec, result);
  } else {
    run_typed<std::uint32_t>(spec, result);
  }

  std::vector<double> rates;
  for (const auto& r : result.runs) {
    if (!r.cold || spec.include_warmup) rates.push_back(r.items_per_second);
  }
  if (!rates.empty()) {
    std::sort(rates.begin(), rates.end());
    result.best_items_per_second = rates.back();
    result.median_items_per_second = rates.size() % 2 == 1
                                         ? rates[rates.size() / 2]
                                         : (rates[rates.size() / 2 - 1] + rates[rates.size() / 2]) / 2;
  }
  return result;
}

namespace {

nlohmann::json report_json(const SortReport& s) {
  nlohmann::json passes = nlohmann::json::array();
  for (const auto& p : s.passes) {
    passes.push_back({{"bytes_written", p.bytes_written}, {"bytes_streamed", p.bytes_streamed}});
  }
  return {{"n", s.n},
          {"item_bytes", s.item_bytes},
          {"pe_count", s.pe_count},
          {"digit_bits", s.digit_bits},
          {"stride", s.stride},
          {"use_wc", s.use_wc},
          {"store_mode", to_string(s.store_mode)},
          {"final_store_mode", to_string(s.final_store_mode)},
          {"large_pages", s.large_pages},
          {"passes", passes},
          {"reserved_lane_bytes", s.reserved_lane_bytes},
          {"committed_lane_bytes", s.committed_lane_bytes}};
}

StoreMode store_mode_from(const std::string& s) {
  return s == "streaming" ? StoreMode::kStreaming : StoreMode::kPlain;
}

SortReport report_from_json(const nlohmann::json& j) {
  SortReport s;
  s.n = j.at("n").get<std::size_t>();
  s.item_bytes = j.at("item_bytes").get<std::size_t>();
  s.pe_count = j.at("pe_count").get<std::size_t>();
  s.digit_bits = j.at("digit_bits").get<unsigned>();
  s.stride = j.at("stride").get<std::size_t>();
  s.use_wc = j.at("use_wc").get<bool>();
  s.store_mode = store_mode_from(j.at("store_mode").get<std::string>());
  s.final_store_mode = store_mode_from(j.at("final_store_mode").get<std::string>());
  s.large_pages = j.at("large_pages").get<bool>();
  const auto& passes = j.at("passes");
  for (std::size_t i = 0; i < s.passes.size() && i < passes.size(); ++i) {
    s.passes[i].bytes_written = passes[i].at("bytes_written").get<std::uint64_t>();
    s.passes[i].bytes_streamed = passes[i].at("bytes_streamed").get<std::uint64_t>();
  }
  s.reserved_lane_bytes = j.at("reserved_lane_bytes").get<std::size_t>();
  s.committed_lane_bytes = j.at("committed_lane_bytes").get<std::size_t>();
  return s;
}

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

}  // namespace

nlohmann::json to_json(const ThroughputResult& r) {
  return {{"repetition", r.repetition},
          {"cold", r.cold},
          {"items_per_second", r.items_per_second},
          {"t0", r.t0},
          {"t1", r.t1},
          {"msd_seconds", r.msd_seconds},
          {"plan_seconds", r.plan_seconds},
          {"local_seconds", r.local_seconds},
          {"output_checksum", hex(r.output_checksum)},
          {"verified", r.verified},
          {"verdict", r.verdict},
          {"report", report_json(r.report)}};
}

ThroughputResult throughput_from_json(const nlohmann::json& j) {
  ThroughputResult r;
  r.repetition = j.at("repetition").get<std::size_t>();
  r.cold = j.at("cold").get<bool>();
  r.items_per_second = j.at("items_per_second").get<double>();
  r.t0 = j.at("t0").get<double>();
  r.t1 = j.at("t1").get<double>();
  r.msd_seconds = j.at("msd_seconds").get<double>();
  r.plan_seconds = j.at("plan_seconds").get<double>();
  r.local_seconds = j.at("local_seconds").get<double>();
  r.output_checksum = std::stoull(j.at("output_checksum").get<std::string>(), nullptr, 16);
  r.verified = j.at("verified").get<bool>();
  r.verdict = j.at("verdict").get<std::string>();
  r.report = report_from_json(j.at("report"));
  return r;
}

nlohmann::json to_json(const BenchResult& r) {
  const BenchSpec& s = r.spec;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : r.runs) runs.push_back(to_json(run));
  nlohmann::json stride = s.stride.kind == StridePolicy::Kind::kFull
                              ? nlohmann::json("full")
                              : nlohmann::json("uniform:" + std::to_string(s.stride.slack));
  nlohmann::json j = {
      {"schema", "wcradix.bench"},
      {"version", kReportSchemaVersion},
      {"spec",
       {{"n", s.n},
        {"value_bits", s.value_bits},
        {"algo", to_string(s.algo)},
        {"threads", s.threads},
        {"dist", s.dist.name()},
        {"seed", s.seed},
        {"repetitions", s.repetitions},
        {"verify", s.verify},
        {"stride", stride},
        {"large_pages", s.large_pages},
        {"streaming", s.streaming},
        {"include_warmup", s.include_warmup}}},
      {"host",
       {{"hardware_threads", r.hardware_threads},
        {"page_bytes", r.page_bytes},
        {"store_mode", r.store_mode},
        {"large_pages", r.large_pages}}},
      {"reference_context",
       {{"note", "reference figures for 64 Mi uniform keys on a dual-socket Xeon W5580 host; not comparable across hosts"},
        {"vmwc_items_per_second", 621e6},
        {"vm_items_per_second", 334e6}}},
      {"runs", runs},
      {"best_items_per_second", r.best_items_per_second},
      {"median_items_per_second", r.median_items_per_second}};
  if (r.failure) {
    j["failure"] = {{"kind", to_string(r.failure->kind)},
                    {"index", r.failure->index},
                    {"detail", r.failure->detail}};
  }
  return j;
}

void write_human(std::ostream& out, const BenchResult& r) {
  const BenchSpec& s = r.spec;
  out << "wcradix-bench  algo=" << to_string(s.algo) << "  n=" << s.n
      << "  values=" << s.value_bits << "  threads=" << s.threads << "  dist=" << s.dist.name()
      << "  seed=" << s.seed << "\n";
  out << "host: " << r.hardware_threads << " hw threads, page " << r.page_bytes
      << " B, stores " << r.store_mode << ", large pages " << (r.large_pages ? "on" : "off")
      << "\n";
  out << "reference: 621 M/s vm+wc, 334 M/s vm (64 Mi keys, 2x Xeon W5580)\n";
  out << std::fixed;
  for (const auto& run : r.runs) {
    out << (run.cold ? "  cold " : "  rep  ") << std::setw(3) << run.repetition << "  "
        << std::setprecision(1) << std::setw(9) << run.items_per_second / 1e6 << " M/s"
        << std::setprecision(4) << "  msd " << run.msd_seconds << " s  plan " << run.plan_seconds
        << " s  local " << run.local_seconds << " s  written "
        << run.report.total_bytes_written() << " B  verdict " << run.verdict << "\n";
  }
  out << std::setprecision(1) << "best " << r.best_items_per_second / 1e6 << " M/s, median "
      << r.median_items_per_second / 1e6 << " M/s\n";
  if (r.failure) {
    out << "VERIFICATION FAILED: " << to_string(r.failure->kind) << " at index "
        << r.failure->index << ": " << r.failure->detail << "\n";
  }
}

void write_csv(std::ostream& out, const BenchResult& r) {
  const BenchSpec& s = r.spec;
  out << "algo,n,value_bits,threads,dist,seed,repetition,cold,items_per_second,t0,t1,"
         "msd_seconds,plan_seconds,local_seconds,bytes_written,committed_lane_bytes,"
         "output_checksum,verdict\n";
  out << std::setprecision(9);
  for (const auto& run : r.runs) {
    out << to_string(s.algo) << ',' << s.n << ',' << s.value_bits << ',' << s.threads << ','
        << s.dist.name() << ',' << s.seed << ',' << run.repetition << ',' << (run.cold ? 1 : 0)
        << ',' << run.items_per_second << ',' << run.t0 << ',' << run.t1 << ','
        << run.msd_seconds << ',' << run.plan_seconds << ',' << run.local_seconds << ','
        << run.report.total_bytes_written() << ',' << run.report.committed_lane_bytes << ','
        << hex(run.output_checksum) << ',' << run.verdict << '\n';
  }
}

}  // namespace wcradix
