// wcradix-bench: generate keys, sort, verify and report throughput.
//
// Exit codes: 0 pass, 1 verification failure, 2 configuration error,
// 3 resource failure (reservation, commit or lane overflow).

#include <iostream>
#include <new>
#include <string>

#include "CLI11.hpp"
#include "wcradix/bench.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitResource = 3;

wcradix::StridePolicy parse_stride(const std::string& text) {
  if (text == "full") return wcradix::StridePolicy::full();
  const std::string prefix = "uniform";
  if (text.rfind(prefix, 0) == 0) {
    if (text.size() == prefix.size()) return wcradix::StridePolicy::uniform(2.0);
    if (text[prefix.size()] == ':') {
      std::size_t used = 0;
      const std::string arg = text.substr(prefix.size() + 1);
      const double slack = std::stod(arg, &used);
      if (used == arg.size() && slack > 0) return wcradix::StridePolicy::uniform(slack);
    }
  }
  throw std::invalid_argument("bad --stride '" + text + "' (full | uniform:<slack>)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual-memory radix sort benchmark and verifier"};

  wcradix::BenchSpec spec;
  std::string algo = "vmwc";
  std::string dist = "uniform";
  std::string format = "human";
  std::string stride = "full";
  bool no_verify = false;
  bool no_large_pages = false;
  bool no_streaming = false;

  app.add_option("--n", spec.n, "Item count")->capture_default_str();
  app.add_option("--values", spec.value_bits, "Payload bits per item")
      ->check(CLI::IsMember({0u, 32u}))
      ->capture_default_str();
  app.add_option("--algo", algo, "vm | vmwc | ref")->capture_default_str();
  app.add_option("--threads", spec.threads, "Worker count")->capture_default_str();
  app.add_option("--dist", dist,
                 "uniform | all-equal | sorted | reverse | msd-skew[:p] | duplicates[:k]")
      ->capture_default_str();
  app.add_option("--seed", spec.seed, "Generator seed")->capture_default_str();
  app.add_option("--reps", spec.repetitions, "Measured repetitions after the cold run")
      ->capture_default_str();
  app.add_option("--format", format, "human | json | csv")
      ->check(CLI::IsMember({"human", "json", "csv"}))
      ->capture_default_str();
  app.add_option("--stride", stride, "Lane capacity: full | uniform:<slack>")
      ->capture_default_str();
  app.add_flag("--no-verify", no_verify, "Skip output verification");
  app.add_flag("--no-large-pages", no_large_pages, "Back the input with small pages");
  app.add_flag("--no-streaming", no_streaming, "Use plain stores for line flushes");
  app.add_flag("--include-warmup", spec.include_warmup, "Count the cold run in the summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  wcradix::BenchResult result;
  try {
    spec.algo = wcradix::parse_algo(algo);
    spec.dist = wcradix::Distribution::parse(dist);
    spec.stride = parse_stride(stride);
    spec.format = format == "json"  ? wcradix::OutputFormat::kJson
                  : format == "csv" ? wcradix::OutputFormat::kCsv
                                    : wcradix::OutputFormat::kHuman;
    spec.verify = !no_verify;
    spec.large_pages = !no_large_pages;
    spec.streaming = !no_streaming;
    spec.validate();
  } catch (const std::exception& e) {
    std::cerr << "wcradix-bench: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    result = wcradix::run(spec);
  } catch (const std::invalid_argument& e) {
    std::cerr << "wcradix-bench: " << e.what() << "\n";
    return kExitConfig;
  } catch (const wcradix::ReservationError& e) {
    std::cerr << "wcradix-bench: " << e.what() << "\n";
    return kExitResource;
  } catch (const wcradix::CommitError& e) {
    std::cerr << "wcradix-bench: " << e.what() << "\n";
    return kExitResource;
  } catch (const wcradix::LaneOverflowError& e) {
    std::cerr << "wcradix-bench: " << e.what() << " (try --stride full)\n";
    return kExitResource;
  } catch (const std::bad_alloc&) {
    std::cerr << "wcradix-bench: out of memory\n";
    return kExitResource;
  }

  switch (spec.format) {
    case wcradix::OutputFormat::kJson:
      std::cout << wcradix::to_json(result).dump(2) << "\n";
      break;
    case wcradix::OutputFormat::kCsv:
      wcradix::write_csv(std::cout, result);
      break;
    case wcradix::OutputFormat::kHuman:
      wcradix::write_human(std::cout, result);
      break;
  }
  if (result.failure) {
    std::cerr << "wcradix-bench: verification failed: " << wcradix::to_string(result.failure->kind)
              << " at index " << result.failure->index << ": " << result.failure->detail << "\n";
    return kExitVerifyFailed;
  }
  return kExitPass;
}
