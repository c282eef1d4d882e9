#include "wcradix/keygen.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>

namespace wcradix {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

bool all_zero(const std::array<std::uint32_t, 16>& s) {
  return std::all_of(s.begin(), s.end(), [](std::uint32_t w) { return w == 0; });
}

}  // namespace

Well512::Well512(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (std::size_t i = 0; i < 16; i += 2) {
    const std::uint64_t r = splitmix64(x);
    state_[i] = static_cast<std::uint32_t>(r);
    state_[i + 1] = static_cast<std::uint32_t>(r >> 32);
  }
  if (all_zero(state_)) state_[0] = 0x6A09E667u;
}

Well512::Well512(const std::array<std::uint32_t, 16>& state, unsigned index)
    : state_(state), index_(index & 15u) {
  if (all_zero(state_)) throw std::invalid_argument("Well512: state must not be all zero");
}

Well512::result_type Well512::operator()() {
  std::uint32_t a = state_[index_];
  std::uint32_t c = state_[(index_ + 13) & 15];
  const std::uint32_t b = a ^ c ^ (a << 16) ^ (c << 15);
  c = state_[(index_ + 9) & 15];
  c ^= c >> 11;
  a = state_[index_] = b ^ c;
  const std::uint32_t d = a ^ ((a << 5) & 0xDA442D24u);
  index_ = (index_ + 15) & 15;
  a = state_[index_];
  state_[index_] = a ^ b ^ d ^ (a << 2) ^ (b << 18) ^ (c << 28);
  return state_[index_];
}

Distribution Distribution::parse(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view head = text.substr(0, colon);
  const std::string_view arg = colon == std::string_view::npos ? std::string_view{}
                                                               : text.substr(colon + 1);
  auto bad = [&] { return std::invalid_argument("unknown distribution '" + std::string(text) + "'"); };

  if (head == "uniform" && arg.empty()) return uniform();
  if (head == "all-equal" && arg.empty()) return all_equal();
  if (head == "sorted" && arg.empty()) return sorted();
  if (head == "reverse" && arg.empty()) return reverse();
  if (head == "msd-skew") {
    if (arg.empty()) return msd_skew(0.9);
    double p = 0;
    std::istringstream in{std::string(arg)};
    if (!(in >> p) || !in.eof() || p < 0.0 || p > 1.0) throw bad();
    return msd_skew(p);
  }
  if (head == "duplicates") {
    if (arg.empty()) return duplicates(16);
    std::size_t k = 0;
    auto [ptr, ec] = std::from_chars(arg.data(), arg.data() + arg.size(), k);
    if (ec != std::errc{} || ptr != arg.data() + arg.size() || k == 0) throw bad();
    return duplicates(k);
  }
  throw bad();
}

std::string Distribution::name() const {
  switch (kind) {
    case Kind::kUniform: return "uniform";
    case Kind::kAllEqual: return "all-equal";
    case Kind::kSorted: return "sorted";
    case Kind::kReverse: return "reverse";
    case Kind::kMsdSkew: {
      std::ostringstream out;
      out << "msd-skew:" << skew;
      return out.str();
    }
    case Kind::kDuplicates: return "duplicates:" + std::to_string(distinct);
  }
  return "?";
}

std::vector<std::uint32_t> generate_keys(std::size_t n, const Distribution& dist,
                                         std::uint64_t seed) {
  Well512 rng(seed);
  std::vector<std::uint32_t> keys(n);
  switch (dist.kind) {
    case Distribution::Kind::kUniform:
    case Distribution::Kind::kSorted:
    case Distribution::Kind::kReverse:
      for (auto& k : keys) k = rng();
      if (dist.kind == Distribution::Kind::kSorted) std::sort(keys.begin(), keys.end());
      if (dist.kind == Distribution::Kind::kReverse) {
        std::sort(keys.begin(), keys.end(), std::greater<>{});
      }
      break;
    case Distribution::Kind::kAllEqual:
      std::fill(keys.begin(), keys.end(), rng());
      break;
    case Distribution::Kind::kMsdSkew: {
      // p = 1 must hit every key, so compare against 2^32 in 64 bits.
      const auto threshold = static_cast<std::uint64_t>(dist.skew * 4294967296.0);
      for (auto& k : keys) {
        const std::uint32_t key = rng();
        k = rng() < threshold ? (key & 0x00FFFFFFu) : key;
      }
      break;
    }
    case Distribution::Kind::kDuplicates: {
      if (dist.distinct == 0) throw std::invalid_argument("duplicates: need at least one key");
      std::vector<std::uint32_t> pool(dist.distinct);
      for (auto& k : pool) k = rng();
      for (auto& k : keys) k = pool[rng() % pool.size()];
      break;
    }
  }
  return keys;
}

std::vector<KeyValue> generate_pairs(std::size_t n, const Distribution& dist, std::uint64_t seed) {
  const auto keys = generate_keys(n, dist, seed);
  std::vector<KeyValue> items(n);
  for (std::size_t i = 0; i < n; ++i) items[i] = {keys[i], static_cast<std::uint32_t>(i)};
  return items;
}

}  // namespace wcradix
