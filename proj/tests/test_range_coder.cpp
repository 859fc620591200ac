#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "svae/errors.hpp"
#include "svae/range_coder.hpp"

using namespace svae;

namespace {

CdfTable uniform_binary_table() {
  return build_cdf_table([](int32_t) { return 0.5; }, 0.0, 0.0, 0, 1);
}

// random table over a random symbol range with a random (possibly very
// skewed) shape
CdfTable random_table(Rng& rng, int32_t& lo, int32_t& hi) {
  lo = -static_cast<int32_t>(uniform_index(rng, 40));
  hi = lo + 1 + static_cast<int32_t>(uniform_index(rng, 80));
  const double peak = uniform(rng, lo, hi);
  const double width = std::exp(uniform(rng, std::log(0.05), std::log(40.0)));
  return build_cdf_table_gaussian(peak, width, lo, hi);
}

double table_bits(const CdfTable& t, std::span<const int32_t> symbols) {
  double bits = 0.0;
  for (int32_t s : symbols) bits -= std::log2(t.implied_prob(t.index_of(s)));
  return bits;
}

}  // namespace

TEST_CASE("empty sequence produces only the flush bytes") {
  RangeEncoder enc;
  EncodedStream s = enc.finish();
  CHECK(s.symbol_count == 0);
  CHECK(s.bytes.size() == kRangeCoderFlushBytes);
  CHECK(s.bytes.size() <= 8);
}

TEST_CASE("1000 uniform binary symbols compress to 125 +- 8 bytes") {
  const CdfTable t = uniform_binary_table();
  Rng rng(2024);
  std::vector<int32_t> symbols(1000);
  for (auto& s : symbols) s = static_cast<int32_t>(uniform_index(rng, 2));
  EncodedStream stream =
      range_encode(symbols, [&](size_t) -> const CdfTable& { return t; });
  const double bytes = static_cast<double>(stream.bytes.size());
  CHECK(std::abs(bytes - 125.0) <= 8.0);
  auto back = range_decode(stream, [&](size_t) -> const CdfTable& { return t; },
                           symbols.size());
  CHECK(back == symbols);
}

TEST_CASE("10^4 randomized round trips are exact") {
  Rng rng(77);
  int failures = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    int32_t lo, hi;
    const CdfTable t = random_table(rng, lo, hi);
    const size_t n = uniform_index(rng, 50);
    std::vector<int32_t> symbols(n);
    for (auto& s : symbols)
      s = lo + static_cast<int32_t>(uniform_index(rng, static_cast<uint64_t>(hi - lo + 1)));
    EncodedStream stream =
        range_encode(symbols, [&](size_t) -> const CdfTable& { return t; });
    auto back =
        range_decode(stream, [&](size_t) -> const CdfTable& { return t; }, symbols.size());
    if (back != symbols) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("size bound: entropy + at most 16 bytes, tight within 1 percent") {
  Rng rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    int32_t lo, hi;
    const CdfTable t = random_table(rng, lo, hi);
    const size_t n = 1000 + uniform_index(rng, 3000);
    std::vector<int32_t> symbols(n);
    // draw from the table's own distribution via inverse CDF so the bound is
    // exercised at realistic rates
    for (auto& s : symbols) {
      const uint32_t target = static_cast<uint32_t>(uniform_index(rng, 65536));
      s = t.symbol_at(t.find(target));
    }
    EncodedStream stream =
        range_encode(symbols, [&](size_t) -> const CdfTable& { return t; });
    const double entropy_bytes = table_bits(t, symbols) / 8.0;
    const double actual = static_cast<double>(stream.bytes.size());
    CHECK(actual >= entropy_bytes - 1e-9);
    CHECK(actual <= std::ceil(entropy_bytes) + 16.0);
    CHECK(actual <= entropy_bytes * 1.01 + kRangeCoderFlushBytes);
  }
}

TEST_CASE("adaptive per-position Gaussian tables round trip exactly") {
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    const size_t n = 1 + uniform_index(rng, 400);
    std::vector<CdfTable> tables;
    std::vector<int32_t> symbols;
    const int32_t lo = -50, hi = 50;
    for (size_t i = 0; i < n; ++i) {
      const double mu = uniform(rng, -10.0, 10.0);
      const double sigma = std::exp(uniform(rng, std::log(0.02), std::log(20.0)));
      tables.push_back(build_cdf_table_gaussian(mu, sigma, lo, hi));
      symbols.push_back(lo +
                        static_cast<int32_t>(uniform_index(rng, static_cast<uint64_t>(hi - lo + 1))));
    }
    EncodedStream stream =
        range_encode(symbols, [&](size_t i) -> const CdfTable& { return tables[i]; });
    auto back = range_decode(stream, [&](size_t i) -> const CdfTable& { return tables[i]; },
                             symbols.size());
    CHECK(back == symbols);
  }
}

TEST_CASE("encoding is deterministic") {
  Rng rng(5);
  int32_t lo, hi;
  const CdfTable t = random_table(rng, lo, hi);
  std::vector<int32_t> symbols(500);
  for (auto& s : symbols)
    s = lo + static_cast<int32_t>(uniform_index(rng, static_cast<uint64_t>(hi - lo + 1)));
  auto a = range_encode(symbols, [&](size_t) -> const CdfTable& { return t; });
  auto b = range_encode(symbols, [&](size_t) -> const CdfTable& { return t; });
  CHECK(a.bytes == b.bytes);
}

TEST_CASE("out-of-range symbols are rejected at encode time") {
  const CdfTable t = uniform_binary_table();
  RangeEncoder enc;
  CHECK_THROWS_AS(enc.encode_symbol(2, t), ValueError);
  CHECK_THROWS_AS(enc.encode_symbol(-1, t), ValueError);
}

TEST_CASE("truncated streams raise a format error") {
  const CdfTable t = uniform_binary_table();
  std::vector<int32_t> symbols(64, 1);
  EncodedStream stream = range_encode(symbols, [&](size_t) -> const CdfTable& { return t; });
  EncodedStream cut = stream;
  cut.bytes.resize(4);
  CHECK_THROWS_AS(range_decode(cut, [&](size_t) -> const CdfTable& { return t; }, 64),
                  FormatError);
}

TEST_CASE("decoding with a different table is a documented hazard, not an error") {
  // the decoder cannot detect a model mismatch by itself; it just produces
  // in-range garbage deterministically
  Rng rng(9);
  const CdfTable enc_t = build_cdf_table_gaussian(0.0, 2.0, -10, 10);
  const CdfTable dec_t = build_cdf_table_gaussian(3.0, 0.5, -10, 10);
  std::vector<int32_t> symbols(100, 1);
  EncodedStream stream =
      range_encode(symbols, [&](size_t) -> const CdfTable& { return enc_t; });
  auto back = range_decode(stream, [&](size_t) -> const CdfTable& { return dec_t; }, 40);
  for (int32_t s : back) {
    CHECK(s >= -10);
    CHECK(s <= 10);
  }
}
