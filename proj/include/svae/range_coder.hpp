#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "svae/entropy.hpp"

namespace svae {

// Integer-only range coder: 64-bit state, 16-bit big-endian renormalization,
// carry-free via range clamping. Compression overhead is bounded by the
// 8-byte flush plus clamp losses; tests pin the total at <= 16 bytes over the
// table entropy. The coding loop touches no floating point, so streams are
// bit-identical across platforms.

struct EncodedStream {
  std::vector<uint8_t> bytes;
  uint64_t symbol_count = 0;
};

constexpr int kRangeCoderFlushBytes = 8;

class RangeEncoder {
 public:
  // cum/freq from a CdfTable row: freq >= 1, cum + freq <= 2^precision.
  void encode(uint32_t cum, uint32_t freq, int precision);
  void encode_symbol(int32_t symbol, const CdfTable& table);
  EncodedStream finish();  // emits the flush words; encoder is then spent

 private:
  void normalize();
  uint64_t low_ = 0;
  uint64_t range_ = ~0ull;
  uint64_t count_ = 0;
  std::vector<uint8_t> bytes_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> bytes);
  // Target value for the next symbol; look it up in the table, then consume.
  uint32_t decode_target(int precision);
  void consume(uint32_t cum, uint32_t freq, int precision);
  int32_t decode_symbol(const CdfTable& table);

 private:
  uint16_t read16();
  uint64_t low_ = 0;
  uint64_t range_ = ~0ull;
  uint64_t code_ = 0;
  std::span<const uint8_t> bytes_;
  size_t pos_ = 0;
};

// Whole-sequence helpers; table_at(i) supplies the (possibly per-position)
// table for symbol i and must match bit for bit between encode and decode.
EncodedStream range_encode(std::span<const int32_t> symbols,
                           const std::function<const CdfTable&(size_t)>& table_at);
std::vector<int32_t> range_decode(const EncodedStream& stream,
                                  const std::function<const CdfTable&(size_t)>& table_at,
                                  size_t count);

}  // namespace svae
