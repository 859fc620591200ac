#include "svae/range_coder.hpp"

#include <algorithm>

#include "svae/errors.hpp"

namespace svae {

namespace {
// Emit once the top 16 bits of low and low+range agree; clamp range to the
// next 2^32 boundary when it underflows before they do.
constexpr uint64_t kTop = 1ull << 48;
constexpr uint64_t kBottom = 1ull << 32;
}  // namespace

void RangeEncoder::normalize() {
  while (true) {
    if ((low_ ^ (low_ + range_)) < kTop) {
      // settled
    } else if (range_ < kBottom) {
      range_ = (0 - low_) & (kBottom - 1);
    } else {
      break;
    }
    bytes_.push_back(static_cast<uint8_t>(low_ >> 56));
    bytes_.push_back(static_cast<uint8_t>(low_ >> 48));
    low_ <<= 16;
    range_ <<= 16;
  }
}

void RangeEncoder::encode(uint32_t cum, uint32_t freq, int precision) {
  if (freq == 0) throw ValueError("range encoder: zero-frequency symbol");
  const uint64_t r = range_ >> precision;
  low_ += r * cum;
  range_ = r * freq;
  normalize();
  ++count_;
}

void RangeEncoder::encode_symbol(int32_t symbol, const CdfTable& table) {
  const int idx = table.index_of(symbol);
  encode(table.cum[idx], table.cum[idx + 1] - table.cum[idx], table.precision);
}

EncodedStream RangeEncoder::finish() {
  for (int i = 0; i < 4; ++i) {
    bytes_.push_back(static_cast<uint8_t>(low_ >> 56));
    bytes_.push_back(static_cast<uint8_t>(low_ >> 48));
    low_ <<= 16;
  }
  EncodedStream out;
  out.bytes = std::move(bytes_);
  out.symbol_count = count_;
  bytes_.clear();
  return out;
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : bytes_(bytes) {
  for (int i = 0; i < 4; ++i) code_ = (code_ << 16) | read16();
}

uint16_t RangeDecoder::read16() {
  if (pos_ + 2 > bytes_.size()) throw FormatError("range decoder: truncated stream");
  const uint16_t hi = bytes_[pos_];
  const uint16_t lo = bytes_[pos_ + 1];
  pos_ += 2;
  return static_cast<uint16_t>((hi << 8) | lo);
}

uint32_t RangeDecoder::decode_target(int precision) {
  const uint64_t r = range_ >> precision;
  const uint64_t t = (code_ - low_) / r;
  const uint64_t max_target = (1ull << precision) - 1;
  return static_cast<uint32_t>(std::min(t, max_target));
}

void RangeDecoder::consume(uint32_t cum, uint32_t freq, int precision) {
  const uint64_t r = range_ >> precision;
  low_ += r * cum;
  range_ = r * freq;
  while (true) {
    if ((low_ ^ (low_ + range_)) < kTop) {
      // settled
    } else if (range_ < kBottom) {
      range_ = (0 - low_) & (kBottom - 1);
    } else {
      break;
    }
    code_ = (code_ << 16) | read16();
    low_ <<= 16;
    range_ <<= 16;
  }
}

int32_t RangeDecoder::decode_symbol(const CdfTable& table) {
  const int idx = table.find(decode_target(table.precision));
  consume(table.cum[idx], table.cum[idx + 1] - table.cum[idx], table.precision);
  return table.symbol_at(idx);
}

EncodedStream range_encode(std::span<const int32_t> symbols,
                           const std::function<const CdfTable&(size_t)>& table_at) {
  RangeEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) enc.encode_symbol(symbols[i], table_at(i));
  return enc.finish();
}

std::vector<int32_t> range_decode(const EncodedStream& stream,
                                  const std::function<const CdfTable&(size_t)>& table_at,
                                  size_t count) {
  RangeDecoder dec(stream.bytes);
  std::vector<int32_t> out(count);
  for (size_t i = 0; i < count; ++i) out[i] = dec.decode_symbol(table_at(i));
  return out;
}

}  // namespace svae
