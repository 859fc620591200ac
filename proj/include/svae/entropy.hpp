#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "svae/rng.hpp"
#include "svae/tensor.hpp"

namespace svae {

// Quantization, discretized likelihoods, rate accounting and the integer CDF
// tables that feed the range coder.

// No probability below this reaches the coder (2^-16, one count at the
// default table precision).
constexpr double kLikelihoodFloor = 1.0 / 65536.0;
constexpr int kDefaultCdfPrecision = 16;

// ---- train-time quantization (uniform noise relaxation) ----------------

// y + u with u ~ iid U[-0.5, 0.5); gradient passes through unchanged.
Tensor quantize_train(const Tensor& y, Rng& rng);

// ---- inference quantization ---------------------------------------------

struct QuantizedLatent {
  Shape shape;
  std::vector<int32_t> symbols;   // round(y - offset), half away from zero
  std::vector<double> offsets;    // empty when mean removal is off
  int32_t min_symbol = 0;
  int32_t max_symbol = 0;
  bool mean_removed = false;
};

// mu is ignored unless mean_removal is set; with it, symbols = round(y - mu)
// and dequantize returns symbols + mu.
QuantizedLatent quantize_infer(const Tensor& y, const Tensor& mu, bool mean_removal);

Tensor dequantize(const QuantizedLatent& q);

double round_half_away(double v);

// ---- likelihoods ---------------------------------------------------------

double normal_cdf(double x);
double logistic_cdf(double x);

// Mass of the width-1 bin centered on `offset` (= s - mu), before flooring.
double gaussian_bin_prob(double offset, double sigma);
double logistic_bin_prob(double offset, double scale);

// Floored bin probabilities, as coded. sigma/scale must be positive.
double gaussian_likelihood(int32_t symbol, double mu, double sigma);
double factorized_prior_likelihood(int32_t symbol, double loc, double scale);

// Differentiable bin likelihoods at continuous (noise relaxed) positions.
// All three tensors share a shape for the Gaussian; loc/scale are per-channel
// [C] vectors broadcast over [B,C,H,W] for the logistic.
Tensor gaussian_bin_likelihood(const Tensor& y, const Tensor& mu, const Tensor& sigma);
Tensor logistic_bin_likelihood(const Tensor& z, const Tensor& loc, const Tensor& scale);

// -sum log2 p. Rejects non-positive entries.
Tensor rate_bits(const Tensor& p);
double rate_bits(std::span<const double> probs);

// ---- CDF tables -----------------------------------------------------------

// Integer cumulative frequencies for the range coder over symbol values
// [min_symbol, max_symbol], plus an escape tail entry at each end whenever
// out-of-range mass exists. cum is strictly increasing from 0 to 2^precision;
// every table entry keeps a nonzero count.
struct CdfTable {
  int32_t min_symbol = 0;
  int32_t max_symbol = 0;
  int precision = kDefaultCdfPrecision;
  bool has_low_tail = false;
  bool has_high_tail = false;
  std::vector<uint32_t> cum;

  int symbol_count() const { return static_cast<int>(cum.size()) - 1; }
  int index_of(int32_t symbol) const;        // throws if out of range
  int32_t symbol_at(int index) const;        // tails map to range edges
  int find(uint32_t target) const;           // index with cum[i] <= target < cum[i+1]
  double implied_prob(int index) const;
};

// bin_prob(s) gives the in-range bin mass; tail masses cover everything
// outside [lo, hi]. Counts are apportioned deterministically: one baseline
// count per symbol, the rest by largest remainder.
CdfTable build_cdf_table(const std::function<double(int32_t)>& bin_prob, double tail_low,
                         double tail_high, int32_t lo, int32_t hi,
                         int precision = kDefaultCdfPrecision);

CdfTable build_cdf_table_gaussian(double mu, double sigma, int32_t lo, int32_t hi,
                                  int precision = kDefaultCdfPrecision);
CdfTable build_cdf_table_logistic(double loc, double scale, int32_t lo, int32_t hi,
                                  int precision = kDefaultCdfPrecision);

}  // namespace svae
