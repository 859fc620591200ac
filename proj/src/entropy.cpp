#include "svae/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "svae/errors.hpp"

namespace svae {

// ---- quantization -------------------------------------------------------

Tensor quantize_train(const Tensor& y, Rng& rng) {
  const auto& yv = y.values();
  std::vector<double> out(yv.size());
  for (size_t i = 0; i < yv.size(); ++i) out[i] = yv[i] + (uniform01(rng) - 0.5);
  auto yi = y.impl();
  return make_op(y.shape(), std::move(out), "quantize_train", {y},
                 [yi](detail::TensorImpl& o) {
    if (!yi->requires_grad) return;
    for (size_t i = 0; i < o.grad.size(); ++i) yi->grad[i] += o.grad[i];
  });
}

double round_half_away(double v) { return std::round(v); }

QuantizedLatent quantize_infer(const Tensor& y, const Tensor& mu, bool mean_removal) {
  QuantizedLatent q;
  q.shape = y.shape();
  q.mean_removed = mean_removal;
  const auto& yv = y.values();
  if (mean_removal) {
    if (!mu.defined() || mu.shape() != y.shape())
      throw ShapeError("quantize_infer: mu must match y for mean removal");
    q.offsets = mu.values();
  }
  q.symbols.resize(yv.size());
  int32_t lo = 0, hi = 0;
  for (size_t i = 0; i < yv.size(); ++i) {
    const double centered = mean_removal ? yv[i] - q.offsets[i] : yv[i];
    const double r = round_half_away(centered);
    if (r < -2147483648.0 || r > 2147483647.0)
      throw ValueError("quantize_infer: symbol out of 32-bit range");
    const int32_t s = static_cast<int32_t>(r);
    q.symbols[i] = s;
    if (i == 0) {
      lo = hi = s;
    } else {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  }
  q.min_symbol = lo;
  q.max_symbol = hi;
  return q;
}

Tensor dequantize(const QuantizedLatent& q) {
  std::vector<double> out(q.symbols.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<double>(q.symbols[i]) + (q.mean_removed ? q.offsets[i] : 0.0);
  return Tensor::from(q.shape, std::move(out));
}

// ---- scalar likelihoods ---------------------------------------------------

namespace {
constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }
double logistic_cdf(double x) { return sigmoid(x); }

double gaussian_bin_prob(double offset, double sigma) {
  // Evaluate on whichever side keeps both CDF arguments negative; the
  // difference of small tail values stays accurate where the naive form
  // cancels.
  const double upper = (offset + 0.5) / sigma;
  const double lower = (offset - 0.5) / sigma;
  double p;
  if (upper + lower > 0.0)
    p = 0.5 * (std::erfc(lower * kInvSqrt2) - std::erfc(upper * kInvSqrt2));
  else
    p = 0.5 * (std::erfc(-upper * kInvSqrt2) - std::erfc(-lower * kInvSqrt2));
  return std::clamp(p, 0.0, 1.0);
}

double logistic_bin_prob(double offset, double scale) {
  const double upper = (offset + 0.5) / scale;
  const double lower = (offset - 0.5) / scale;
  double p;
  if (upper + lower > 0.0)
    p = sigmoid(-lower) - sigmoid(-upper);
  else
    p = sigmoid(upper) - sigmoid(lower);
  return std::clamp(p, 0.0, 1.0);
}

double gaussian_likelihood(int32_t symbol, double mu, double sigma) {
  if (!(sigma > 0.0)) throw ValueError("gaussian_likelihood: sigma must be positive");
  return std::max(gaussian_bin_prob(static_cast<double>(symbol) - mu, sigma),
                  kLikelihoodFloor);
}

double factorized_prior_likelihood(int32_t symbol, double loc, double scale) {
  if (!(scale > 0.0)) throw ValueError("factorized_prior_likelihood: scale must be positive");
  return std::max(logistic_bin_prob(static_cast<double>(symbol) - loc, scale),
                  kLikelihoodFloor);
}

// ---- differentiable likelihoods -------------------------------------------

Tensor gaussian_bin_likelihood(const Tensor& y, const Tensor& mu, const Tensor& sigma) {
  if (y.shape() != mu.shape() || y.shape() != sigma.shape())
    throw ShapeError("gaussian_bin_likelihood: y, mu and sigma must share a shape");
  const auto& yv = y.values();
  const auto& mv = mu.values();
  const auto& sv = sigma.values();
  std::vector<double> out(yv.size());
  for (size_t i = 0; i < yv.size(); ++i) {
    if (!(sv[i] > 0.0)) throw ValueError("gaussian_bin_likelihood: sigma must be positive");
    out[i] = std::max(gaussian_bin_prob(yv[i] - mv[i], sv[i]), kLikelihoodFloor);
  }
  auto yi = y.impl();
  auto mi = mu.impl();
  auto si = sigma.impl();
  return make_op(y.shape(), std::move(out), "gaussian_bin_likelihood", {y, mu, sigma},
                 [yi, mi, si](detail::TensorImpl& o) {
    const bool ny = yi->requires_grad, nm = mi->requires_grad, ns = si->requires_grad;
    if (!ny && !nm && !ns) return;
    for (size_t i = 0; i < o.values.size(); ++i) {
      if (o.values[i] <= kLikelihoodFloor) continue;  // floored region: flat
      const double sigma = si->values[i];
      const double upper = (yi->values[i] - mi->values[i] + 0.5) / sigma;
      const double lower = (yi->values[i] - mi->values[i] - 0.5) / sigma;
      const double pdf_u = kInvSqrt2Pi * std::exp(-0.5 * upper * upper);
      const double pdf_l = kInvSqrt2Pi * std::exp(-0.5 * lower * lower);
      const double g = o.grad[i];
      const double dp_dy = (pdf_u - pdf_l) / sigma;
      if (ny) yi->grad[i] += dp_dy * g;
      if (nm) mi->grad[i] -= dp_dy * g;
      if (ns) si->grad[i] -= (pdf_u * upper - pdf_l * lower) / sigma * g;
    }
  });
}

Tensor logistic_bin_likelihood(const Tensor& z, const Tensor& loc, const Tensor& scale) {
  if (z.ndim() != 4) throw ShapeError("logistic_bin_likelihood: z must be [B,C,H,W]");
  const int B = z.dim(0), C = z.dim(1);
  const int64_t hw = static_cast<int64_t>(z.dim(2)) * z.dim(3);
  if (loc.numel() != C || scale.numel() != C)
    throw ShapeError("logistic_bin_likelihood: loc/scale must have one entry per channel");
  const auto& zv = z.values();
  const auto& lv = loc.values();
  const auto& cv = scale.values();
  for (int c = 0; c < C; ++c)
    if (!(cv[c] > 0.0)) throw ValueError("logistic_bin_likelihood: scale must be positive");
  std::vector<double> out(zv.size());
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const int64_t base = (static_cast<int64_t>(b) * C + c) * hw;
      for (int64_t i = 0; i < hw; ++i)
        out[base + i] =
            std::max(logistic_bin_prob(zv[base + i] - lv[c], cv[c]), kLikelihoodFloor);
    }
  auto zi = z.impl();
  auto li = loc.impl();
  auto ci = scale.impl();
  return make_op(z.shape(), std::move(out), "logistic_bin_likelihood", {z, loc, scale},
                 [zi, li, ci, B, C, hw](detail::TensorImpl& o) {
    const bool nz = zi->requires_grad, nl = li->requires_grad, nc = ci->requires_grad;
    if (!nz && !nl && !nc) return;
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const int64_t base = (static_cast<int64_t>(b) * C + c) * hw;
        const double scale = ci->values[c];
        double acc_loc = 0.0, acc_scale = 0.0;
        for (int64_t i = 0; i < hw; ++i) {
          if (o.values[base + i] <= kLikelihoodFloor) continue;
          const double upper = (zi->values[base + i] - li->values[c] + 0.5) / scale;
          const double lower = (zi->values[base + i] - li->values[c] - 0.5) / scale;
          const double su = sigmoid(upper), sl = sigmoid(lower);
          const double pdf_u = su * (1.0 - su), pdf_l = sl * (1.0 - sl);
          const double g = o.grad[base + i];
          const double dp_dz = (pdf_u - pdf_l) / scale;
          if (nz) zi->grad[base + i] += dp_dz * g;
          acc_loc -= dp_dz * g;
          acc_scale -= (pdf_u * upper - pdf_l * lower) / scale * g;
        }
        if (nl) li->grad[c] += acc_loc;
        if (nc) ci->grad[c] += acc_scale;
      }
  });
}

// ---- rate -------------------------------------------------------------

namespace {
constexpr double kInvLn2 = 1.4426950408889634;
}

Tensor rate_bits(const Tensor& p) {
  const auto& pv = p.values();
  double acc = 0.0;
  for (double v : pv) {
    if (!(v > 0.0)) throw ValueError("rate_bits: probabilities must be positive");
    acc -= std::log2(v);
  }
  auto pi = p.impl();
  return make_op({1}, {acc}, "rate_bits", {p}, [pi](detail::TensorImpl& o) {
    if (!pi->requires_grad) return;
    const double g = o.grad[0];
    for (size_t i = 0; i < pi->values.size(); ++i)
      pi->grad[i] -= g * kInvLn2 / pi->values[i];
  });
}

double rate_bits(std::span<const double> probs) {
  double acc = 0.0;
  for (double v : probs) {
    if (!(v > 0.0)) throw ValueError("rate_bits: probabilities must be positive");
    acc -= std::log2(v);
  }
  return acc;
}

// ---- CDF tables ---------------------------------------------------------

int CdfTable::index_of(int32_t symbol) const {
  if (symbol < min_symbol || symbol > max_symbol)
    throw ValueError("symbol " + std::to_string(symbol) + " outside table range [" +
                     std::to_string(min_symbol) + "," + std::to_string(max_symbol) + "]");
  return (symbol - min_symbol) + (has_low_tail ? 1 : 0);
}

int32_t CdfTable::symbol_at(int index) const {
  const int32_t s = min_symbol + (index - (has_low_tail ? 1 : 0));
  return std::clamp(s, min_symbol, max_symbol);  // escape tails land on the edges
}

int CdfTable::find(uint32_t target) const {
  // cum is strictly increasing; find i with cum[i] <= target < cum[i+1].
  int lo = 0, hi = symbol_count() - 1;
  while (lo < hi) {
    const int mid = (lo + hi + 1) / 2;
    if (cum[mid] <= target)
      lo = mid;
    else
      hi = mid - 1;
  }
  return lo;
}

double CdfTable::implied_prob(int index) const {
  const double total = static_cast<double>(1u << precision);
  return (cum[index + 1] - cum[index]) / total;
}

CdfTable build_cdf_table(const std::function<double(int32_t)>& bin_prob, double tail_low,
                         double tail_high, int32_t lo, int32_t hi, int precision) {
  if (hi < lo) throw ValueError("build_cdf_table: empty symbol range");
  if (precision < 2 || precision > 24) throw ValueError("build_cdf_table: bad precision");
  const bool low_tail = tail_low > 0.0;
  const bool high_tail = tail_high > 0.0;
  const int64_t n =
      static_cast<int64_t>(hi) - lo + 1 + (low_tail ? 1 : 0) + (high_tail ? 1 : 0);
  const uint32_t total = 1u << precision;
  if (n >= total)
    throw ValueError("build_cdf_table: symbol range too large for precision " +
                     std::to_string(precision));

  std::vector<double> p(n);
  if (low_tail) p[0] = tail_low;
  if (high_tail) p[n - 1] = tail_high;
  const int64_t first = low_tail ? 1 : 0;
  for (int64_t i = 0; i <= hi - lo; ++i)
    p[first + i] = std::max(bin_prob(lo + static_cast<int32_t>(i)), 0.0);
  double mass = std::accumulate(p.begin(), p.end(), 0.0);
  if (mass <= 0.0) {
    std::fill(p.begin(), p.end(), 1.0);
    mass = static_cast<double>(n);
  }

  // One baseline count per symbol, the remaining budget split proportionally
  // with a largest-remainder pass (ties resolved toward lower index).
  const uint32_t budget = total - static_cast<uint32_t>(n);
  std::vector<uint32_t> counts(n, 1);
  std::vector<std::pair<double, int64_t>> rema(n);
  uint32_t assigned = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double exact = p[i] / mass * budget;
    const double flr = std::floor(exact);
    counts[i] += static_cast<uint32_t>(flr);
    assigned += static_cast<uint32_t>(flr);
    rema[i] = {exact - flr, i};
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (uint32_t r = 0; r < budget - assigned; ++r) ++counts[rema[r % n].second];

  CdfTable t;
  t.min_symbol = lo;
  t.max_symbol = hi;
  t.precision = precision;
  t.has_low_tail = low_tail;
  t.has_high_tail = high_tail;
  t.cum.resize(n + 1);
  t.cum[0] = 0;
  for (int64_t i = 0; i < n; ++i) t.cum[i + 1] = t.cum[i] + counts[i];
  return t;
}

CdfTable build_cdf_table_gaussian(double mu, double sigma, int32_t lo, int32_t hi,
                                  int precision) {
  if (!(sigma > 0.0)) throw ValueError("build_cdf_table_gaussian: sigma must be positive");
  const double tail_low = normal_cdf((lo - 0.5 - mu) / sigma);
  const double tail_high = 1.0 - normal_cdf((hi + 0.5 - mu) / sigma);
  return build_cdf_table(
      [mu, sigma](int32_t s) { return gaussian_bin_prob(s - mu, sigma); }, tail_low,
      tail_high, lo, hi, precision);
}

CdfTable build_cdf_table_logistic(double loc, double scale, int32_t lo, int32_t hi,
                                  int precision) {
  if (!(scale > 0.0)) throw ValueError("build_cdf_table_logistic: scale must be positive");
  const double tail_low = logistic_cdf((lo - 0.5 - loc) / scale);
  const double tail_high = 1.0 - logistic_cdf((hi + 0.5 - loc) / scale);
  return build_cdf_table(
      [loc, scale](int32_t s) { return logistic_bin_prob(s - loc, scale); }, tail_low,
      tail_high, lo, hi, precision);
}

}  // namespace svae
