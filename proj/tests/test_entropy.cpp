#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "svae/entropy.hpp"
#include "svae/errors.hpp"

using namespace svae;

TEST_CASE("quantize_train: bounded noise, zero mean, reproducible, identity grad") {
  Rng rng(1);
  Tensor y = oracle::random_tensor({1, 2, 8, 8}, rng, -5.0, 5.0);
  Rng noise(7);
  Tensor noisy = quantize_train(y, noise);
  for (int64_t i = 0; i < y.numel(); ++i) {
    const double d = noisy.data()[i] - y.data()[i];
    CHECK(d >= -0.5);
    CHECK(d < 0.5);
  }

  Rng noise_b(7);
  Tensor again = quantize_train(y, noise_b);
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(noisy.data()[i] == again.data()[i]);

  Rng mc(3);
  double acc = 0.0;
  const int n = 1000000;
  Tensor zero = Tensor::scalar(0.0);
  for (int i = 0; i < n; ++i) acc += uniform01(mc) - 0.5;
  CHECK(std::abs(acc / n) < 1e-2);

  Tensor leaf = Tensor::from({3}, {0.1, 0.2, 0.3}).set_requires_grad();
  Rng g(5);
  backward(sum(quantize_train(leaf, g)));
  for (double gv : leaf.grad()) CHECK(gv == 1.0);
}

TEST_CASE("quantize_infer rounds half away from zero and dequantizes within 0.5") {
  Tensor y = Tensor::from({1, 1, 1, 6}, {0.6, -1.4, 0.5, -0.5, 2.49, -2.51});
  QuantizedLatent q = quantize_infer(y, Tensor(), false);
  CHECK(q.symbols == std::vector<int32_t>{1, -1, 1, -1, 2, -3});
  CHECK(q.min_symbol == -3);
  CHECK(q.max_symbol == 2);

  Rng rng(11);
  Tensor yr = oracle::random_tensor({1, 3, 4, 4}, rng, -20.0, 20.0);
  Tensor mu = oracle::random_tensor({1, 3, 4, 4}, rng, -2.0, 2.0);
  QuantizedLatent qm = quantize_infer(yr, mu, true);
  Tensor deq = dequantize(qm);
  for (int64_t i = 0; i < yr.numel(); ++i)
    CHECK(std::abs(deq.data()[i] - yr.data()[i]) <= 0.5);
}

TEST_CASE("gaussian likelihood: quadrature oracle, concentration, normalization") {
  // standard bin mass at the mean
  const double p = gaussian_likelihood(0, 0.0, 1.0);
  CHECK(p == doctest::Approx(oracle::gaussian_bin_simpson(0.0, 1.0)).epsilon(1e-9));
  CHECK(p == doctest::Approx(0.382925).epsilon(1e-6));

  // mass concentrates when sigma collapses onto the symbol
  CHECK(gaussian_likelihood(3, 3.0, 1e-3) == doctest::Approx(1.0));
  CHECK(gaussian_likelihood(3, 3.0, 1e-3) <= 1.0);

  for (double sigma : {0.3, 1.0, 7.5}) {
    double total = 0.0;
    const int span = static_cast<int>(std::ceil(40.0 * sigma));
    for (int s = -span; s <= span; ++s) total += gaussian_bin_prob(s, sigma);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK_THROWS_AS(gaussian_likelihood(0, 0.0, 0.0), ValueError);
  CHECK_THROWS_AS(gaussian_likelihood(0, 0.0, -1.0), ValueError);
}

TEST_CASE("stable tails: far symbols keep accurate relative mass") {
  // at 20 sigma the naive CDF difference cancels; the two-sided form must not
  const double p = gaussian_bin_prob(20.0, 1.0);
  const double want = oracle::gaussian_bin_simpson(20.0, 1.0);
  CHECK(p == doctest::Approx(want).epsilon(1e-6));
  CHECK(p > 0.0);
}

TEST_CASE("factorized logistic prior: symmetry, normalization, monotone decay") {
  const double c = 0.7;
  CHECK(factorized_prior_likelihood(0, 0.0, c) ==
        doctest::Approx(logistic_cdf(0.5 / c) - logistic_cdf(-0.5 / c)).epsilon(1e-12));
  CHECK(factorized_prior_likelihood(2, 0.0, c) ==
        doctest::Approx(factorized_prior_likelihood(-2, 0.0, c)).epsilon(1e-12));

  double total = 0.0;
  for (int s = -200; s <= 200; ++s) total += logistic_bin_prob(s - 0.3, 1.7);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

  double prev = 1.0;
  for (int s = 0; s <= 30; ++s) {
    const double ps = logistic_bin_prob(s - 0.3, 1.7);
    CHECK(ps <= prev);
    prev = ps;
  }
  CHECK_THROWS_AS(factorized_prior_likelihood(0, 0.0, 0.0), ValueError);
}

TEST_CASE("likelihood floor: nothing below 2^-16 reaches the coder") {
  for (int s = 0; s < 60; ++s) {
    CHECK(gaussian_likelihood(s, 0.0, 0.05) >= kLikelihoodFloor);
    CHECK(factorized_prior_likelihood(s, 0.0, 0.05) >= kLikelihoodFloor);
  }
}

TEST_CASE("rate_bits: uniform bits, certain symbols, log-sum oracle") {
  std::vector<double> half(8, 0.5);
  CHECK(rate_bits(std::span<const double>(half)) == doctest::Approx(8.0).epsilon(1e-12));
  std::vector<double> ones(5, 1.0);
  CHECK(rate_bits(std::span<const double>(ones)) == 0.0);

  Rng rng(3);
  std::vector<double> probs(257);
  long double oracle_bits = 0.0;
  for (double& v : probs) {
    v = uniform(rng, 1e-6, 1.0);
    oracle_bits -= std::log2(static_cast<long double>(v));
  }
  CHECK(rate_bits(std::span<const double>(probs)) ==
        doctest::Approx(static_cast<double>(oracle_bits)).epsilon(1e-10));

  std::vector<double> bad{0.5, 0.0};
  CHECK_THROWS_AS(rate_bits(std::span<const double>(bad)), ValueError);
  CHECK_THROWS_AS(rate_bits(Tensor::from({2}, {0.5, -0.1})), ValueError);
}

TEST_CASE("tensor likelihood ops match the scalar forms at integer positions") {
  Rng rng(17);
  Tensor y = Tensor::from({1, 2, 1, 2}, {1.0, -2.0, 0.0, 4.0});
  Tensor mu = Tensor::from({1, 2, 1, 2}, {0.3, -1.6, 0.4, 3.9});
  Tensor sigma = Tensor::from({1, 2, 1, 2}, {0.5, 1.0, 2.0, 0.8});
  Tensor p = gaussian_bin_likelihood(y, mu, sigma);
  for (int i = 0; i < 4; ++i) {
    const double want = gaussian_likelihood(static_cast<int32_t>(y.data()[i]),
                                            mu.data()[i], sigma.data()[i]);
    CHECK(p.data()[i] == doctest::Approx(want).epsilon(1e-12));
  }

  Tensor z = Tensor::from({1, 2, 1, 2}, {1.0, 0.0, -3.0, 2.0});
  Tensor loc = Tensor::from({2}, {0.2, -0.4});
  Tensor scale = Tensor::from({2}, {0.9, 1.4});
  Tensor pz = logistic_bin_likelihood(z, loc, scale);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 2; ++i) {
      const double want = factorized_prior_likelihood(
          static_cast<int32_t>(z.data()[c * 2 + i]), loc.data()[c], scale.data()[c]);
      CHECK(pz.data()[c * 2 + i] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("likelihood and rate gradients match finite differences") {
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Tensor y = oracle::random_tensor({1, 2, 3, 3}, rng, -3.0, 3.0).set_requires_grad();
    Tensor mu = oracle::random_tensor({1, 2, 3, 3}, rng, -1.0, 1.0).set_requires_grad();
    Tensor rawsig = oracle::random_tensor({1, 2, 3, 3}, rng, -1.0, 1.5).set_requires_grad();
    auto loss = [&] {
      Tensor sigma = add_scalar(softplus(rawsig), 1e-3);
      return mul_scalar(rate_bits(gaussian_bin_likelihood(y, mu, sigma)), 1e-2);
    };
    auto r = oracle::check_gradients(loss, {{"y", y}, {"mu", mu}, {"rawsig", rawsig}});
    CHECK_MESSAGE(r.max_rel_err < 1e-4, r.worst);

    Tensor z = oracle::random_tensor({2, 3, 2, 2}, rng, -4.0, 4.0).set_requires_grad();
    Tensor loc = oracle::random_tensor({3}, rng, -0.5, 0.5).set_requires_grad();
    Tensor rawscale = oracle::random_tensor({3}, rng, -0.5, 1.0).set_requires_grad();
    auto loss_z = [&] {
      Tensor scale = add_scalar(softplus(rawscale), 1e-3);
      return mul_scalar(rate_bits(logistic_bin_likelihood(z, loc, scale)), 1e-2);
    };
    auto rz = oracle::check_gradients(loss_z, {{"z", z}, {"loc", loc}, {"rawscale", rawscale}});
    CHECK_MESSAGE(rz.max_rel_err < 1e-4, rz.worst);
  }
}

TEST_CASE("cdf tables: tail-free equiprobable pair splits 2^16 evenly") {
  CdfTable t = build_cdf_table([](int32_t) { return 0.5; }, 0.0, 0.0, 0, 1);
  CHECK(t.symbol_count() == 2);
  CHECK_FALSE(t.has_low_tail);
  CHECK_FALSE(t.has_high_tail);
  CHECK(t.cum == std::vector<uint32_t>{0, 32768, 65536});
}

TEST_CASE("cdf tables: strictly increasing to 2^16 with tails present") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const double mu = uniform(rng, -3.0, 3.0);
    const double sigma = std::exp(uniform(rng, std::log(0.05), std::log(30.0)));
    const int32_t lo = -1 - static_cast<int32_t>(uniform_index(rng, 40));
    const int32_t hi = 1 + static_cast<int32_t>(uniform_index(rng, 40));
    CdfTable t = build_cdf_table_gaussian(mu, sigma, lo, hi);
    CHECK(t.has_low_tail);
    CHECK(t.has_high_tail);
    CHECK(t.cum.front() == 0);
    CHECK(t.cum.back() == 65536);
    for (size_t i = 1; i < t.cum.size(); ++i) CHECK(t.cum[i] > t.cum[i - 1]);
    // index round trip
    for (int32_t s = lo; s <= hi; ++s) CHECK(t.symbol_at(t.index_of(s)) == s);
    CHECK_THROWS_AS(t.index_of(hi + 1), ValueError);
  }
}

TEST_CASE("cdf tables: implied distribution is close to the model in KL") {
  for (double sigma : {0.01, 0.05, 0.3, 1.0, 5.0, 30.0, 100.0}) {
    const int32_t span = std::max<int32_t>(1, static_cast<int32_t>(std::ceil(3.0 * sigma)));
    CdfTable t = build_cdf_table_gaussian(0.0, sigma, -span, span);
    // model distribution over the same support (tails get the true tail mass)
    std::vector<double> model;
    if (t.has_low_tail) model.push_back(normal_cdf((-span - 0.5) / sigma));
    for (int32_t s = -span; s <= span; ++s) model.push_back(gaussian_bin_prob(s, sigma));
    if (t.has_high_tail) model.push_back(1.0 - normal_cdf((span + 0.5) / sigma));
    double kl = 0.0;
    for (size_t i = 0; i < model.size(); ++i) {
      if (model[i] <= 0.0) continue;
      kl += model[i] * std::log2(model[i] / t.implied_prob(static_cast<int>(i)));
    }
    CHECK_MESSAGE(kl < 1e-3, "sigma=", sigma, " kl=", kl);
    CHECK(kl > -1e-12);  // sanity: KL is non-negative up to rounding
  }
}

TEST_CASE("cdf tables: range too wide for the precision is rejected") {
  CHECK_THROWS_AS(build_cdf_table_gaussian(0.0, 1e4, -40000, 40000), ValueError);
  CHECK_THROWS_AS(build_cdf_table_gaussian(0.0, 1.0, 1, 0), ValueError);
}
