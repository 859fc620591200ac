#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "svae/errors.hpp"
#include "svae/network.hpp"

using namespace svae;

namespace {

NetworkConfig small_config() {
  NetworkConfig c;
  c.channels = 8;
  c.hyper_channels = 6;
  return c;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("init_network is a deterministic function of (seed, config)") {
  ModelParams a = init_network(42, small_config());
  ModelParams b = init_network(42, small_config());
  ModelParams c = init_network(43, small_config());
  auto pa = a.named_parameters(), pb = b.named_parameters(), pc = c.named_parameters();
  REQUIRE(pa.size() == pb.size());
  bool all_equal_ac = true;
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(bitwise_equal(pa[i].second, pb[i].second));
    if (!bitwise_equal(pa[i].second, pc[i].second)) all_equal_ac = false;
  }
  CHECK_FALSE(all_equal_ac);
}

TEST_CASE("zero image with zero early biases lands on the layer-4 bias") {
  ModelParams m = init_network(1, small_config());
  m.encoder.back().bias.values().assign(m.encoder.back().bias.numel(), 0.37);
  Tensor x({1, 3, 64, 64}, 0.0);
  Tensor y = encode_analysis(x, m);
  CHECK(y.shape() == Shape{1, 8, 4, 4});
  for (double v : y.values()) CHECK(v == 0.37);
}

TEST_CASE("paper-scale analysis transform: 256x256 -> 192x16x16") {
  NetworkConfig c;
  c.channels = 192;
  c.hyper_channels = 128;
  ModelParams m = init_network(3, c);
  Rng rng(3);
  Tensor x = oracle::random_tensor({1, 3, 256, 256}, rng);
  Tensor y = encode_analysis(x, m);
  CHECK(y.shape() == Shape{1, 192, 16, 16});
  Tensor z = hyper_encode(y, m);
  CHECK(z.shape() == Shape{1, 128, 4, 4});
}

TEST_CASE("encode_analysis rejects dimensions not divisible by 16") {
  ModelParams m = init_network(1, small_config());
  Tensor x({1, 3, 60, 64}, 0.0);
  CHECK_THROWS_WITH_AS(encode_analysis(x, m), doctest::Contains("not divisible"), ShapeError);
}

TEST_CASE("decode_synthesis: zero latent and zero biases give mid-gray pixels") {
  NetworkConfig cfg = small_config();
  ModelParams m = init_network(1, cfg);
  for (auto& layer : m.decoder) layer.bias.values().assign(layer.bias.numel(), 0.0);
  Tensor y({1, 8, 4, 4}, 0.0);
  Tensor out = decode_synthesis(y, m);
  CHECK(out.shape() == Shape{1, 3, 64, 64});
  for (double v : out.values()) CHECK(v == 0.0);
  Image img = tensor_to_image(denormalize_pixels(out, cfg.pixel_max));
  for (uint8_t px : img.rgb) CHECK(static_cast<int>(px) == 128);
}

TEST_CASE("encode/decode shape round trip over random multiples of 16") {
  ModelParams m = init_network(9, small_config());
  Rng rng(9);
  for (int trial = 0; trial < 4; ++trial) {
    const int H = 16 * (1 + static_cast<int>(uniform_index(rng, 6)));
    const int W = 16 * (1 + static_cast<int>(uniform_index(rng, 6)));
    Tensor x = oracle::random_tensor({1, 3, H, W}, rng);
    Tensor y = encode_analysis(x, m);
    CHECK(y.shape() == Shape{1, 8, H / 16, W / 16});
    Tensor back = decode_synthesis(y, m);
    CHECK(back.shape() == x.shape());
  }
}

TEST_CASE("hyper_decode: zero-init final layer maps zero input to flat mu/sigma") {
  NetworkConfig cfg = small_config();
  ModelParams m = init_network(5, cfg);
  auto& final_layer = m.hyper_decoder.back();
  final_layer.kernels.values().assign(final_layer.kernels.numel(), 0.0);
  final_layer.bias.values().assign(final_layer.bias.numel(), 0.0);
  Tensor z({1, 6, 2, 2}, 0.0);
  auto [mu, sigma] = hyper_decode(z, m);
  CHECK(mu.shape() == Shape{1, 8, 8, 8});
  CHECK(sigma.shape() == Shape{1, 8, 8, 8});
  for (double v : mu.values()) CHECK(v == 0.0);
  // sigma = sigma_floor + softplus(0): constant, strictly above the floor
  const double expect = cfg.sigma_floor + std::log(2.0);
  for (double v : sigma.values()) {
    CHECK(v == doctest::Approx(expect).epsilon(1e-12));
    CHECK(v >= cfg.sigma_floor);
  }
}

TEST_CASE("sigma stays above the floor for random inputs and parameters") {
  ModelParams m = init_network(11, small_config());
  Rng rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    Tensor z = oracle::random_tensor({1, 6, 2, 2}, rng, -30.0, 30.0);
    auto [mu, sigma] = hyper_decode(z, m);
    for (double v : sigma.values()) CHECK(v >= 1e-3);
  }
}

TEST_CASE("prior scale is positive and floored") {
  ModelParams m = init_network(13, small_config());
  m.prior.raw_scale.values().assign(m.prior.raw_scale.numel(), -40.0);
  const std::vector<double> scales = m.prior.scale().values();
  for (double v : scales) {
    CHECK(v > 0.0);
    CHECK(v == doctest::Approx(m.prior.scale_floor).epsilon(1e-6));
  }
}

TEST_CASE("q=3 embedding of a q=1 model reproduces the conv VAE exactly") {
  NetworkConfig cfg = small_config();
  cfg.q = 1;
  ModelParams conv_model = init_network(21, cfg);
  ModelParams wide = embed_model(conv_model, 3);
  CHECK(wide.config.q == 3);

  Rng rng(21);
  Tensor x = oracle::random_tensor({1, 3, 64, 64}, rng);
  Tensor y1 = encode_analysis(x, conv_model);
  Tensor y3 = encode_analysis(x, wide);
  CHECK(bitwise_equal(y1, y3));
  Tensor r1 = decode_synthesis(y1, conv_model);
  Tensor r3 = decode_synthesis(y3, wide);
  CHECK(bitwise_equal(r1, r3));
}

TEST_CASE("zeroing high-order branches of a fresh q=3 model gives its conv core") {
  ModelParams q3 = init_network(22, small_config());
  // strip to the first branch of every SOL layer
  ModelParams q1 = q3.clone();
  q1.config.q = 1;
  for (auto* layers : {&q1.encoder, &q1.decoder}) {
    for (auto& layer : *layers) {
      SolLayerParams stripped = layer;
      stripped.q = 1;
      const int64_t ksz = static_cast<int64_t>(layer.k) * layer.k;
      if (!layer.transposed) {
        stripped.kernels = Tensor({layer.c_out, layer.c_in, layer.k, layer.k});
        for (int co = 0; co < layer.c_out; ++co)
          std::copy_n(layer.kernels.data() +
                          static_cast<int64_t>(co) * layer.q * layer.c_in * ksz,
                      layer.c_in * ksz,
                      stripped.kernels.data() + static_cast<int64_t>(co) * layer.c_in * ksz);
      } else {
        stripped.kernels = Tensor({layer.c_in, layer.c_out, layer.k, layer.k});
        std::copy_n(layer.kernels.data(),
                    static_cast<int64_t>(layer.c_in) * layer.c_out * ksz,
                    stripped.kernels.data());
      }
      stripped.bias = layer.bias.detached();
      layer = stripped;
    }
  }
  ModelParams q3_zeroed = embed_model(q1, 3);
  Rng rng(22);
  Tensor x = oracle::random_tensor({1, 3, 32, 32}, rng);
  CHECK(bitwise_equal(encode_analysis(x, q3_zeroed), encode_analysis(x, q1)));
}

TEST_CASE("tanh-capped intermediate activations stay inside (-1,1)") {
  ModelParams m = init_network(31, small_config());
  // inflate weights so pre-activations saturate
  for (auto& layer : m.encoder)
    for (double& v : layer.kernels.values()) v *= 40.0;
  Rng rng(31);
  Tensor x = oracle::random_tensor({1, 3, 32, 32}, rng);
  Tensor h = x;
  for (size_t i = 0; i + 1 < m.encoder.size(); ++i) {
    h = sol_forward(h, m.encoder[i]);
    for (double v : h.values()) {
      CHECK(v > -1.0);
      CHECK(v < 1.0);
    }
  }
}

TEST_CASE("config validation") {
  NetworkConfig c = small_config();
  c.q = 0;
  CHECK_THROWS_AS(init_network(0, c), ValueError);
  c = small_config();
  c.kernel = 4;
  CHECK_THROWS_AS(init_network(0, c), ValueError);
  c = small_config();
  c.sigma_floor = 0.0;
  CHECK_THROWS_AS(init_network(0, c), ValueError);
}
