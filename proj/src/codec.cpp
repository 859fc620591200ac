#include "svae/codec.hpp"

#include <algorithm>
#include <cmath>

#include "svae/entropy.hpp"
#include "svae/errors.hpp"
#include "svae/metrics.hpp"
#include "svae/range_coder.hpp"

namespace svae {

namespace {

constexpr int kHyperFactor = 4;  // two stride-2 hyperprior layers

int16_t to_i16(int32_t v, const char* what) {
  if (v < -32768 || v > 32767)
    throw ValueError(std::string(what) + " symbol " + std::to_string(v) +
                     " exceeds the 16-bit container range");
  return static_cast<int16_t>(v);
}

// The latent grid is padded (edge replication) to a multiple of 4 before the
// hyper transforms so their stride arithmetic is exact for any image size;
// mu/sigma are cropped back to the latent grid afterwards.
Tensor pad_to_hyper_grid(const Tensor& y) {
  const int pad_b = (kHyperFactor - y.dim(2) % kHyperFactor) % kHyperFactor;
  const int pad_r = (kHyperFactor - y.dim(3) % kHyperFactor) % kHyperFactor;
  return pad_replicate(y, pad_r, pad_b);
}

struct LatentCoding {
  Tensor y;                  // analysis output
  QuantizedLatent z_q;       // rounded hyperlatent
  QuantizedLatent y_q;       // rounded latent (mean-removed when enabled)
  Tensor mu, sigma;          // cropped to the latent grid
  Image reconstruction;      // pixel-mapped, cropped
  RateEstimate estimate;
};

// Everything the encoder computes that the decoder must be able to reproduce
// from the coded symbols alone.
LatentCoding run_encoder_analysis(const ModelParams& model, const Tensor& padded_unit,
                                  int orig_h, int orig_w, bool mean_removal) {
  NoGradGuard no_grad;
  LatentCoding lc;
  lc.y = encode_analysis(padded_unit, model);
  const Tensor z = hyper_encode(pad_to_hyper_grid(lc.y), model);
  lc.z_q = quantize_infer(z, Tensor(), false);

  auto [mu4, sigma4] = hyper_decode(dequantize(lc.z_q), model);
  lc.mu = crop(mu4, lc.y.dim(2), lc.y.dim(3));
  lc.sigma = crop(sigma4, lc.y.dim(2), lc.y.dim(3));
  lc.y_q = quantize_infer(lc.y, lc.mu, mean_removal);

  const auto& locs = model.prior.loc.values();
  const auto scales = model.prior.scale().values();
  const int64_t z_hw = static_cast<int64_t>(lc.z_q.shape[2]) * lc.z_q.shape[3];
  for (size_t i = 0; i < lc.z_q.symbols.size(); ++i) {
    const int c = static_cast<int>(static_cast<int64_t>(i) / z_hw);
    lc.estimate.bits_z -=
        std::log2(factorized_prior_likelihood(lc.z_q.symbols[i], locs[c], scales[c]));
  }
  const auto& mus = lc.mu.values();
  const auto& sigmas = lc.sigma.values();
  for (size_t i = 0; i < lc.y_q.symbols.size(); ++i) {
    const double mu_bin = mean_removal ? 0.0 : mus[i];
    lc.estimate.bits_y -=
        std::log2(gaussian_likelihood(lc.y_q.symbols[i], mu_bin, sigmas[i]));
  }

  const Tensor recon = decode_synthesis(dequantize(lc.y_q), model);
  lc.reconstruction = tensor_to_image(
      denormalize_pixels(crop(recon, orig_h, orig_w), model.config.pixel_max));
  return lc;
}

std::vector<CdfTable> channel_tables(const ModelParams& model, int32_t lo, int32_t hi) {
  const auto& locs = model.prior.loc.values();
  const auto scales = model.prior.scale().values();
  std::vector<CdfTable> tables;
  tables.reserve(locs.size());
  for (size_t c = 0; c < locs.size(); ++c)
    tables.push_back(build_cdf_table_logistic(locs[c], scales[c], lo, hi));
  return tables;
}

void check_model_match(const ModelParams& model, const BitstreamHeader& h) {
  if (h.q != model.config.q || h.channels != model.config.channels)
    throw MismatchError("bitstream was produced by a different model configuration (q=" +
                        std::to_string(h.q) + ", channels=" + std::to_string(h.channels) +
                        ")");
}

}  // namespace

EncodeResult encode_image(const ModelParams& model, const Image& image, bool mean_removal) {
  NoGradGuard no_grad;
  const int f = model.config.spatial_factor();
  const int pad_r = (f - image.width % f) % f;
  const int pad_b = (f - image.height % f) % f;
  if (pad_r > 255 || pad_b > 255) throw ValueError("padding exceeds container field width");

  const Tensor unit = pad_replicate(
      normalize_pixels(image_to_tensor(image), model.config.pixel_max), pad_r, pad_b);
  LatentCoding lc =
      run_encoder_analysis(model, unit, image.height, image.width, mean_removal);

  BitstreamContainer c;
  c.header.mean_removal = mean_removal;
  c.header.q = static_cast<uint8_t>(model.config.q);
  c.header.channels = static_cast<uint16_t>(model.config.channels);
  c.header.width = static_cast<uint32_t>(image.width);
  c.header.height = static_cast<uint32_t>(image.height);
  c.header.pad_right = static_cast<uint8_t>(pad_r);
  c.header.pad_bottom = static_cast<uint8_t>(pad_b);
  c.header.z_min = to_i16(lc.z_q.min_symbol, "hyperlatent");
  c.header.z_max = to_i16(lc.z_q.max_symbol, "hyperlatent");
  c.header.y_min = to_i16(lc.y_q.min_symbol, "latent");
  c.header.y_max = to_i16(lc.y_q.max_symbol, "latent");

  // Hyperlatent first under the per-channel prior tables.
  const auto z_tables = channel_tables(model, lc.z_q.min_symbol, lc.z_q.max_symbol);
  const int64_t z_hw = static_cast<int64_t>(lc.z_q.shape[2]) * lc.z_q.shape[3];
  c.z_payload = range_encode(lc.z_q.symbols,
                             [&](size_t i) -> const CdfTable& {
                               return z_tables[static_cast<int64_t>(i) / z_hw];
                             })
                    .bytes;

  // Latent under per-element Gaussian tables derived from the decoded
  // hyperlatent; built on the fly, one element at a time.
  {
    RangeEncoder enc;
    const auto& mus = lc.mu.values();
    const auto& sigmas = lc.sigma.values();
    for (size_t i = 0; i < lc.y_q.symbols.size(); ++i) {
      const double mu_bin = mean_removal ? 0.0 : mus[i];
      const CdfTable t = build_cdf_table_gaussian(mu_bin, sigmas[i], lc.y_q.min_symbol,
                                                  lc.y_q.max_symbol);
      enc.encode_symbol(lc.y_q.symbols[i], t);
    }
    c.y_payload = enc.finish().bytes;
  }

  EncodeResult result;
  result.container = serialize_container(c);
  result.reconstruction = std::move(lc.reconstruction);
  result.estimate = lc.estimate;
  result.bpp = bpp(result.container.size(), image.width, image.height);
  return result;
}

Image decode_image(const ModelParams& model, std::span<const uint8_t> container) {
  NoGradGuard no_grad;
  const BitstreamContainer c = parse_container(container);
  check_model_match(model, c.header);

  const int f = model.config.spatial_factor();
  const int padded_w = static_cast<int>(c.header.width) + c.header.pad_right;
  const int padded_h = static_cast<int>(c.header.height) + c.header.pad_bottom;
  if (padded_w % f != 0 || padded_h % f != 0)
    throw FormatError("bitstream header: padded dimensions not divisible by " +
                      std::to_string(f));
  const int y_w = padded_w / f;
  const int y_h = padded_h / f;
  const int y4_w = (y_w + kHyperFactor - 1) / kHyperFactor * kHyperFactor;
  const int y4_h = (y_h + kHyperFactor - 1) / kHyperFactor * kHyperFactor;
  const int z_w = y4_w / kHyperFactor;
  const int z_h = y4_h / kHyperFactor;
  const int C = model.config.channels;
  const int Hc = model.config.hyper_channels;

  // Hyperlatent.
  const auto z_tables = channel_tables(model, c.header.z_min, c.header.z_max);
  const int64_t z_hw = static_cast<int64_t>(z_h) * z_w;
  const size_t z_count = static_cast<size_t>(Hc) * z_hw;
  EncodedStream z_stream;
  z_stream.bytes = c.z_payload;
  z_stream.symbol_count = z_count;
  QuantizedLatent z_q;
  z_q.shape = {1, Hc, z_h, z_w};
  z_q.symbols = range_decode(z_stream,
                             [&](size_t i) -> const CdfTable& {
                               return z_tables[static_cast<int64_t>(i) / z_hw];
                             },
                             z_count);

  auto [mu4, sigma4] = hyper_decode(dequantize(z_q), model);
  const Tensor mu = crop(mu4, y_h, y_w);
  const Tensor sigma = crop(sigma4, y_h, y_w);

  // Latent.
  const size_t y_count = static_cast<size_t>(C) * y_h * y_w;
  const auto& mus = mu.values();
  const auto& sigmas = sigma.values();
  QuantizedLatent y_q;
  y_q.shape = {1, C, y_h, y_w};
  y_q.mean_removed = c.header.mean_removal;
  if (c.header.mean_removal) y_q.offsets = mus;
  y_q.symbols.resize(y_count);
  {
    RangeDecoder dec(c.y_payload);
    for (size_t i = 0; i < y_count; ++i) {
      const double mu_bin = c.header.mean_removal ? 0.0 : mus[i];
      const CdfTable t =
          build_cdf_table_gaussian(mu_bin, sigmas[i], c.header.y_min, c.header.y_max);
      y_q.symbols[i] = dec.decode_symbol(t);
    }
  }

  const Tensor recon = decode_synthesis(dequantize(y_q), model);
  return tensor_to_image(denormalize_pixels(crop(recon, c.header.height, c.header.width),
                                            model.config.pixel_max));
}

RdEval evaluate_rd(const ModelParams& model, const Image& image, double lambda,
                   bool mean_removal) {
  NoGradGuard no_grad;
  const int f = model.config.spatial_factor();
  const int pad_r = (f - image.width % f) % f;
  const int pad_b = (f - image.height % f) % f;
  const Tensor unit = pad_replicate(
      normalize_pixels(image_to_tensor(image), model.config.pixel_max), pad_r, pad_b);
  const LatentCoding lc =
      run_encoder_analysis(model, unit, image.height, image.width, mean_removal);

  RdEval out;
  const double pixels = static_cast<double>(image.width) * image.height;
  out.rate_bpp = lc.estimate.total_bits() / pixels;
  // Distortion on the clamped continuous reconstruction, [0,255] units.
  const Tensor orig = image_to_tensor(image);
  double acc = 0.0;
  const auto& av = orig.values();
  const Tensor recon_px = denormalize_pixels(
      crop(decode_synthesis(dequantize(lc.y_q), model), image.height, image.width),
      model.config.pixel_max);
  const auto& bv = recon_px.values();
  for (size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    acc += d * d;
  }
  out.distortion_mse = acc / static_cast<double>(av.size());
  out.psnr_db = psnr_from_mse(out.distortion_mse);
  out.total = out.rate_bpp + lambda * out.distortion_mse;
  return out;
}

}  // namespace svae
