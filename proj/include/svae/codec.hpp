#pragma once

#include <span>
#include <vector>

#include "svae/container.hpp"
#include "svae/image.hpp"
#include "svae/network.hpp"

namespace svae {

// End-to-end image coding on top of the network, entropy model and range
// coder. The hyperlatent is coded first under the factorized logistic prior;
// the latent follows under the conditional Gaussian whose (mu, sigma) both
// sides derive from the decoded hyperlatent, so encoder and decoder build
// identical tables.

struct RateEstimate {
  double bits_y = 0.0;  // model -sum log2 p over latent symbols
  double bits_z = 0.0;
  double total_bits() const { return bits_y + bits_z; }
};

struct EncodeResult {
  std::vector<uint8_t> container;
  Image reconstruction;   // encoder-side reconstruction, cropped to input size
  double bpp = 0.0;       // full container over original pixels
  RateEstimate estimate;
};

EncodeResult encode_image(const ModelParams& model, const Image& image,
                          bool mean_removal = true);

Image decode_image(const ModelParams& model, std::span<const uint8_t> container);

// Hard-quantization RD numbers (no coding): model rate estimate in bpp plus
// distortion of the clamped reconstruction, combined with the training
// convention total = bpp + lambda * 255^2 * MSE_[0,1].
struct RdEval {
  double total = 0.0;
  double rate_bpp = 0.0;
  double distortion_mse = 0.0;
  double psnr_db = 0.0;
};

RdEval evaluate_rd(const ModelParams& model, const Image& image, double lambda,
                   bool mean_removal = true);

}  // namespace svae
