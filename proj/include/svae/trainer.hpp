#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "svae/image.hpp"
#include "svae/network.hpp"
#include "svae/rng.hpp"
#include "svae/tensor.hpp"

namespace svae {

// Rate-distortion training: L = bpp + lambda * 255^2 * MSE_[0,1]. The lambda
// values follow the 255-scale MSE convention, so distortion_mse below is the
// mean squared error in [0,255] pixel units.
constexpr double kDistortionScale = 255.0 * 255.0;

struct TrainConfig {
  double lambda = 0.01;
  int batch_size = 8;
  int crop = 64;
  int64_t steps = 10000;
  double lr_initial = 1e-4;
  double lr_final = 1e-5;
  int64_t lr_drop_step = -1;  // negative -> steps / 2
  double clip_norm = 1.0;
  uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  int64_t resolved_lr_drop() const { return lr_drop_step >= 0 ? lr_drop_step : steps / 2; }
  void validate() const;
};

// Two-level schedule: lr_initial before the drop step, lr_final from it on.
double lr_schedule(int64_t step, const TrainConfig& config);

struct RdLossValue {
  double total = 0.0;
  double rate_bpp = 0.0;
  double distortion_mse = 0.0;  // in [0,255]^2 units
};

struct RdLossGraph {
  Tensor total;  // scalar, connected to all model parameters
  RdLossValue value;
};

// Forward pass with uniform-noise quantization on y and z. `batch` holds
// pixels in [0, 255]; normalization happens inside.
RdLossGraph rd_loss(const Tensor& batch, ModelParams& model, double lambda, Rng& noise_rng);

class Dataset {
 public:
  static Dataset load_directory(const std::string& dir, int min_size);
  static Dataset from_images(std::vector<Image> images, int min_size);

  size_t size() const { return images_.size(); }
  const Image& image(size_t i) const { return images_[i]; }

 private:
  std::vector<Image> images_;
};

// B uniform random crops (image index, then top-left corner, per item).
Tensor sample_batch(const Dataset& dataset, int crop, int batch_size, Rng& rng);

class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params, const TrainConfig& config);
  void zero_grad();
  // Scales all gradients by clip_norm/norm when the global L2 norm exceeds
  // clip_norm, then applies one Adam update. Returns the pre-clip norm.
  double step(double lr);
  int64_t updates() const { return t_; }

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, epsilon_, clip_norm_;
  int64_t t_ = 0;
};

class Trainer {
 public:
  Trainer(ModelParams& model, const TrainConfig& config);

  // One optimization step on a pixel batch; throws NumericError on a
  // non-finite loss.
  RdLossValue train_step(const Tensor& batch);
  double last_grad_norm() const { return last_grad_norm_; }
  int64_t step_count() const { return step_; }
  Rng& data_rng() { return data_rng_; }
  const TrainConfig& config() const { return config_; }

 private:
  ModelParams& model_;
  TrainConfig config_;
  AdamOptimizer optimizer_;
  Rng data_rng_;
  int64_t step_ = 0;
  double last_grad_norm_ = 0.0;
};

}  // namespace svae
