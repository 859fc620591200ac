#include "svae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "svae/entropy.hpp"
#include "svae/errors.hpp"

namespace svae {

namespace {
constexpr uint64_t kDataStream = 0x44415441ull;   // "DATA"
constexpr uint64_t kNoiseStream = 0x4E4F4953ull;  // "NOIS"
}  // namespace

void TrainConfig::validate() const {
  if (!(lambda > 0.0)) throw ValueError("train config: lambda must be positive");
  if (batch_size < 1) throw ValueError("train config: batch_size must be >= 1");
  if (crop < 64 || crop % 64 != 0)
    throw ValueError("train config: crop must be a positive multiple of 64");
  if (steps < 0) throw ValueError("train config: steps must be >= 0");
  if (!(lr_initial > 0.0) || !(lr_final > 0.0))
    throw ValueError("train config: learning rates must be positive");
  if (resolved_lr_drop() > steps && steps > 0)
    throw ValueError("train config: lr_drop_step must not exceed steps");
  if (!(clip_norm > 0.0)) throw ValueError("train config: clip_norm must be positive");
}

double lr_schedule(int64_t step, const TrainConfig& config) {
  if (step < 0) throw ValueError("lr_schedule: negative step");
  return step < config.resolved_lr_drop() ? config.lr_initial : config.lr_final;
}

RdLossGraph rd_loss(const Tensor& batch, ModelParams& model, double lambda, Rng& noise_rng) {
  if (batch.ndim() != 4 || batch.dim(1) != 3)
    throw ShapeError("rd_loss: expected [B,3,H,W] pixel batch");
  const Tensor unit = normalize_pixels(batch, model.config.pixel_max);
  Tensor y = encode_analysis(unit, model);
  if (y.dim(2) % 4 != 0 || y.dim(3) % 4 != 0)
    throw ShapeError("rd_loss: latent grid must be divisible by the hyper stride (use crops "
                     "that are multiples of 64)");
  Tensor y_noisy = quantize_train(y, noise_rng);
  Tensor z = hyper_encode(y, model);
  Tensor z_noisy = quantize_train(z, noise_rng);
  auto [mu, sigma] = hyper_decode(z_noisy, model);

  Tensor p_y = gaussian_bin_likelihood(y_noisy, mu, sigma);
  Tensor p_z = logistic_bin_likelihood(z_noisy, model.prior.loc, model.prior.scale());
  const double pixels = static_cast<double>(batch.dim(0)) * batch.dim(2) * batch.dim(3);
  Tensor rate_bpp_t = mul_scalar(add(rate_bits(p_y), rate_bits(p_z)), 1.0 / pixels);

  Tensor recon = decode_synthesis(y_noisy, model);
  // MSE in [-1,1] units is 4x the [0,1]-scale MSE the lambda convention uses.
  Tensor mse255_t = mul_scalar(mse(recon, unit), 0.25 * kDistortionScale);
  Tensor total = add(rate_bpp_t, mul_scalar(mse255_t, lambda));

  RdLossGraph g;
  g.total = total;
  g.value.total = total.item();
  g.value.rate_bpp = rate_bpp_t.item();
  g.value.distortion_mse = mse255_t.item();
  return g;
}

// ---- data -----------------------------------------------------------------

Dataset Dataset::load_directory(const std::string& dir, int min_size) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError(dir + ": not a readable directory");
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".ppm" || ext == ".png") paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<Image> images;
  images.reserve(paths.size());
  for (const auto& p : paths) images.push_back(read_image(p));
  Dataset ds = from_images(std::move(images), min_size);
  if (ds.size() == 0)
    throw DatasetError(DatasetError::Kind::Empty, dir + ": no PPM or PNG images found");
  return ds;
}

Dataset Dataset::from_images(std::vector<Image> images, int min_size) {
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i].width < min_size || images[i].height < min_size)
      throw DatasetError(DatasetError::Kind::UndersizedImage,
                         "image " + std::to_string(i) + " is " +
                             std::to_string(images[i].width) + "x" +
                             std::to_string(images[i].height) + ", smaller than the " +
                             std::to_string(min_size) + "-pixel crop");
  }
  Dataset ds;
  ds.images_ = std::move(images);
  return ds;
}

Tensor sample_batch(const Dataset& dataset, int crop, int batch_size, Rng& rng) {
  if (dataset.size() == 0)
    throw DatasetError(DatasetError::Kind::Empty, "sample_batch: empty dataset");
  Tensor batch({batch_size, 3, crop, crop});
  double* out = batch.data();
  const int64_t plane = static_cast<int64_t>(crop) * crop;
  for (int b = 0; b < batch_size; ++b) {
    const Image& img = dataset.image(uniform_index(rng, dataset.size()));
    const int y0 = static_cast<int>(uniform_index(rng, img.height - crop + 1));
    const int x0 = static_cast<int>(uniform_index(rng, img.width - crop + 1));
    for (int y = 0; y < crop; ++y)
      for (int x = 0; x < crop; ++x) {
        const size_t p = (static_cast<size_t>(y0 + y) * img.width + (x0 + x)) * 3;
        const int64_t o = static_cast<int64_t>(y) * crop + x;
        double* base = out + static_cast<int64_t>(b) * 3 * plane;
        base[o] = img.rgb[p];
        base[plane + o] = img.rgb[p + 1];
        base[2 * plane + o] = img.rgb[p + 2];
      }
  }
  return batch;
}

// ---- optimizer -------------------------------------------------------------

AdamOptimizer::AdamOptimizer(std::vector<std::pair<std::string, Tensor>> params,
                             const TrainConfig& config)
    : params_(std::move(params)),
      beta1_(config.beta1),
      beta2_(config.beta2),
      epsilon_(config.epsilon),
      clip_norm_(config.clip_norm) {
  for (auto& [name, t] : params_) {
    t.set_requires_grad(true);
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void AdamOptimizer::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

double AdamOptimizer::step(double lr) {
  double sq = 0.0;
  for (auto& [name, t] : params_)
    for (double g : t.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  const double scale = norm > clip_norm_ ? clip_norm_ / norm : 1.0;

  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t p = 0; p < params_.size(); ++p) {
    auto& t = params_[p].second;
    auto& m = m_[p];
    auto& v = v_[p];
    const auto& grad = t.grad();
    auto& values = t.values();
    for (size_t i = 0; i < values.size(); ++i) {
      const double g = grad[i] * scale;
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      values[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + epsilon_);
    }
  }
  return norm;
}

// ---- trainer ----------------------------------------------------------------

Trainer::Trainer(ModelParams& model, const TrainConfig& config)
    : model_(model),
      config_(config),
      optimizer_((config.validate(), model.named_parameters()), config),
      data_rng_(substream(config.seed, kDataStream)) {}

RdLossValue Trainer::train_step(const Tensor& batch) {
  Rng noise_rng = substream(config_.seed, kNoiseStream, static_cast<uint64_t>(step_));
  RdLossGraph g = rd_loss(batch, model_, config_.lambda, noise_rng);
  if (!std::isfinite(g.value.total))
    throw NumericError("non-finite loss at step " + std::to_string(step_) +
                       " (rate_bpp=" + std::to_string(g.value.rate_bpp) +
                       ", distortion=" + std::to_string(g.value.distortion_mse) + ")");
  optimizer_.zero_grad();
  backward(g.total);
  last_grad_norm_ = optimizer_.step(lr_schedule(step_, config_));
  ++step_;
  return g.value;
}

}  // namespace svae
