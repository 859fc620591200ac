#pragma once

#include <string>
#include <utility>
#include <vector>

#include "svae/sol.hpp"
#include "svae/tensor.hpp"

namespace svae {

// Self-VAE topology: four stride-2 SOL layers per transform with 5x5 kernels,
// tanh between layers (the latent- and image-producing layers stay linear),
// plus a small convolutional hyperprior that predicts the mean and scale of
// the latent's conditional Gaussian.

struct NetworkConfig {
  int channels = 48;        // latent channels (paper scale: 192)
  int q = 3;                // truncation order of each generative neuron
  int kernel = 5;
  int num_layers = 4;       // stride-2 layers per transform
  int hyper_channels = 32;
  double sigma_floor = 1e-3;
  double pixel_max = 255.0;  // pixels map affinely from [0,pixel_max] to [-1,1]

  int spatial_factor() const { return 1 << num_layers; }
  void validate() const;
};

struct ConvLayerParams {
  Tensor kernels;  // [C_out,C_in,k,k], transposed layers [C_in,C_out,k,k]
  Tensor bias;
  int stride = 1;
  int padding = 0;
  int output_padding = 0;
  bool transposed = false;
  bool relu_out = false;
};

Tensor conv_layer_forward(const Tensor& x, const ConvLayerParams& layer);

// Per-channel logistic prior over the quantized hyperlatent.
struct FactorizedPrior {
  Tensor loc;        // [hyper_channels]
  Tensor raw_scale;  // scale = softplus(raw_scale) + scale_floor
  double scale_floor = 1e-3;

  Tensor scale() const;  // tracked through softplus
};

struct ModelParams {
  NetworkConfig config;
  std::vector<SolLayerParams> encoder;
  std::vector<SolLayerParams> decoder;
  std::vector<ConvLayerParams> hyper_encoder;
  std::vector<ConvLayerParams> hyper_decoder;
  FactorizedPrior prior;

  // Stable iteration order; serialization, the optimizer and gradient checks
  // all rely on it.
  std::vector<std::pair<std::string, Tensor>> named_parameters();
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  void set_requires_grad(bool on);
  ModelParams clone() const;  // deep copy, detached storage
};

// Deterministic in (seed, config).
ModelParams init_network(uint64_t seed, const NetworkConfig& config);

// Raises the truncation order of every SOL layer, zero-filling new branches.
// Forward outputs are unchanged, so a q=1 model embeds exactly into q_target.
ModelParams embed_model(const ModelParams& model, int q_target);

// x normalized to [-1,1], H and W divisible by spatial_factor().
Tensor encode_analysis(const Tensor& x, const ModelParams& params);

// Linear output in latent pixel scale; clamping to [-1,1] happens at pixel
// mapping time, not here.
Tensor decode_synthesis(const Tensor& y_hat, const ModelParams& params);

Tensor hyper_encode(const Tensor& y, const ModelParams& params);

// Returns (mu, sigma); sigma = softplus(raw) + sigma_floor > 0.
std::pair<Tensor, Tensor> hyper_decode(const Tensor& z_hat, const ModelParams& params);

}  // namespace svae
