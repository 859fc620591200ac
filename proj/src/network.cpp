#include "svae/network.hpp"

#include <cmath>

#include "svae/errors.hpp"

namespace svae {

void NetworkConfig::validate() const {
  if (channels < 1) throw ValueError("config: channels must be >= 1");
  if (q < 1) throw ValueError("config: q must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw ValueError("config: kernel must be odd and >= 1");
  if (num_layers < 1) throw ValueError("config: num_layers must be >= 1");
  if (hyper_channels < 1) throw ValueError("config: hyper_channels must be >= 1");
  if (sigma_floor <= 0.0) throw ValueError("config: sigma_floor must be positive");
}

Tensor conv_layer_forward(const Tensor& x, const ConvLayerParams& layer) {
  Tensor out = layer.transposed
                   ? conv2d_transposed(x, layer.kernels, layer.bias, layer.stride,
                                       layer.padding, layer.output_padding)
                   : conv2d(x, layer.kernels, layer.bias, layer.stride, layer.padding);
  if (layer.relu_out) out = relu(out);
  return out;
}

Tensor FactorizedPrior::scale() const {
  return add_scalar(softplus(raw_scale), scale_floor);
}

namespace {

ConvLayerParams init_conv_layer(int c_in, int c_out, int k, int stride, int padding,
                                bool transposed, int output_padding, bool relu_out, Rng& rng) {
  ConvLayerParams layer;
  layer.stride = stride;
  layer.padding = padding;
  layer.transposed = transposed;
  layer.output_padding = output_padding;
  layer.relu_out = relu_out;
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in) * k * k);
  layer.kernels = transposed ? Tensor::uniform({c_in, c_out, k, k}, -bound, bound, rng)
                             : Tensor::uniform({c_out, c_in, k, k}, -bound, bound, rng);
  layer.bias = Tensor({c_out});
  return layer;
}

constexpr uint64_t kInitStream = 0x494E4954ull;  // "INIT"

double softplus_inverse(double y) { return std::log(std::expm1(y)); }

}  // namespace

ModelParams init_network(uint64_t seed, const NetworkConfig& config) {
  config.validate();
  ModelParams m;
  m.config = config;
  Rng rng = substream(seed, kInitStream);
  const int C = config.channels;
  const int Hc = config.hyper_channels;
  const int k = config.kernel;
  const int pad = k / 2;  // stride-2 layers halve even dims exactly

  for (int i = 0; i < config.num_layers; ++i) {
    const int c_in = i == 0 ? 3 : C;
    const bool last = i == config.num_layers - 1;
    m.encoder.push_back(
        init_sol_layer(c_in, C, k, config.q, 2, pad, false, 0, !last, rng));
  }
  for (int i = 0; i < config.num_layers; ++i) {
    const bool last = i == config.num_layers - 1;
    const int c_out = last ? 3 : C;
    m.decoder.push_back(
        init_sol_layer(C, c_out, k, config.q, 2, pad, true, 1, !last, rng));
  }

  m.hyper_encoder.push_back(init_conv_layer(C, Hc, 3, 1, 1, false, 0, true, rng));
  m.hyper_encoder.push_back(init_conv_layer(Hc, Hc, 5, 2, 2, false, 0, true, rng));
  m.hyper_encoder.push_back(init_conv_layer(Hc, Hc, 5, 2, 2, false, 0, false, rng));

  m.hyper_decoder.push_back(init_conv_layer(Hc, Hc, 5, 2, 2, true, 1, true, rng));
  m.hyper_decoder.push_back(init_conv_layer(Hc, Hc, 5, 2, 2, true, 1, true, rng));
  m.hyper_decoder.push_back(init_conv_layer(Hc, 2 * C, 3, 1, 1, false, 0, false, rng));
  // Start sigma predictions near 1 rather than at the floor.
  {
    ConvLayerParams& final_layer = m.hyper_decoder.back();
    const double raw0 = softplus_inverse(1.0);
    for (int c = C; c < 2 * C; ++c) final_layer.bias.data()[c] = raw0;
  }

  m.prior.loc = Tensor({Hc});
  m.prior.raw_scale = Tensor({Hc}, softplus_inverse(1.0));
  m.prior.scale_floor = config.sigma_floor;
  return m;
}

ModelParams embed_model(const ModelParams& model, int q_target) {
  ModelParams out = model.clone();
  for (auto& layer : out.encoder) layer = embed_order(layer, q_target);
  for (auto& layer : out.decoder) layer = embed_order(layer, q_target);
  out.config.q = q_target;
  return out;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  auto push_sol = [&](const std::string& prefix, std::vector<SolLayerParams>& layers) {
    for (size_t i = 0; i < layers.size(); ++i) {
      out.emplace_back(prefix + "." + std::to_string(i) + ".kernels", layers[i].kernels);
      out.emplace_back(prefix + "." + std::to_string(i) + ".bias", layers[i].bias);
    }
  };
  auto push_conv = [&](const std::string& prefix, std::vector<ConvLayerParams>& layers) {
    for (size_t i = 0; i < layers.size(); ++i) {
      out.emplace_back(prefix + "." + std::to_string(i) + ".kernels", layers[i].kernels);
      out.emplace_back(prefix + "." + std::to_string(i) + ".bias", layers[i].bias);
    }
  };
  push_sol("encoder", encoder);
  push_sol("decoder", decoder);
  push_conv("hyper_encoder", hyper_encoder);
  push_conv("hyper_decoder", hyper_decoder);
  out.emplace_back("prior.loc", prior.loc);
  out.emplace_back("prior.raw_scale", prior.raw_scale);
  return out;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_parameters() const {
  return const_cast<ModelParams*>(this)->named_parameters();
}

void ModelParams::set_requires_grad(bool on) {
  for (auto& [name, t] : named_parameters()) t.set_requires_grad(on);
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  out.config = config;
  auto copy_sol = [](const SolLayerParams& l) {
    SolLayerParams c = l;
    c.kernels = l.kernels.detached();
    c.bias = l.bias.detached();
    return c;
  };
  auto copy_conv = [](const ConvLayerParams& l) {
    ConvLayerParams c = l;
    c.kernels = l.kernels.detached();
    c.bias = l.bias.detached();
    return c;
  };
  for (const auto& l : encoder) out.encoder.push_back(copy_sol(l));
  for (const auto& l : decoder) out.decoder.push_back(copy_sol(l));
  for (const auto& l : hyper_encoder) out.hyper_encoder.push_back(copy_conv(l));
  for (const auto& l : hyper_decoder) out.hyper_decoder.push_back(copy_conv(l));
  out.prior.loc = prior.loc.detached();
  out.prior.raw_scale = prior.raw_scale.detached();
  out.prior.scale_floor = prior.scale_floor;
  return out;
}

Tensor encode_analysis(const Tensor& x, const ModelParams& params) {
  if (x.ndim() != 4 || x.dim(1) != 3)
    throw ShapeError("encode_analysis: expected [B,3,H,W] input, got " + shape_str(x.shape()));
  const int f = params.config.spatial_factor();
  if (x.dim(2) % f != 0)
    throw ShapeError("encode_analysis: height " + std::to_string(x.dim(2)) +
                     " not divisible by " + std::to_string(f));
  if (x.dim(3) % f != 0)
    throw ShapeError("encode_analysis: width " + std::to_string(x.dim(3)) +
                     " not divisible by " + std::to_string(f));
  Tensor h = x;
  for (const auto& layer : params.encoder) h = sol_forward(h, layer);
  return h;
}

Tensor decode_synthesis(const Tensor& y_hat, const ModelParams& params) {
  Tensor h = y_hat;
  for (const auto& layer : params.decoder) h = sol_forward(h, layer);
  return h;
}

Tensor hyper_encode(const Tensor& y, const ModelParams& params) {
  Tensor h = y;
  for (const auto& layer : params.hyper_encoder) h = conv_layer_forward(h, layer);
  return h;
}

std::pair<Tensor, Tensor> hyper_decode(const Tensor& z_hat, const ModelParams& params) {
  Tensor h = z_hat;
  for (const auto& layer : params.hyper_decoder) h = conv_layer_forward(h, layer);
  const int C = params.config.channels;
  if (h.dim(1) != 2 * C)
    throw ShapeError("hyper_decode: expected " + std::to_string(2 * C) + " maps, got " +
                     std::to_string(h.dim(1)));
  Tensor mu = slice_channels(h, 0, C);
  Tensor sigma = add_scalar(softplus(slice_channels(h, C, 2 * C)), params.config.sigma_floor);
  return {mu, sigma};
}

}  // namespace svae
