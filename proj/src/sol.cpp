#include "svae/sol.hpp"

#include <cmath>
#include <cstring>

#include "svae/errors.hpp"

namespace svae {

namespace {

void check_neuron(const GenerativeNeuronParams& p) {
  if (p.w.empty()) throw ValueError("generative neuron: q must be >= 1");
  const Shape& s0 = p.w[0].shape();
  if (s0.size() != 3) throw ShapeError("generative neuron kernels must be [C_in,k,k]");
  for (const Tensor& wn : p.w)
    if (wn.shape() != s0)
      throw ShapeError("generative neuron branch kernels must share one shape, got " +
                       shape_str(wn.shape()) + " vs " + shape_str(s0));
  if (s0[1] != s0[2]) throw ShapeError("generative neuron kernels must be square");
}

// Stacks per-branch kernels into the layer storage layout.
Tensor stack_kernels(const std::vector<GenerativeNeuronParams>& neurons, bool transposed) {
  const int c_out = static_cast<int>(neurons.size());
  const int q = neurons[0].q();
  const int c_in = neurons[0].w[0].dim(0);
  const int k = neurons[0].w[0].dim(1);
  const int64_t ksz = static_cast<int64_t>(k) * k;
  if (!transposed) {
    Tensor out({c_out, q * c_in, k, k});
    double* dst = out.data();
    for (int co = 0; co < c_out; ++co)
      for (int n = 0; n < q; ++n)
        std::memcpy(dst + ((static_cast<int64_t>(co) * q + n) * c_in) * ksz,
                    neurons[co].w[n].data(), sizeof(double) * c_in * ksz);
    return out;
  }
  Tensor out({q * c_in, c_out, k, k});
  double* dst = out.data();
  for (int n = 0; n < q; ++n)
    for (int ci = 0; ci < c_in; ++ci)
      for (int co = 0; co < c_out; ++co)
        std::memcpy(dst + ((static_cast<int64_t>(n) * c_in + ci) * c_out + co) * ksz,
                    neurons[co].w[n].data() + static_cast<int64_t>(ci) * ksz,
                    sizeof(double) * ksz);
  return out;
}

}  // namespace

SolLayerParams SolLayerParams::from_neurons(const std::vector<GenerativeNeuronParams>& neurons,
                                            int stride, int padding, bool transposed,
                                            int output_padding, bool apply_tanh_out) {
  if (neurons.empty()) throw ValueError("SOL layer needs at least one neuron");
  check_neuron(neurons[0]);
  const int q = neurons[0].q();
  const Shape& ks = neurons[0].w[0].shape();
  for (const auto& n : neurons) {
    check_neuron(n);
    if (n.q() != q || n.w[0].shape() != ks)
      throw ShapeError("all neurons in a SOL layer must share C_in, k and q");
    if (n.a != 0.0) throw ValueError("expansion point a is fixed at 0");
  }
  SolLayerParams layer;
  layer.c_in = ks[0];
  layer.c_out = static_cast<int>(neurons.size());
  layer.k = ks[1];
  layer.q = q;
  layer.stride = stride;
  layer.padding = padding;
  layer.transposed = transposed;
  layer.output_padding = output_padding;
  layer.apply_tanh_out = apply_tanh_out;
  layer.kernels = stack_kernels(neurons, transposed);
  layer.bias = Tensor({layer.c_out});
  for (int co = 0; co < layer.c_out; ++co) layer.bias.data()[co] = neurons[co].w0;
  return layer;
}

GenerativeNeuronParams SolLayerParams::neuron(int i) const {
  if (i < 0 || i >= c_out) throw ShapeError("neuron index out of range");
  GenerativeNeuronParams p;
  p.w0 = bias.data()[i];
  const int64_t ksz = static_cast<int64_t>(k) * k;
  for (int n = 0; n < q; ++n) {
    Tensor wn({c_in, k, k});
    for (int ci = 0; ci < c_in; ++ci) {
      const double* src =
          transposed
              ? kernels.data() + ((static_cast<int64_t>(n) * c_in + ci) * c_out + i) * ksz
              : kernels.data() + ((static_cast<int64_t>(i) * q + n) * c_in + ci) * ksz;
      std::memcpy(wn.data() + static_cast<int64_t>(ci) * ksz, src, sizeof(double) * ksz);
    }
    p.w.push_back(std::move(wn));
  }
  return p;
}

Tensor sol_forward(const Tensor& x, const SolLayerParams& layer) {
  if (x.ndim() != 4) throw ShapeError("sol_forward: expected 4-D input");
  if (x.dim(1) != layer.c_in)
    throw ShapeError("sol_forward: input channels " + std::to_string(x.dim(1)) +
                     " do not match layer C_in " + std::to_string(layer.c_in));
  // q branches fold into one convolution over the power-stacked channels;
  // the branch-major kernel layout matches power_stack block order, so a
  // layer with zero high-order branches reproduces plain conv2d exactly.
  const Tensor xin = layer.q == 1 ? x : power_stack(x, layer.q);
  Tensor out = layer.transposed
                   ? conv2d_transposed(xin, layer.kernels, layer.bias, layer.stride,
                                       layer.padding, layer.output_padding)
                   : conv2d(xin, layer.kernels, layer.bias, layer.stride, layer.padding);
  if (layer.apply_tanh_out) out = tanh(out);
  return out;
}

Tensor generative_neuron_forward(const Tensor& x, const GenerativeNeuronParams& p,
                                 int stride, int padding) {
  check_neuron(p);
  SolLayerParams layer = SolLayerParams::from_neurons({p}, stride, padding);
  return sol_forward(x, layer);
}

SolLayerParams from_conv(const Tensor& kernels, const Tensor& bias, int q_target,
                         int stride, int padding) {
  if (q_target < 1) throw ValueError("from_conv: q_target must be >= 1");
  if (kernels.ndim() != 4) throw ShapeError("from_conv: kernels must be [C_out,C_in,k,k]");
  const int c_out = kernels.dim(0), c_in = kernels.dim(1), k = kernels.dim(2);
  if (kernels.dim(3) != k) throw ShapeError("from_conv: kernels must be square");
  if (bias.numel() != c_out) throw ShapeError("from_conv: bias must be [C_out]");

  SolLayerParams layer;
  layer.c_in = c_in;
  layer.c_out = c_out;
  layer.k = k;
  layer.q = q_target;
  layer.stride = stride;
  layer.padding = padding;
  layer.kernels = Tensor({c_out, q_target * c_in, k, k});
  const int64_t block = static_cast<int64_t>(c_in) * k * k;
  for (int co = 0; co < c_out; ++co)
    std::memcpy(layer.kernels.data() + static_cast<int64_t>(co) * q_target * block,
                kernels.data() + static_cast<int64_t>(co) * block, sizeof(double) * block);
  layer.bias = bias.detached();
  return layer;
}

SolLayerParams embed_order(const SolLayerParams& layer, int q_target) {
  if (q_target < layer.q) throw ValueError("embed_order: q_target must be >= current q");
  SolLayerParams out = layer;
  out.q = q_target;
  out.bias = layer.bias.detached();
  const int64_t ksz = static_cast<int64_t>(layer.k) * layer.k;
  if (!layer.transposed) {
    out.kernels = Tensor({layer.c_out, q_target * layer.c_in, layer.k, layer.k});
    const int64_t src_block = static_cast<int64_t>(layer.q) * layer.c_in * ksz;
    const int64_t dst_block = static_cast<int64_t>(q_target) * layer.c_in * ksz;
    for (int co = 0; co < layer.c_out; ++co)
      std::memcpy(out.kernels.data() + co * dst_block,
                  layer.kernels.data() + co * src_block, sizeof(double) * src_block);
  } else {
    out.kernels = Tensor({q_target * layer.c_in, layer.c_out, layer.k, layer.k});
    const int64_t rows = static_cast<int64_t>(layer.q) * layer.c_in;
    std::memcpy(out.kernels.data(), layer.kernels.data(),
                sizeof(double) * rows * layer.c_out * ksz);
  }
  return out;
}

std::vector<double> taylor_coefficients(const std::vector<double>& derivs) {
  if (derivs.size() < 2) throw ValueError("taylor_coefficients: need at least f(a) and f'(a)");
  std::vector<double> w(derivs.size());
  double factorial = 1.0;
  for (size_t n = 0; n < derivs.size(); ++n) {
    if (n > 1) factorial *= static_cast<double>(n);
    w[n] = derivs[n] / factorial;
  }
  return w;
}

SolLayerParams init_sol_layer(int c_in, int c_out, int k, int q, int stride, int padding,
                              bool transposed, int output_padding, bool apply_tanh_out,
                              Rng& rng) {
  if (c_in < 1 || c_out < 1 || k < 1 || q < 1)
    throw ValueError("init_sol_layer: c_in, c_out, k and q must be >= 1");
  SolLayerParams layer;
  layer.c_in = c_in;
  layer.c_out = c_out;
  layer.k = k;
  layer.q = q;
  layer.stride = stride;
  layer.padding = padding;
  layer.transposed = transposed;
  layer.output_padding = output_padding;
  layer.apply_tanh_out = apply_tanh_out;
  layer.kernels = transposed ? Tensor({q * c_in, c_out, k, k}) : Tensor({c_out, q * c_in, k, k});
  layer.bias = Tensor({c_out});

  // Branch n gets the fan-in bound scaled by 1/n!, mirroring the decay of
  // Taylor weights; draws run in storage order.
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in) * k * k);
  std::vector<double> scale(q);
  double factorial = 1.0;
  for (int n = 0; n < q; ++n) {
    if (n >= 1) factorial *= static_cast<double>(n + 1);
    scale[n] = bound / factorial;
  }
  const int64_t ksz = static_cast<int64_t>(k) * k;
  double* kd = layer.kernels.data();
  const int64_t total = layer.kernels.numel();
  for (int64_t i = 0; i < total; ++i) {
    const int64_t cin_total_index = transposed ? i / (static_cast<int64_t>(c_out) * ksz)
                                               : (i / ksz) % (static_cast<int64_t>(q) * c_in);
    const int branch = static_cast<int>(cin_total_index / c_in);
    kd[i] = uniform(rng, -scale[branch], scale[branch]);
  }
  return layer;
}

}  // namespace svae
