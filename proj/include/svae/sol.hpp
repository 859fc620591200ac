#pragma once

#include <vector>

#include "svae/rng.hpp"
#include "svae/tensor.hpp"

namespace svae {

// Self-organized operational layers. A generative neuron evaluates a
// truncated polynomial of its input: w0 + sum_{n=1..q} conv(x^n, w_n).
// With q=1 it is exactly a convolutional neuron, and a layer built from
// conv weights via from_conv() reproduces conv2d output bit for bit.

struct GenerativeNeuronParams {
  double w0 = 0.0;
  std::vector<Tensor> w;  // q kernels, each [C_in, k, k]
  double a = 0.0;         // expansion point, fixed at 0

  int q() const { return static_cast<int>(w.size()); }
};

struct SolLayerParams {
  // Learnable storage. Branch-major channel layout: kernel input-channel
  // block n-1 (of q) applies to x^n. Forward layers store
  // [C_out, q*C_in, k, k]; transposed layers store [q*C_in, C_out, k, k].
  Tensor kernels;
  Tensor bias;  // [C_out], the per-neuron w0
  int c_in = 0;
  int c_out = 0;
  int k = 0;
  int q = 1;
  int stride = 1;
  int padding = 0;
  int output_padding = 0;
  bool transposed = false;
  bool apply_tanh_out = false;

  static SolLayerParams from_neurons(const std::vector<GenerativeNeuronParams>& neurons,
                                     int stride, int padding, bool transposed = false,
                                     int output_padding = 0, bool apply_tanh_out = false);
  GenerativeNeuronParams neuron(int i) const;
};

// Single-neuron forward: output [B,1,H',W'].
Tensor generative_neuron_forward(const Tensor& x, const GenerativeNeuronParams& p,
                                 int stride, int padding);

Tensor sol_forward(const Tensor& x, const SolLayerParams& layer);

// Embeds a classic convolution (kernels [C_out,C_in,k,k], bias [C_out]) into
// a SOL of order q_target: branch 1 carries the kernels, branches >= 2 are
// zero. sol_forward of the result equals conv2d exactly.
SolLayerParams from_conv(const Tensor& kernels, const Tensor& bias, int q_target,
                         int stride = 1, int padding = 0);

// Same nesting for an existing layer: copies it with the truncation order
// raised to q_target, new branches zero.
SolLayerParams embed_order(const SolLayerParams& layer, int q_target);

// w_n = derivs[n] / n! for derivs = [f(a), f'(a), ..., f^(q)(a)].
std::vector<double> taylor_coefficients(const std::vector<double>& derivs);

// Fan-in uniform init; branch n scaled by 1/n! so fresh layers start
// near-linear. Biases zero.
SolLayerParams init_sol_layer(int c_in, int c_out, int k, int q, int stride, int padding,
                              bool transposed, int output_padding, bool apply_tanh_out,
                              Rng& rng);

}  // namespace svae
