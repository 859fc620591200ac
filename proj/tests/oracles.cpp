#include "oracles.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "svae/errors.hpp"

namespace oracle {

using svae::Shape;
using svae::Tensor;

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding) {
  const int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = w.dim(0), k = w.dim(2);
  const int OH = (H + 2 * padding - k) / stride + 1;
  const int OW = (W + 2 * padding - k) / stride + 1;
  Tensor out({B, Co, OH, OW});
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Co; ++co)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
          double acc = bias.data()[co];
          for (int ci = 0; ci < Ci; ++ci)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int ih = oh * stride - padding + kh;
                const int iw = ow * stride - padding + kw;
                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                acc += x.at({b, ci, ih, iw}) * w.at({co, ci, kh, kw});
              }
          out.data()[((static_cast<int64_t>(b) * Co + co) * OH + oh) * OW + ow] = acc;
        }
  return out;
}

Tensor conv2d_transposed(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
                         int padding, int output_padding) {
  const int B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Co = w.dim(1), k = w.dim(2);
  const int OH = (H - 1) * stride - 2 * padding + k + output_padding;
  const int OW = (W - 1) * stride - 2 * padding + k + output_padding;
  Tensor out({B, Co, OH, OW});
  // bias first, then scatter every input tap
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Co; ++co)
      for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow)
          out.data()[((static_cast<int64_t>(b) * Co + co) * OH + oh) * OW + ow] =
              bias.data()[co];
  for (int b = 0; b < B; ++b)
    for (int ci = 0; ci < Ci; ++ci)
      for (int ih = 0; ih < H; ++ih)
        for (int iw = 0; iw < W; ++iw)
          for (int co = 0; co < Co; ++co)
            for (int kh = 0; kh < k; ++kh)
              for (int kw = 0; kw < k; ++kw) {
                const int oh = ih * stride - padding + kh;
                const int ow = iw * stride - padding + kw;
                if (oh < 0 || oh >= OH || ow < 0 || ow >= OW) continue;
                out.data()[((static_cast<int64_t>(b) * Co + co) * OH + oh) * OW + ow] +=
                    x.at({b, ci, ih, iw}) * w.at({ci, co, kh, kw});
              }
  return out;
}

double tanh_cf(double x) {
  if (x < 0) return -tanh_cf(-x);
  if (x > 20.0) return 1.0;
  // tanh(x) = x / (1 + x^2/(3 + x^2/(5 + ...))), evaluated bottom-up.
  const double x2 = x * x;
  double f = 0.0;
  for (int n = 40; n >= 1; --n) f = x2 / ((2 * n + 1) + f);
  return x / (1.0 + f);
}

double gaussian_bin_simpson(double offset, double sigma, int intervals) {
  const double a = offset - 0.5, b = offset + 0.5;
  const double h = (b - a) / intervals;
  auto pdf = [sigma](double t) {
    return std::exp(-0.5 * (t / sigma) * (t / sigma)) / (sigma * std::sqrt(2.0 * M_PI));
  };
  double acc = pdf(a) + pdf(b);
  for (int i = 1; i < intervals; ++i) acc += pdf(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

double inner_product(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) throw std::invalid_argument("inner_product: size mismatch");
  long double acc = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += static_cast<long double>(a.data()[i]) * b.data()[i];
  return static_cast<double>(acc);
}

GradCheck check_gradients(const std::function<Tensor()>& loss_fn,
                          const std::vector<std::pair<std::string, Tensor>>& params,
                          double h) {
  for (const auto& [name, t] : params) const_cast<Tensor&>(t).zero_grad();
  Tensor loss = loss_fn();
  svae::backward(loss);

  GradCheck result;
  for (const auto& [name, t] : params) {
    auto& tensor = const_cast<Tensor&>(t);
    const std::vector<double> analytic = tensor.grad();
    for (int64_t i = 0; i < tensor.numel(); ++i) {
      const double saved = tensor.values()[i];
      double fp, fm;
      {
        svae::NoGradGuard no_grad;
        tensor.values()[i] = saved + h;
        fp = loss_fn().item();
        tensor.values()[i] = saved - h;
        fm = loss_fn().item();
        tensor.values()[i] = saved;
      }
      const double fd = (fp - fm) / (2.0 * h);
      const double denom = std::max({std::abs(analytic[i]), std::abs(fd), 1e-3});
      const double rel = std::abs(analytic[i] - fd) / denom;
      if (rel > result.max_rel_err) {
        result.max_rel_err = rel;
        result.worst = name + "[" + std::to_string(i) + "] analytic=" +
                       std::to_string(analytic[i]) + " fd=" + std::to_string(fd);
      }
    }
  }
  return result;
}

std::vector<double> polyfit(const std::vector<double>& x, const std::vector<double>& y,
                            int degree) {
  const int n = degree + 1;
  std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
  std::vector<double> rhs(n, 0.0);
  for (size_t s = 0; s < x.size(); ++s) {
    std::vector<double> basis(n);
    basis[0] = 1.0;
    for (int i = 1; i < n; ++i) basis[i] = basis[i - 1] * x[s];
    for (int i = 0; i < n; ++i) {
      rhs[i] += basis[i] * y[s];
      for (int j = 0; j < n; ++j) A[i][j] += basis[i] * basis[j];
    }
  }
  // Gaussian elimination with partial pivoting.
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int col = 0; col < n; ++col) {
    int piv = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(A[perm[r]][col]) > std::abs(A[perm[piv]][col])) piv = r;
    std::swap(perm[col], perm[piv]);
    for (int r = col + 1; r < n; ++r) {
      const double f = A[perm[r]][col] / A[perm[col]][col];
      for (int c = col; c < n; ++c) A[perm[r]][c] -= f * A[perm[col]][c];
      rhs[perm[r]] -= f * rhs[perm[col]];
    }
  }
  std::vector<double> coeff(n);
  for (int col = n - 1; col >= 0; --col) {
    double v = rhs[perm[col]];
    for (int c = col + 1; c < n; ++c) v -= A[perm[col]][c] * coeff[c];
    coeff[col] = v / A[perm[col]][col];
  }
  return coeff;
}

double polyval(const std::vector<double>& coeff, double x) {
  double acc = 0.0;
  for (size_t i = coeff.size(); i-- > 0;) acc = acc * x + coeff[i];
  return acc;
}

svae::Image test_image(int width, int height, uint64_t seed, double noise) {
  svae::Rng rng(svae::splitmix64(seed ^ 0x7E577E57ull));
  // Random sinusoid parameters per channel plus a coarse value-noise lattice.
  const int lattice = 9;
  std::vector<double> lat(3 * lattice * lattice);
  for (double& v : lat) v = svae::uniform01(rng);
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves(9);
  for (auto& w : waves)
    w = {svae::uniform(rng, -3.0, 3.0), svae::uniform(rng, -3.0, 3.0),
         svae::uniform(rng, 0.0, 6.28318), svae::uniform(rng, 0.1, 0.4)};

  svae::Image img;
  img.width = width;
  img.height = height;
  img.rgb.resize(static_cast<size_t>(width) * height * 3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double u = static_cast<double>(x) / width;
      const double v = static_cast<double>(y) / height;
      for (int c = 0; c < 3; ++c) {
        double val = 0.35 + 0.3 * (c == 0 ? u : c == 1 ? v : 0.5 * (u + v));
        for (int w = c * 3; w < c * 3 + 3; ++w)
          val += waves[w].amp *
                 std::sin(6.28318 * (waves[w].fx * u + waves[w].fy * v) + waves[w].phase);
        // bilinear value noise
        const double gx = u * (lattice - 1), gy = v * (lattice - 1);
        const int x0 = static_cast<int>(gx), y0 = static_cast<int>(gy);
        const double tx = gx - x0, ty = gy - y0;
        const int x1 = std::min(x0 + 1, lattice - 1), y1 = std::min(y0 + 1, lattice - 1);
        auto cell = [&](int yy, int xx) { return lat[(c * lattice + yy) * lattice + xx]; };
        const double vn = (1 - tx) * (1 - ty) * cell(y0, x0) + tx * (1 - ty) * cell(y0, x1) +
                          (1 - tx) * ty * cell(y1, x0) + tx * ty * cell(y1, x1);
        val += 0.35 * (vn - 0.5);
        val += noise * (svae::uniform01(rng) - 0.5);
        img.rgb[(static_cast<size_t>(y) * width + x) * 3 + c] =
            static_cast<uint8_t>(std::clamp(val, 0.0, 1.0) * 255.0 + 0.5);
      }
    }
  return img;
}

std::vector<std::string> write_test_dataset(const std::string& dir, int count, int width,
                                            int height, uint64_t seed, double noise) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> paths;
  for (int i = 0; i < count; ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "img_%04d.ppm", i);
    const std::string path = (fs::path(dir) / name).string();
    svae::write_ppm(path, test_image(width, height, seed + 1000 + i, noise));
    paths.push_back(path);
  }
  return paths;
}

std::string make_temp_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  static std::atomic<uint64_t> counter{0};
  const auto base = fs::temp_directory_path() / "svae_tests";
  fs::create_directories(base);
  const auto dir =
      base / (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir.string();
}

Tensor random_tensor(Shape shape, svae::Rng& rng, double lo, double hi) {
  return Tensor::uniform(std::move(shape), lo, hi, rng);
}

}  // namespace oracle
