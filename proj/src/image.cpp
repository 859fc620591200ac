#include "svae/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "svae/errors.hpp"

#ifdef SVAE_HAVE_PNG
#include <png.h>
#endif

namespace svae {

namespace {

void check_image(const Image& img, const char* what) {
  if (img.width < 1 || img.height < 1)
    throw ValueError(std::string(what) + ": empty image");
  if (img.rgb.size() != static_cast<size_t>(img.width) * img.height * 3)
    throw ValueError(std::string(what) + ": pixel buffer size mismatch");
}

bool has_suffix(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  return std::equal(suffix.rbegin(), suffix.rend(), s.rbegin(), [](char a, char b) {
    return std::tolower(static_cast<unsigned char>(a)) ==
           std::tolower(static_cast<unsigned char>(b));
  });
}

int ppm_next_value(std::istream& in, const std::string& path) {
  // PPM headers allow whitespace and '#' comments between tokens.
  while (true) {
    int c = in.get();
    if (c == EOF) throw FormatError(path + ": truncated PPM header");
    if (std::isspace(c)) continue;
    if (c == '#') {
      while (c != '\n' && c != EOF) c = in.get();
      continue;
    }
    int value = 0;
    bool any = false;
    while (std::isdigit(c)) {
      value = value * 10 + (c - '0');
      any = true;
      c = in.get();
    }
    if (!any) throw FormatError(path + ": malformed PPM header");
    return value;
  }
}

#ifdef SVAE_HAVE_PNG

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (fp) std::fclose(fp);
  }
};

Image read_png(const std::string& path) {
  PngReadCloser c;
  c.fp = std::fopen(path.c_str(), "rb");
  if (!c.fp) throw IoError(path + ": cannot open for reading");
  c.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!c.png) throw IoError("libpng init failed");
  c.info = png_create_info_struct(c.png);
  if (!c.info) throw IoError("libpng init failed");
  if (setjmp(png_jmpbuf(c.png))) throw FormatError(path + ": invalid PNG data");
  png_init_io(c.png, c.fp);
  png_read_info(c.png, c.info);

  // Coerce everything to 8-bit RGB.
  png_set_strip_16(c.png);
  png_set_palette_to_rgb(c.png);
  png_set_expand_gray_1_2_4_to_8(c.png);
  if (png_get_valid(c.png, c.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(c.png);
  png_set_strip_alpha(c.png);
  png_set_gray_to_rgb(c.png);
  png_read_update_info(c.png, c.info);

  Image img;
  img.width = static_cast<int>(png_get_image_width(c.png, c.info));
  img.height = static_cast<int>(png_get_image_height(c.png, c.info));
  if (png_get_rowbytes(c.png, c.info) != static_cast<size_t>(img.width) * 3)
    throw FormatError(path + ": unsupported PNG layout");
  img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = img.rgb.data() + static_cast<size_t>(y) * img.width * 3;
  png_read_image(c.png, rows.data());
  return img;
}

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* fp = nullptr;
  ~PngWriteCloser() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (fp) std::fclose(fp);
  }
};

void write_png(const std::string& path, const Image& img) {
  PngWriteCloser c;
  c.fp = std::fopen(path.c_str(), "wb");
  if (!c.fp) throw IoError(path + ": cannot open for writing");
  c.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!c.png) throw IoError("libpng init failed");
  c.info = png_create_info_struct(c.png);
  if (!c.info) throw IoError("libpng init failed");
  if (setjmp(png_jmpbuf(c.png))) throw IoError(path + ": PNG write failed");
  png_init_io(c.png, c.fp);
  png_set_IHDR(c.png, c.info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(c.png, c.info);
  std::vector<png_bytep> rows(img.height);
  for (int y = 0; y < img.height; ++y)
    rows[y] = const_cast<png_bytep>(img.rgb.data() + static_cast<size_t>(y) * img.width * 3);
  png_write_image(c.png, rows.data());
  png_write_end(c.png, nullptr);
}

#endif  // SVAE_HAVE_PNG

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open for reading");
  char magic[2];
  in.read(magic, 2);
  if (in.gcount() != 2 || magic[0] != 'P' || magic[1] != '6')
    throw FormatError(path + ": not a binary PPM (P6) file");
  Image img;
  img.width = ppm_next_value(in, path);
  img.height = ppm_next_value(in, path);
  const int maxval = ppm_next_value(in, path);
  if (img.width < 1 || img.height < 1) throw FormatError(path + ": bad PPM dimensions");
  if (maxval != 255) throw FormatError(path + ": only 8-bit PPM (maxval 255) is supported");
  img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size()))
    throw FormatError(path + ": truncated PPM pixel data");
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  check_image(img, "write_ppm");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.rgb.data()),
            static_cast<std::streamsize>(img.rgb.size()));
  if (!out) throw IoError(path + ": write failed");
}

Image read_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError(path + ": cannot open for reading");
  unsigned char magic[8] = {};
  probe.read(reinterpret_cast<char*>(magic), 8);
  probe.close();
  if (magic[0] == 'P' && magic[1] == '6') return read_ppm(path);
  static const unsigned char png_magic[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};
  if (std::memcmp(magic, png_magic, 8) == 0) {
#ifdef SVAE_HAVE_PNG
    return read_png(path);
#else
    throw FormatError(path + ": PNG support not built in, use PPM");
#endif
  }
  throw FormatError(path + ": unrecognized image format (PPM P6 or PNG expected)");
}

void write_image(const std::string& path, const Image& img) {
  check_image(img, "write_image");
  if (has_suffix(path, ".png")) {
#ifdef SVAE_HAVE_PNG
    write_png(path, img);
    return;
#else
    throw FormatError(path + ": PNG support not built in, use .ppm");
#endif
  }
  write_ppm(path, img);
}

Tensor image_to_tensor(const Image& img) {
  check_image(img, "image_to_tensor");
  const int H = img.height, W = img.width;
  Tensor t({1, 3, H, W});
  double* d = t.data();
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const size_t p = (static_cast<size_t>(y) * W + x) * 3;
      const int64_t o = static_cast<int64_t>(y) * W + x;
      d[o] = img.rgb[p];
      d[plane + o] = img.rgb[p + 1];
      d[2 * plane + o] = img.rgb[p + 2];
    }
  return t;
}

Image tensor_to_image(const Tensor& pixels) {
  if (pixels.ndim() != 4 || pixels.dim(0) != 1 || pixels.dim(1) != 3)
    throw ShapeError("tensor_to_image: expected [1,3,H,W], got " + shape_str(pixels.shape()));
  const int H = pixels.dim(2), W = pixels.dim(3);
  Image img;
  img.width = W;
  img.height = H;
  img.rgb.resize(static_cast<size_t>(H) * W * 3);
  const double* d = pixels.data();
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int64_t o = static_cast<int64_t>(y) * W + x;
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(std::round(d[c * plane + o]), 0.0, 255.0);
        img.rgb[(static_cast<size_t>(y) * W + x) * 3 + c] = static_cast<uint8_t>(v);
      }
    }
  return img;
}

Tensor normalize_pixels(const Tensor& pixels, double pixel_max) {
  const auto& pv = pixels.values();
  std::vector<double> out(pv.size());
  const double scale = 2.0 / pixel_max;
  for (size_t i = 0; i < pv.size(); ++i) out[i] = pv[i] * scale - 1.0;
  return Tensor::from(pixels.shape(), std::move(out));
}

Tensor denormalize_pixels(const Tensor& unit, double pixel_max) {
  const auto& uv = unit.values();
  std::vector<double> out(uv.size());
  const double scale = pixel_max / 2.0;
  for (size_t i = 0; i < uv.size(); ++i)
    out[i] = (std::clamp(uv[i], -1.0, 1.0) + 1.0) * scale;
  return Tensor::from(unit.shape(), std::move(out));
}

Tensor pad_replicate(const Tensor& x, int pad_right, int pad_bottom) {
  if (x.ndim() != 4) throw ShapeError("pad_replicate: expected 4-D tensor");
  if (pad_right < 0 || pad_bottom < 0) throw ValueError("pad_replicate: negative padding");
  if (pad_right == 0 && pad_bottom == 0) return x.detached();
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int H2 = H + pad_bottom, W2 = W + pad_right;
  Tensor out({B, C, H2, W2});
  const double* src = x.data();
  double* dst = out.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const double* sp = src + (static_cast<int64_t>(b) * C + c) * H * W;
      double* dp = dst + (static_cast<int64_t>(b) * C + c) * H2 * W2;
      for (int y = 0; y < H2; ++y) {
        const double* srow = sp + static_cast<int64_t>(std::min(y, H - 1)) * W;
        double* drow = dp + static_cast<int64_t>(y) * W2;
        std::memcpy(drow, srow, sizeof(double) * W);
        for (int xw = W; xw < W2; ++xw) drow[xw] = srow[W - 1];
      }
    }
  return out;
}

Tensor crop(const Tensor& x, int height, int width) {
  if (x.ndim() != 4) throw ShapeError("crop: expected 4-D tensor");
  const int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (height > H || width > W) throw ShapeError("crop: target exceeds tensor size");
  Tensor out({B, C, height, width});
  const double* src = x.data();
  double* dst = out.data();
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < height; ++y)
        std::memcpy(dst + ((static_cast<int64_t>(b) * C + c) * height + y) * width,
                    src + ((static_cast<int64_t>(b) * C + c) * H + y) * W,
                    sizeof(double) * width);
  return out;
}

}  // namespace svae
