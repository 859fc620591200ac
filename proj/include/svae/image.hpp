#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "svae/tensor.hpp"

namespace svae {

// 8-bit interleaved RGB. PNG (8-bit RGB) and binary PPM (P6) are supported;
// the format is picked by magic bytes on read and by extension on write.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // height * width * 3

  bool operator==(const Image&) const = default;
};

Image read_image(const std::string& path);
void write_image(const std::string& path, const Image& image);

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& image);

// Planar [1,3,H,W] doubles in [0, 255].
Tensor image_to_tensor(const Image& image);
Image tensor_to_image(const Tensor& pixels);  // clamps and rounds half away

// Affine pixel mapping between [0, pixel_max] and [-1, 1].
Tensor normalize_pixels(const Tensor& pixels, double pixel_max = 255.0);
// Clamps to [-1, 1] first: this is where the decoder output meets pixels.
Tensor denormalize_pixels(const Tensor& unit, double pixel_max = 255.0);

// Edge-replication padding on the right/bottom of a [B,C,H,W] tensor.
Tensor pad_replicate(const Tensor& x, int pad_right, int pad_bottom);
Tensor crop(const Tensor& x, int height, int width);

}  // namespace svae
