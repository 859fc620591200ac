#pragma once

#include <string>
#include <vector>

#include "svae/image.hpp"

namespace svae {

// Rate/quality measurement: RGB PSNR, bits per pixel over the full container,
// and Bjontegaard delta rate between RD curves.

// 10*log10(max_val^2 / MSE) over all pixels and channels; +infinity for
// identical images.
double psnr(const Image& a, const Image& b, double max_val = 255.0);
double psnr_from_mse(double mse, double max_val = 255.0);

double bpp(uint64_t stream_bytes, int width, int height);

struct RdPoint {
  std::string label;
  double bpp = 0.0;
  double psnr_db = 0.0;
};

struct RdCurve {
  std::string label;
  std::vector<RdPoint> points;  // kept sorted by bpp ascending

  // Sorts by bpp; rejects duplicate rates, warns (stderr) when PSNR is not
  // non-decreasing in bpp.
  void sort_and_check();
};

// Classical cubic-fit BD-rate: fit log10(rate) as a cubic in PSNR per curve,
// average the integral difference over the common PSNR interval, and return
// 100*(10^delta - 1). Negative means `test` saves rate over `anchor`.
// Requires >= 4 points per curve and overlapping PSNR ranges.
double bd_rate(const RdCurve& anchor, const RdCurve& test);

// CSV with header "label,bpp,psnr_db", 6 decimal places.
void export_rd_csv(const std::string& path, const std::vector<RdCurve>& curves);
std::string rd_csv_string(const std::vector<RdCurve>& curves);
std::vector<RdCurve> parse_rd_csv(const std::string& text);

}  // namespace svae
