#include "svae/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "svae/errors.hpp"

namespace svae {

double psnr_from_mse(double mse, double max_val) {
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

double psnr(const Image& a, const Image& b, double max_val) {
  if (a.width != b.width || a.height != b.height)
    throw MismatchError("psnr: image dimensions differ (" + std::to_string(a.width) + "x" +
                        std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                        std::to_string(b.height) + ")");
  double acc = 0.0;
  for (size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = static_cast<double>(a.rgb[i]) - static_cast<double>(b.rgb[i]);
    acc += d * d;
  }
  return psnr_from_mse(acc / static_cast<double>(a.rgb.size()), max_val);
}

double bpp(uint64_t stream_bytes, int width, int height) {
  if (width < 1 || height < 1) throw ValueError("bpp: dimensions must be positive");
  return 8.0 * static_cast<double>(stream_bytes) /
         (static_cast<double>(width) * static_cast<double>(height));
}

void RdCurve::sort_and_check() {
  std::sort(points.begin(), points.end(),
            [](const RdPoint& a, const RdPoint& b) { return a.bpp < b.bpp; });
  for (size_t i = 1; i < points.size(); ++i) {
    if (points[i].bpp <= points[i - 1].bpp)
      throw ValueError("RD curve: bpp values must be strictly increasing");
    if (points[i].psnr_db < points[i - 1].psnr_db)
      std::cerr << "warning: RD curve '" << label << "' has PSNR decreasing with rate at "
                << points[i].bpp << " bpp\n";
  }
}

namespace {

// Cubic least squares of log10(rate) against centered PSNR: t = (p - shift)/scale.
std::array<double, 4> fit_log_rate(const RdCurve& curve, double shift, double scale) {
  double A[4][4] = {};
  double rhs[4] = {};
  for (const RdPoint& pt : curve.points) {
    if (pt.bpp <= 0.0) throw ValueError("bd_rate: non-positive bpp");
    const double t = (pt.psnr_db - shift) / scale;
    const double y = std::log10(pt.bpp);
    double basis[4] = {1.0, t, t * t, t * t * t};
    for (int i = 0; i < 4; ++i) {
      rhs[i] += basis[i] * y;
      for (int j = 0; j < 4; ++j) A[i][j] += basis[i] * basis[j];
    }
  }
  // 4x4 Gaussian elimination with partial pivoting.
  int perm[4] = {0, 1, 2, 3};
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(A[perm[r]][col]) > std::abs(A[perm[piv]][col])) piv = r;
    std::swap(perm[col], perm[piv]);
    const double diag = A[perm[col]][col];
    if (diag == 0.0) throw ValueError("bd_rate: degenerate curve fit");
    for (int r = col + 1; r < 4; ++r) {
      const double f = A[perm[r]][col] / diag;
      if (f == 0.0) continue;
      for (int c = col; c < 4; ++c) A[perm[r]][c] -= f * A[perm[col]][c];
      rhs[perm[r]] -= f * rhs[perm[col]];
    }
  }
  std::array<double, 4> coeff{};
  for (int col = 3; col >= 0; --col) {
    double v = rhs[perm[col]];
    for (int c = col + 1; c < 4; ++c) v -= A[perm[col]][c] * coeff[c];
    coeff[col] = v / A[perm[col]][col];
  }
  return coeff;
}

double integral(const std::array<double, 4>& c, double t) {
  return t * (c[0] + t * (c[1] / 2.0 + t * (c[2] / 3.0 + t * c[3] / 4.0)));
}

}  // namespace

double bd_rate(const RdCurve& anchor, const RdCurve& test) {
  if (anchor.points.size() < 4 || test.points.size() < 4)
    throw ValueError("bd_rate: need at least 4 RD points per curve");
  auto psnr_range = [](const RdCurve& c) {
    double lo = c.points[0].psnr_db, hi = c.points[0].psnr_db;
    for (const RdPoint& p : c.points) {
      lo = std::min(lo, p.psnr_db);
      hi = std::max(hi, p.psnr_db);
    }
    return std::pair{lo, hi};
  };
  const auto [alo, ahi] = psnr_range(anchor);
  const auto [tlo, thi] = psnr_range(test);
  const double lo = std::max(alo, tlo);
  const double hi = std::min(ahi, thi);
  if (!(hi > lo)) throw ValueError("bd_rate: PSNR ranges do not overlap");

  // Shared centering keeps both fits on the same well-conditioned basis, and
  // the common interval becomes t in [-1, 1].
  const double shift = 0.5 * (lo + hi);
  const double scale = 0.5 * (hi - lo);
  const auto fa = fit_log_rate(anchor, shift, scale);
  const auto ft = fit_log_rate(test, shift, scale);
  const double mean_diff =
      ((integral(ft, 1.0) - integral(ft, -1.0)) - (integral(fa, 1.0) - integral(fa, -1.0))) /
      2.0;
  return 100.0 * (std::pow(10.0, mean_diff) - 1.0);
}

std::string rd_csv_string(const std::vector<RdCurve>& curves) {
  std::ostringstream os;
  os << "label,bpp,psnr_db\n";
  os.setf(std::ios::fixed);
  os.precision(6);
  for (const RdCurve& c : curves)
    for (const RdPoint& p : c.points)
      os << (p.label.empty() ? c.label : p.label) << "," << p.bpp << "," << p.psnr_db << "\n";
  return os.str();
}

void export_rd_csv(const std::string& path, const std::vector<RdCurve>& curves) {
  std::ofstream out(path);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << rd_csv_string(curves);
  if (!out) throw IoError(path + ": write failed");
}

std::vector<RdCurve> parse_rd_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "label,bpp,psnr_db")
    throw FormatError("RD CSV: missing or malformed header");
  std::vector<RdCurve> curves;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t c1 = line.find(',');
    const size_t c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw FormatError("RD CSV: malformed row: " + line);
    RdPoint p;
    p.label = line.substr(0, c1);
    p.bpp = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    p.psnr_db = std::stod(line.substr(c2 + 1));
    auto it = std::find_if(curves.begin(), curves.end(),
                           [&](const RdCurve& c) { return c.label == p.label; });
    if (it == curves.end()) {
      curves.push_back(RdCurve{p.label, {}});
      it = curves.end() - 1;
    }
    it->points.push_back(p);
  }
  return curves;
}

}  // namespace svae
