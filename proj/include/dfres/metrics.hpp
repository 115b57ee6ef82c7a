#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dfres/fields.hpp"

namespace dfres {

// 10*log10(1/MSE) over all pixels and channels (RGB, peak 1.0).
// Identical images give +infinity.
double psnr(const Image& a, const Image& b);

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Mean local SSIM over all valid window positions, computed per channel and
// averaged. Throws DimensionError if the image is smaller than the window.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

struct FrameMetric {
  std::size_t frame_index = 0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<FrameMetric> frames;
  std::size_t excluded_edge_frames = 0;

  // Mean over evaluated frames; +inf if any frame is an exact match.
  double mean_psnr() const;
  double mean_ssim() const;
};

// "inf" for +infinity, otherwise fixed 6-decimal notation.
std::string format_metric(double value);

// Header `frame_index,psnr_db,ssim`, one row per frame, then `mean,<psnr>,<ssim>`.
void write_report_csv(const std::filesystem::path& path, const MetricReport& report);

}  // namespace dfres
