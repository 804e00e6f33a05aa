#pragma once

#include "icdepth/image.hpp"

namespace icdepth {

struct SlicParams {
  int k = 64;                // requested segment count
  double compactness = 10.0; // spatial weight m
  double sigma = 1.0;        // pre-smoothing Gaussian std, pixels
  int iterations = 10;
};

// CIELAB image (D65), interleaved L,a,b per pixel.
struct LabImage {
  int height = 0;
  int width = 0;
  std::vector<double> values;  // 3 * height * width

  LabImage() = default;
  LabImage(int h, int w) : height(h), width(w), values(3ull * h * w, 0.0) {}

  double& at(int y, int x, int ch) {
    return values[3ull * (static_cast<size_t>(y) * width + x) + ch];
  }
  double at(int y, int x, int ch) const {
    return values[3ull * (static_cast<size_t>(y) * width + x) + ch];
  }
};

// sRGB -> linear RGB -> XYZ (D65) -> CIELAB.
LabImage rgb_to_lab(const RgbImage& img);

// Separable Gaussian blur, kernel radius ceil(3*sigma), clamp-to-edge.
// sigma = 0 returns the image unchanged.
RgbImage gaussian_smooth(const RgbImage& img, double sigma);

// Merges every 4-connected component smaller than (H*W/expected_segments)/4
// into its largest adjacent component, then compacts labels so each final
// label is one 4-connected region with ids in [0, segment_count).
SegmentMap enforce_connectivity(const SegmentMap& labels,
                                int expected_segments);

// SLIC super-pixels over the (smoothed) CIELAB image with the fixed-m
// distance D = sqrt(d_lab^2 + (d_xy/S)^2 * m^2).
SegmentMap slic(const RgbImage& img, const SlicParams& params);

}  // namespace icdepth
