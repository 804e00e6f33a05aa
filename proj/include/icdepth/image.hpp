#pragma once

#include <cassert>
#include <cstdint>
#include <vector>

#include "icdepth/tensor.hpp"

namespace icdepth {

// RGB image with channels in [0,1], interleaved r,g,b per pixel.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;  // 3 * height * width

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), pixels(3ull * h * w, 0.0) {}

  double& at(int y, int x, int ch) {
    return pixels[3ull * (static_cast<size_t>(y) * width + x) + ch];
  }
  double at(int y, int x, int ch) const {
    return pixels[3ull * (static_cast<size_t>(y) * width + x) + ch];
  }

  // Planar 3xHxW tensor (network input layout).
  Tensor to_tensor() const;
};

// Per-pixel segment ids. Labels are a contiguous range [0, segment_count)
// once produced by slic() / enforce_connectivity().
struct SegmentMap {
  int height = 0;
  int width = 0;
  std::vector<int> labels;  // height * width
  int segment_count = 0;

  SegmentMap() = default;
  SegmentMap(int h, int w, int count = 0)
      : height(h), width(w), labels(static_cast<size_t>(h) * w, 0),
        segment_count(count) {}

  int& at(int y, int x) { return labels[static_cast<size_t>(y) * width + x]; }
  int at(int y, int x) const {
    return labels[static_cast<size_t>(y) * width + x];
  }
};

// Binary edge mask.
struct EdgeMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> edges;  // height * width, 0 or 1

  EdgeMap() = default;
  EdgeMap(int h, int w) : height(h), width(w), edges(static_cast<size_t>(h) * w, 0) {}

  std::uint8_t& at(int y, int x) {
    return edges[static_cast<size_t>(y) * width + x];
  }
  std::uint8_t at(int y, int x) const {
    return edges[static_cast<size_t>(y) * width + x];
  }

  int count() const {
    int n = 0;
    for (auto e : edges) n += (e != 0);
    return n;
  }
};

// Depth maps are 1xHxW tensors (positive values, meters). Validity masks are
// H*W byte vectors; an empty vector means every pixel is valid.
using PixelMask = std::vector<std::uint8_t>;

inline bool mask_valid_at(const PixelMask& mask, size_t idx) {
  return mask.empty() || mask[idx] != 0;
}

}  // namespace icdepth
