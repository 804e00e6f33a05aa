#pragma once

#include <vector>

#include "icdepth/image.hpp"
#include "icdepth/tensor.hpp"

namespace icdepth {

// Epsilon in the instance-convolution denominator.
constexpr double kInstanceConvEpsilon = 1e-5;

// Convolution weights. The kernel tensor packs the rank-4 array as
// (out_channels, in_channels, kh*kw); bias is (out_channels, 1, 1).
struct ConvWeights {
  int out_channels = 0;
  int in_channels = 0;
  int kh = 0;
  int kw = 0;
  Tensor kernel;
  Tensor bias;

  ConvWeights() = default;
  ConvWeights(int out_c, int in_c, int kh_, int kw_)
      : out_channels(out_c), in_channels(in_c), kh(kh_), kw(kw_),
        kernel(out_c, in_c, kh_ * kw_), bias(out_c, 1, 1) {}

  double& k(int n, int c, int i, int j) { return kernel.at(n, c, i * kw + j); }
  double k(int n, int c, int i, int j) const { return kernel.at(n, c, i * kw + j); }
};

// Precomputed per-output-pixel indicator window and normalizer for one
// (segment map, kernel geometry) pair. Reusable across layers and training
// steps that share the same geometry.
struct IndicatorPlan {
  int out_h = 0;
  int out_w = 0;
  int kh = 0;
  int kw = 0;
  int stride = 1;
  int padding = 0;
  int in_h = 0;
  int in_w = 0;
  // (kh*kw, out_h, out_w), entries 0/1. Taps outside the image are 0.
  std::vector<double> mask;
  // 1 / (in_segment_count/(kw*kh) + epsilon), per output pixel.
  std::vector<double> inv_denom;

  double mask_at(int tap, int u, int v) const {
    return mask[(static_cast<size_t>(tap) * out_h + u) * out_w + v];
  }
};

struct ConvGrads {
  Tensor x;
  Tensor kernel;
  Tensor bias;
};

// Output spatial dims for given geometry; throws if non-positive or if the
// padding is neither 0 nor (k-1)/2.
void conv_output_dims(int in_h, int in_w, int kh, int kw, int stride,
                      int padding, int& out_h, int& out_w);

IndicatorPlan make_indicator_plan(const SegmentMap& seg, int kh, int kw,
                                  int stride, int padding);

// Instance convolution: per output pixel, sums only over window taps whose
// segment id matches the window center's, renormalized by the in-segment
// tap fraction. With a single-segment map and interior pixels this reduces
// to standard convolution up to the epsilon term.
Tensor instance_conv2d(const Tensor& x, const SegmentMap& seg,
                       const ConvWeights& w, int stride, int padding);
Tensor instance_conv2d(const Tensor& x, const IndicatorPlan& plan,
                       const ConvWeights& w);
// Gradients w.r.t. x, kernel, bias. The indicator and normalizer are
// treated as constants.
ConvGrads instance_conv2d_backward(const Tensor& x, const IndicatorPlan& plan,
                                   const ConvWeights& w,
                                   const Tensor& grad_out);

// Plain cross-correlation with zero padding.
Tensor standard_conv2d(const Tensor& x, const ConvWeights& w, int stride,
                       int padding);
ConvGrads standard_conv2d_backward(const Tensor& x, const ConvWeights& w,
                                   int stride, int padding,
                                   const Tensor& grad_out);

// Downsamples a segment map by 2, forwarding the id of each 2x2 cell's
// top-left pixel. Output dims are ceil(h/2) x ceil(w/2).
SegmentMap center_pool(const SegmentMap& seg);

// Level 0 is the input map; each further level is center-pooled by 2.
std::vector<SegmentMap> build_segment_pyramid(const SegmentMap& seg,
                                              int levels);

// Each value replicated into a 2x2 block.
Tensor nearest_upsample(const Tensor& x);
Tensor nearest_upsample_backward(const Tensor& grad_out, int in_h, int in_w);

}  // namespace icdepth
