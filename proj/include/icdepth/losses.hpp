#pragma once

#include "icdepth/image.hpp"
#include "icdepth/tensor.hpp"

namespace icdepth {

struct LossBreakdown {
  double l1 = 0.0;
  double grad = 0.0;
  double normal = 0.0;
  double total = 0.0;
};

// All losses take 1xHxW depth tensors. Masks follow the PixelMask
// convention (empty = all valid); the per-pixel sums run over valid pixels
// only, with N = valid count. Invalid pixels are replaced by their nearest
// valid neighbour before any windowed operator runs, which generalizes
// clamp-to-edge to the valid region.

double l1_loss(const Tensor& d, const Tensor& d_gt, const PixelMask& mask = {});
Tensor l1_loss_grad(const Tensor& d, const Tensor& d_gt,
                    const PixelMask& mask = {});

// Standard 3x3 Sobel kernels with clamp-to-edge padding. gh is the
// horizontal (across columns) derivative, gv the vertical one.
void sobel_gradients(const Tensor& d, Tensor& gh, Tensor& gv);

double gradient_loss(const Tensor& d, const Tensor& d_gt,
                     const PixelMask& mask = {});
Tensor gradient_loss_grad(const Tensor& d, const Tensor& d_gt,
                          const PixelMask& mask = {});

// Per-pixel un-normalized surface normals (-gh, -gv, 1), shape 3xHxW.
Tensor normals_from_depth(const Tensor& d);

double normal_loss(const Tensor& d, const Tensor& d_gt,
                   const PixelMask& mask = {});
Tensor normal_loss_grad(const Tensor& d, const Tensor& d_gt,
                        const PixelMask& mask = {});

// Unit-weight sum of the three terms.
LossBreakdown total_loss(const Tensor& d, const Tensor& d_gt,
                         const PixelMask& mask = {});

// Nearest-valid fill used by the windowed losses; exposed for tests.
// fill_source[i] is the flat index the value at i was taken from (i itself
// for valid pixels). Throws if no pixel is valid.
Tensor fill_invalid_nearest(const Tensor& d, const PixelMask& mask,
                            std::vector<int>* fill_source = nullptr);

}  // namespace icdepth
