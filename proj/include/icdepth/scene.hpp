#pragma once

#include <cstdint>

#include "icdepth/image.hpp"
#include "icdepth/tensor.hpp"

namespace icdepth {

// Synthetic scene: a far background plane with a mild depth ramp, 2-8 flat
// colored shapes (rectangles/ellipses) at near depth levels, and the exact
// rasterized occlusion boundaries of the visible regions. Every boundary
// pixel has a depth jump of at least 0.5 m across it.
struct Scene {
  RgbImage rgb;
  Tensor depth_gt;        // 1xHxW, meters
  EdgeMap gt_boundaries;  // occluder-side silhouette pixels
  std::uint64_t seed = 0;
};

Scene gen_scene(std::uint64_t seed, int size, int n_shapes);

}  // namespace icdepth
