#include "icdepth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace icdepth {

namespace {

void hsv_to_rgb(double h, double s, double v, double& r, double& g,
                double& b) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = std::min(5, static_cast<int>(hh));
  const double f = hh - sector;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

struct ShapeSpec {
  bool ellipse = false;
  int cy = 0, cx = 0;    // center
  int ry = 0, rx = 0;    // half extents
  double depth = 0.0;
  double color[3] = {0, 0, 0};

  bool contains(int y, int x) const {
    if (ellipse) {
      const double dy = (y - cy) / static_cast<double>(ry);
      const double dx = (x - cx) / static_cast<double>(rx);
      return dy * dy + dx * dx <= 1.0;
    }
    return std::abs(y - cy) <= ry && std::abs(x - cx) <= rx;
  }
};

}  // namespace

Scene gen_scene(std::uint64_t seed, int size, int n_shapes) {
  if (size < 32) throw std::invalid_argument("gen_scene: size must be >= 32");
  if (n_shapes < 2 || n_shapes > 8) {
    throw std::invalid_argument("gen_scene: n_shapes must be in [2, 8]");
  }
  Rng rng(seed);
  const int h = size, w = size;

  Scene scene;
  scene.seed = seed;
  scene.rgb = RgbImage(h, w);
  scene.depth_gt = Tensor(1, h, w);
  scene.gt_boundaries = EdgeMap(h, w);

  // background: mild ramp inside (4, 6) m, muted color
  const double z0 = rng.uniform(4.5, 5.5);
  const double ramp_y = rng.uniform(-0.4, 0.4);
  const double ramp_x = rng.uniform(-0.4, 0.4);
  const double bg_hue = rng.uniform();
  double bg_r, bg_g, bg_b;
  hsv_to_rgb(bg_hue, rng.uniform(0.1, 0.3), rng.uniform(0.25, 0.45), bg_r,
             bg_g, bg_b);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      scene.depth_gt.at(0, y, x) = z0 + ramp_y * (y / (h - 1.0) - 0.5) +
                                   ramp_x * (x / (w - 1.0) - 0.5);
      scene.rgb.at(y, x, 0) = bg_r;
      scene.rgb.at(y, x, 1) = bg_g;
      scene.rgb.at(y, x, 2) = bg_b;
    }
  }

  // Shapes sit on 0.5 m spaced depth levels; shapes sharing a level may not
  // touch, so every visible boundary keeps a jump of at least 0.5 m.
  std::vector<ShapeSpec> shapes(n_shapes);
  std::vector<std::vector<std::uint8_t>> level_occupancy;
  for (int i = 0; i < n_shapes; ++i) {
    ShapeSpec& sh = shapes[i];
    sh.depth = 1.0 + 0.5 * (i % 5);
    const int level = i % 5;
    while (static_cast<int>(level_occupancy.size()) <= level) {
      level_occupancy.emplace_back(static_cast<size_t>(h) * w, 0);
    }
    hsv_to_rgb(bg_hue + 0.61803398875 * (i + 1), rng.uniform(0.55, 0.85),
               rng.uniform(0.65, 0.95), sh.color[0], sh.color[1], sh.color[2]);

    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      sh.ellipse = rng.uniform() < 0.5;
      sh.ry = 3 + rng.uniform_int(size / 5);
      sh.rx = 3 + rng.uniform_int(size / 5);
      sh.cy = sh.ry + 1 + rng.uniform_int(std::max(1, h - 2 * (sh.ry + 1)));
      sh.cx = sh.rx + 1 + rng.uniform_int(std::max(1, w - 2 * (sh.rx + 1)));
      placed = true;
      for (int y = std::max(0, sh.cy - sh.ry - 1);
           placed && y <= std::min(h - 1, sh.cy + sh.ry + 1); ++y) {
        for (int x = std::max(0, sh.cx - sh.rx - 1);
             x <= std::min(w - 1, sh.cx + sh.rx + 1); ++x) {
          if (level_occupancy[level][static_cast<size_t>(y) * w + x]) {
            placed = false;
            break;
          }
        }
      }
    }
    if (!placed) {
      sh.ry = 0;  // could not fit without touching a same-depth shape
      continue;
    }
    for (int y = std::max(0, sh.cy - sh.ry); y <= std::min(h - 1, sh.cy + sh.ry); ++y) {
      for (int x = std::max(0, sh.cx - sh.rx); x <= std::min(w - 1, sh.cx + sh.rx); ++x) {
        if (sh.contains(y, x)) {
          level_occupancy[level][static_cast<size_t>(y) * w + x] = 1;
        }
      }
    }
  }

  // paint farthest first so nearer shapes occlude
  std::vector<int> order;
  for (int i = 0; i < n_shapes; ++i) {
    if (shapes[i].ry > 0) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return shapes[a].depth > shapes[b].depth;
  });

  std::vector<int> region(static_cast<size_t>(h) * w, 0);
  for (int idx : order) {
    const ShapeSpec& sh = shapes[idx];
    for (int y = std::max(0, sh.cy - sh.ry); y <= std::min(h - 1, sh.cy + sh.ry); ++y) {
      for (int x = std::max(0, sh.cx - sh.rx); x <= std::min(w - 1, sh.cx + sh.rx); ++x) {
        if (!sh.contains(y, x)) continue;
        region[static_cast<size_t>(y) * w + x] = idx + 1;
        scene.depth_gt.at(0, y, x) = sh.depth;
        scene.rgb.at(y, x, 0) = sh.color[0];
        scene.rgb.at(y, x, 1) = sh.color[1];
        scene.rgb.at(y, x, 2) = sh.color[2];
      }
    }
  }

  // occlusion boundaries: for each region change, mark the nearer pixel
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t p = static_cast<size_t>(y) * w + x;
      if (x + 1 < w && region[p] != region[p + 1]) {
        if (scene.depth_gt.data[p] < scene.depth_gt.data[p + 1]) {
          scene.gt_boundaries.edges[p] = 1;
        } else {
          scene.gt_boundaries.edges[p + 1] = 1;
        }
      }
      if (y + 1 < h && region[p] != region[p + w]) {
        if (scene.depth_gt.data[p] < scene.depth_gt.data[p + w]) {
          scene.gt_boundaries.edges[p] = 1;
        } else {
          scene.gt_boundaries.edges[p + w] = 1;
        }
      }
    }
  }
  return scene;
}

}  // namespace icdepth
