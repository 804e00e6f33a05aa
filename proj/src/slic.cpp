#include "icdepth/slic.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace icdepth {

namespace {

inline int clampi(int v, int lo, int hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  constexpr double delta3 = delta * delta * delta;
  return t > delta3 ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace

LabImage rgb_to_lab(const RgbImage& img) {
  // D65 reference white
  constexpr double xn = 0.95047, yn = 1.0, zn = 1.08883;
  LabImage lab(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double r = srgb_to_linear(img.at(y, x, 0));
      const double g = srgb_to_linear(img.at(y, x, 1));
      const double b = srgb_to_linear(img.at(y, x, 2));
      const double X = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
      const double Y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
      const double Z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
      const double fx = lab_f(X / xn);
      const double fy = lab_f(Y / yn);
      const double fz = lab_f(Z / zn);
      lab.at(y, x, 0) = 116.0 * fy - 16.0;
      lab.at(y, x, 1) = 500.0 * (fx - fy);
      lab.at(y, x, 2) = 200.0 * (fy - fz);
    }
  }
  return lab;
}

RgbImage gaussian_smooth(const RgbImage& img, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("gaussian_smooth: sigma < 0");
  if (sigma == 0.0) return img;

  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& v : kernel) v /= norm;

  const int h = img.height, w = img.width;
  RgbImage tmp(h, w), out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          s += kernel[i + radius] * img.at(y, clampi(x + i, 0, w - 1), c);
        }
        tmp.at(y, x, c) = s;
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          s += kernel[i + radius] * tmp.at(clampi(y + i, 0, h - 1), x, c);
        }
        out.at(y, x, c) = s;
      }
    }
  }
  return out;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  void unite_into(int child, int root) { parent[find(child)] = find(root); }
};

// 4-connected components of a label map. Returns per-pixel component id and
// fills comp pixel lists (in raster discovery order).
int flood_components(const SegmentMap& labels, std::vector<int>& comp,
                     std::vector<std::vector<int>>& pixels) {
  const int h = labels.height, w = labels.width;
  comp.assign(static_cast<size_t>(h) * w, -1);
  pixels.clear();
  static const int dy[4] = {-1, 0, 0, 1};
  static const int dx[4] = {0, -1, 1, 0};
  std::vector<int> stack;
  int next = 0;
  for (int p0 = 0; p0 < h * w; ++p0) {
    if (comp[p0] >= 0) continue;
    const int lbl = labels.labels[p0];
    pixels.emplace_back();
    comp[p0] = next;
    stack.assign(1, p0);
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      pixels[next].push_back(p);
      const int py = p / w, px = p % w;
      for (int k = 0; k < 4; ++k) {
        const int y = py + dy[k], x = px + dx[k];
        if (y < 0 || y >= h || x < 0 || x >= w) continue;
        const int q = y * w + x;
        if (comp[q] < 0 && labels.labels[q] == lbl) {
          comp[q] = next;
          stack.push_back(q);
        }
      }
    }
    ++next;
  }
  return next;
}

}  // namespace

SegmentMap enforce_connectivity(const SegmentMap& labels,
                                int expected_segments) {
  const int h = labels.height, w = labels.width;
  if (expected_segments < 1) {
    throw std::invalid_argument("enforce_connectivity: expected_segments < 1");
  }
  const int min_size =
      std::max(1, (h * w / expected_segments) / 4);

  SegmentMap work = labels;
  std::vector<int> comp;
  std::vector<std::vector<int>> pixels;
  const int n_comp = flood_components(work, comp, pixels);

  UnionFind uf(n_comp);
  std::vector<long long> size(n_comp);
  std::vector<int> anchor(n_comp);
  for (int c = 0; c < n_comp; ++c) {
    size[c] = static_cast<long long>(pixels[c].size());
    anchor[c] = pixels[c].front();
  }

  // Smallest component first; (size, anchor) keyed min-heap with lazy
  // invalidation so merged entries are skipped.
  using Entry = std::tuple<long long, int, int>;  // size, anchor, comp root
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;
  for (int c = 0; c < n_comp; ++c) {
    if (size[c] < min_size) heap.emplace(size[c], anchor[c], c);
  }

  static const int dy[4] = {-1, 0, 0, 1};
  static const int dx[4] = {0, -1, 1, 0};
  while (!heap.empty()) {
    auto [sz, an, c] = heap.top();
    heap.pop();
    const int root = uf.find(c);
    if (root != c || size[root] != sz || anchor[root] != an) continue;
    if (size[root] >= min_size) continue;

    // largest adjacent component, ties to the smallest anchor
    int best = -1;
    for (int p : pixels[root]) {
      const int py = p / w, px = p % w;
      for (int k = 0; k < 4; ++k) {
        const int y = py + dy[k], x = px + dx[k];
        if (y < 0 || y >= h || x < 0 || x >= w) continue;
        const int q = uf.find(comp[static_cast<size_t>(y) * w + x]);
        if (q == root) continue;
        if (best < 0 || size[q] > size[best] ||
            (size[q] == size[best] && anchor[q] < anchor[best])) {
          best = q;
        }
      }
    }
    if (best < 0) continue;  // nothing adjacent (single component image)

    const int target_label = work.labels[pixels[best].front()];
    for (int p : pixels[root]) work.labels[p] = target_label;
    uf.unite_into(root, best);
    size[best] += size[root];
    anchor[best] = std::min(anchor[best], anchor[root]);
    if (pixels[best].size() < pixels[root].size()) {
      pixels[best].swap(pixels[root]);
    }
    pixels[best].insert(pixels[best].end(), pixels[root].begin(),
                        pixels[root].end());
    pixels[root].clear();
    pixels[root].shrink_to_fit();
    if (size[best] < min_size) heap.emplace(size[best], anchor[best], best);
  }

  // Compact: final ids in raster discovery order of the merged label map.
  SegmentMap out(h, w);
  std::vector<int> final_comp;
  std::vector<std::vector<int>> final_pixels;
  out.segment_count = flood_components(work, final_comp, final_pixels);
  out.labels = std::move(final_comp);
  return out;
}

SegmentMap slic(const RgbImage& img, const SlicParams& params) {
  const int h = img.height, w = img.width;
  if (params.k < 1 || params.iterations < 1 || params.sigma < 0.0) {
    throw std::invalid_argument("slic: bad parameters");
  }
  if (params.k > h * w) {
    throw std::invalid_argument("slic: more segments requested than pixels");
  }

  const LabImage lab = rgb_to_lab(gaussian_smooth(img, params.sigma));
  const double spacing = std::sqrt(static_cast<double>(h) * w / params.k);

  // Seed grid with roughly k cells, aspect-matched to the image.
  const int cols = std::max(
      1, static_cast<int>(std::ceil(std::sqrt(params.k * static_cast<double>(w) / h))));
  const int rows = std::max(1, (params.k + cols - 1) / cols);

  struct Cluster {
    double l, a, b, y, x;
  };
  std::vector<Cluster> clusters;
  clusters.reserve(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      int sy = clampi(static_cast<int>((r + 0.5) * h / rows), 0, h - 1);
      int sx = clampi(static_cast<int>((c + 0.5) * w / cols), 0, w - 1);
      // move to the lowest-gradient pixel in the 3x3 neighbourhood
      double best_grad = -1.0;
      int by = sy, bx = sx;
      for (int oy = -1; oy <= 1; ++oy) {
        for (int ox = -1; ox <= 1; ++ox) {
          const int y = sy + oy, x = sx + ox;
          if (y < 0 || y >= h || x < 0 || x >= w) continue;
          const int yp = clampi(y + 1, 0, h - 1), ym = clampi(y - 1, 0, h - 1);
          const int xp = clampi(x + 1, 0, w - 1), xm = clampi(x - 1, 0, w - 1);
          double grad = 0.0;
          for (int ch = 0; ch < 3; ++ch) {
            const double gx = lab.at(y, xp, ch) - lab.at(y, xm, ch);
            const double gy = lab.at(yp, x, ch) - lab.at(ym, x, ch);
            grad += gx * gx + gy * gy;
          }
          if (best_grad < 0.0 || grad < best_grad) {
            best_grad = grad;
            by = y;
            bx = x;
          }
        }
      }
      clusters.push_back({lab.at(by, bx, 0), lab.at(by, bx, 1),
                          lab.at(by, bx, 2), static_cast<double>(by),
                          static_cast<double>(bx)});
    }
  }

  const double m2_over_s2 =
      (params.compactness * params.compactness) / (spacing * spacing);
  std::vector<int> assignment(static_cast<size_t>(h) * w, -1);
  std::vector<double> best_d2(static_cast<size_t>(h) * w, 0.0);

  for (int iter = 0; iter < params.iterations; ++iter) {
    std::fill(assignment.begin(), assignment.end(), -1);
    // clusters visit pixels within +-spacing of their center; lower index
    // wins on distance ties (strict improvement required to replace)
    for (size_t ci = 0; ci < clusters.size(); ++ci) {
      const Cluster& cl = clusters[ci];
      const int y0 = clampi(static_cast<int>(std::floor(cl.y - spacing)), 0, h - 1);
      const int y1 = clampi(static_cast<int>(std::ceil(cl.y + spacing)), 0, h - 1);
      const int x0 = clampi(static_cast<int>(std::floor(cl.x - spacing)), 0, w - 1);
      const int x1 = clampi(static_cast<int>(std::ceil(cl.x + spacing)), 0, w - 1);
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const size_t p = static_cast<size_t>(y) * w + x;
          const double dl = lab.at(y, x, 0) - cl.l;
          const double da = lab.at(y, x, 1) - cl.a;
          const double db = lab.at(y, x, 2) - cl.b;
          const double dyd = y - cl.y;
          const double dxd = x - cl.x;
          const double d2 = dl * dl + da * da + db * db +
                            (dyd * dyd + dxd * dxd) * m2_over_s2;
          if (assignment[p] < 0 || d2 < best_d2[p]) {
            assignment[p] = static_cast<int>(ci);
            best_d2[p] = d2;
          }
        }
      }
    }
    // pixels missed by every window go to the spatially nearest center
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const size_t p = static_cast<size_t>(y) * w + x;
        if (assignment[p] >= 0) continue;
        double best = 0.0;
        for (size_t ci = 0; ci < clusters.size(); ++ci) {
          const double dyd = y - clusters[ci].y;
          const double dxd = x - clusters[ci].x;
          const double d2 = dyd * dyd + dxd * dxd;
          if (assignment[p] < 0 || d2 < best) {
            assignment[p] = static_cast<int>(ci);
            best = d2;
          }
        }
      }
    }

    // update centers to cluster means
    std::vector<double> acc(clusters.size() * 5, 0.0);
    std::vector<long long> n(clusters.size(), 0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const size_t p = static_cast<size_t>(y) * w + x;
        const int ci = assignment[p];
        double* a = &acc[static_cast<size_t>(ci) * 5];
        a[0] += lab.at(y, x, 0);
        a[1] += lab.at(y, x, 1);
        a[2] += lab.at(y, x, 2);
        a[3] += y;
        a[4] += x;
        n[ci] += 1;
      }
    }
    for (size_t ci = 0; ci < clusters.size(); ++ci) {
      if (n[ci] == 0) continue;  // empty cluster keeps its center
      const double* a = &acc[ci * 5];
      const double inv = 1.0 / n[ci];
      clusters[ci] = {a[0] * inv, a[1] * inv, a[2] * inv, a[3] * inv,
                      a[4] * inv};
    }
  }

  SegmentMap raw(h, w, static_cast<int>(clusters.size()));
  raw.labels = assignment;
  return enforce_connectivity(raw, params.k);
}

}  // namespace icdepth
