#include "icdepth/losses.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace icdepth {

namespace {

constexpr double kNormalDenomFloor = 1e-8;

void check_depth_pair(const Tensor& d, const Tensor& d_gt,
                      const PixelMask& mask) {
  if (d.channels != 1 || d_gt.channels != 1 || !d.same_shape(d_gt)) {
    throw std::invalid_argument("loss: depth maps must be matching 1xHxW");
  }
  if (!mask.empty() && mask.size() != d.data.size()) {
    throw std::invalid_argument("loss: mask size mismatch");
  }
}

int valid_count(const Tensor& d, const PixelMask& mask) {
  if (mask.empty()) return d.volume();
  int n = 0;
  for (auto m : mask) n += (m != 0);
  if (n == 0) throw std::invalid_argument("loss: empty validity mask");
  return n;
}

bool mask_is_full(const PixelMask& mask) {
  if (mask.empty()) return true;
  return std::all_of(mask.begin(), mask.end(),
                     [](std::uint8_t m) { return m != 0; });
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline int clampi(int v, int lo, int hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

// Adjoint of the clamp-to-edge Sobel pair: scatters gradients w.r.t. (gh,gv)
// back onto the raster.
void sobel_adjoint(const Tensor& ggh, const Tensor& ggv, Tensor& gd) {
  const int h = ggh.height, w = ggh.width;
  static const int wy[3] = {1, 2, 1};
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      const double a = ggh.at(0, u, v);
      const double b = ggv.at(0, u, v);
      if (a == 0.0 && b == 0.0) continue;
      for (int t = -1; t <= 1; ++t) {
        if (a != 0.0) {
          const int y = clampi(u + t, 0, h - 1);
          gd.at(0, y, clampi(v + 1, 0, w - 1)) += a * wy[t + 1];
          gd.at(0, y, clampi(v - 1, 0, w - 1)) -= a * wy[t + 1];
        }
        if (b != 0.0) {
          const int x = clampi(v + t, 0, w - 1);
          gd.at(0, clampi(u + 1, 0, h - 1), x) += b * wy[t + 1];
          gd.at(0, clampi(u - 1, 0, h - 1), x) -= b * wy[t + 1];
        }
      }
    }
  }
}

// Folds the nearest-valid fill into the raster gradient.
Tensor chain_through_fill(const Tensor& g_filled,
                          const std::vector<int>& fill_source) {
  if (fill_source.empty()) return g_filled;
  Tensor g(1, g_filled.height, g_filled.width);
  for (size_t i = 0; i < g_filled.data.size(); ++i) {
    g.data[fill_source[i]] += g_filled.data[i];
  }
  return g;
}

}  // namespace

Tensor fill_invalid_nearest(const Tensor& d, const PixelMask& mask,
                            std::vector<int>* fill_source) {
  const int h = d.height, w = d.width;
  Tensor out = d;
  std::vector<int> src(d.data.size());
  for (size_t i = 0; i < src.size(); ++i) src[i] = static_cast<int>(i);

  if (!mask_is_full(mask)) {
    valid_count(d, mask);  // throws when nothing is valid
    std::deque<int> queue;
    std::vector<std::uint8_t> seen(d.data.size(), 0);
    for (size_t i = 0; i < mask.size(); ++i) {
      if (mask[i] != 0) {
        seen[i] = 1;
        queue.push_back(static_cast<int>(i));
      }
    }
    static const int dy[4] = {-1, 0, 0, 1};
    static const int dx[4] = {0, -1, 1, 0};
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      const int py = p / w, px = p % w;
      for (int k = 0; k < 4; ++k) {
        const int y = py + dy[k], x = px + dx[k];
        if (y < 0 || y >= h || x < 0 || x >= w) continue;
        const int q = y * w + x;
        if (seen[q]) continue;
        seen[q] = 1;
        src[q] = src[p];
        out.data[q] = out.data[src[p]];
        queue.push_back(q);
      }
    }
  }
  if (fill_source) *fill_source = std::move(src);
  return out;
}

double l1_loss(const Tensor& d, const Tensor& d_gt, const PixelMask& mask) {
  check_depth_pair(d, d_gt, mask);
  const int n = valid_count(d, mask);
  double s = 0.0;
  for (size_t i = 0; i < d.data.size(); ++i) {
    if (mask_valid_at(mask, i)) s += std::abs(d_gt.data[i] - d.data[i]);
  }
  return s / n;
}

Tensor l1_loss_grad(const Tensor& d, const Tensor& d_gt,
                    const PixelMask& mask) {
  check_depth_pair(d, d_gt, mask);
  const int n = valid_count(d, mask);
  Tensor g(1, d.height, d.width);
  for (size_t i = 0; i < d.data.size(); ++i) {
    if (mask_valid_at(mask, i)) g.data[i] = sign(d.data[i] - d_gt.data[i]) / n;
  }
  return g;
}

void sobel_gradients(const Tensor& d, Tensor& gh, Tensor& gv) {
  if (d.channels != 1 || d.height < 3 || d.width < 3) {
    throw std::invalid_argument("sobel: input must be 1xHxW with H,W >= 3");
  }
  const int h = d.height, w = d.width;
  gh = Tensor(1, h, w);
  gv = Tensor(1, h, w);
  static const int wt[3] = {1, 2, 1};
  for (int u = 0; u < h; ++u) {
    const int um = clampi(u - 1, 0, h - 1);
    const int up = clampi(u + 1, 0, h - 1);
    for (int v = 0; v < w; ++v) {
      const int vm = clampi(v - 1, 0, w - 1);
      const int vp = clampi(v + 1, 0, w - 1);
      double sh = 0.0, sv = 0.0;
      const int ys[3] = {um, u, up};
      const int xs[3] = {vm, v, vp};
      for (int t = 0; t < 3; ++t) {
        sh += wt[t] * (d.at(0, ys[t], vp) - d.at(0, ys[t], vm));
        sv += wt[t] * (d.at(0, up, xs[t]) - d.at(0, um, xs[t]));
      }
      gh.at(0, u, v) = sh;
      gv.at(0, u, v) = sv;
    }
  }
}

double gradient_loss(const Tensor& d, const Tensor& d_gt,
                     const PixelMask& mask) {
  check_depth_pair(d, d_gt, mask);
  const int n = valid_count(d, mask);
  const Tensor df = fill_invalid_nearest(d, mask);
  const Tensor gf = fill_invalid_nearest(d_gt, mask);
  Tensor dh, dv, gh, gv;
  sobel_gradients(df, dh, dv);
  sobel_gradients(gf, gh, gv);
  double s = 0.0;
  for (size_t i = 0; i < d.data.size(); ++i) {
    if (mask_valid_at(mask, i)) {
      s += std::abs(dh.data[i] - gh.data[i]) + std::abs(dv.data[i] - gv.data[i]);
    }
  }
  return s / n;
}

Tensor gradient_loss_grad(const Tensor& d, const Tensor& d_gt,
                          const PixelMask& mask) {
  check_depth_pair(d, d_gt, mask);
  const int n = valid_count(d, mask);
  std::vector<int> src;
  const Tensor df = fill_invalid_nearest(d, mask, &src);
  const Tensor gf = fill_invalid_nearest(d_gt, mask);
  Tensor dh, dv, gh, gv;
  sobel_gradients(df, dh, dv);
  sobel_gradients(gf, gh, gv);

  Tensor sh(1, d.height, d.width), sv(1, d.height, d.width);
  for (size_t i = 0; i < d.data.size(); ++i) {
    if (mask_valid_at(mask, i)) {
      sh.data[i] = sign(dh.data[i] - gh.data[i]) / n;
      sv.data[i] = sign(dv.data[i] - gv.data[i]) / n;
    }
  }
  Tensor g_filled(1, d.height, d.width);
  sobel_adjoint(sh, sv, g_filled);
  return mask_is_full(mask) ? g_filled : chain_through_fill(g_filled, src);
}

Tensor normals_from_depth(const Tensor& d) {
  Tensor gh, gv;
  sobel_gradients(d, gh, gv);
  Tensor n(3, d.height, d.width);
  for (int u = 0; u < d.height; ++u) {
    for (int v = 0; v < d.width; ++v) {
      n.at(0, u, v) = -gh.at(0, u, v);
      n.at(1, u, v) = -gv.at(0, u, v);
      n.at(2, u, v) = 1.0;
    }
  }
  return n;
}

double normal_loss(const Tensor& d, const Tensor& d_gt,
                   const PixelMask& mask) {
  check_depth_pair(d, d_gt, mask);
  const int count = valid_count(d, mask);
  const Tensor nd = normals_from_depth(fill_invalid_nearest(d, mask));
  const Tensor ng = normals_from_depth(fill_invalid_nearest(d_gt, mask));
  const size_t plane = static_cast<size_t>(d.height) * d.width;
  double s = 0.0;
  for (size_t i = 0; i < plane; ++i) {
    if (!mask_valid_at(mask, i)) continue;
    const double ax = nd.data[i], ay = nd.data[plane + i];
    const double bx = ng.data[i], by = ng.data[plane + i];
    const double na =
        std::max(std::sqrt(ax * ax + ay * ay + 1.0), kNormalDenomFloor);
    const double nb =
        std::max(std::sqrt(bx * bx + by * by + 1.0), kNormalDenomFloor);
    // 1 - <n,m>/(|n||m|) written as |n/|n| - m/|m||^2 / 2; identical
    // normals contribute exactly zero
    const double ux = ax / na - bx / nb;
    const double uy = ay / na - by / nb;
    const double uz = 1.0 / na - 1.0 / nb;
    s += 0.5 * (ux * ux + uy * uy + uz * uz);
  }
  return s / count;
}

Tensor normal_loss_grad(const Tensor& d, const Tensor& d_gt,
                        const PixelMask& mask) {
  check_depth_pair(d, d_gt, mask);
  const int count = valid_count(d, mask);
  std::vector<int> src;
  const Tensor df = fill_invalid_nearest(d, mask, &src);
  const Tensor nd = normals_from_depth(df);
  const Tensor ng = normals_from_depth(fill_invalid_nearest(d_gt, mask));
  const size_t plane = static_cast<size_t>(d.height) * d.width;

  // d(term)/d(gh) and d(term)/d(gv) per pixel, then the Sobel adjoint.
  Tensor tgh(1, d.height, d.width), tgv(1, d.height, d.width);
  for (size_t i = 0; i < plane; ++i) {
    if (!mask_valid_at(mask, i)) continue;
    const double ax = nd.data[i], ay = nd.data[plane + i], az = 1.0;
    const double bx = ng.data[i], by = ng.data[plane + i], bz = 1.0;
    const double na = std::sqrt(ax * ax + ay * ay + az * az);
    const double nb = std::sqrt(bx * bx + by * by + bz * bz);
    const double den = std::max(na * nb, kNormalDenomFloor);
    const double dot = ax * bx + ay * by + az * bz;
    // d(term)/d(n) = -(b/den - dot * n / (na^2 * den))
    const double inv_den = 1.0 / den;
    const double k = dot / (na * na);
    const double dnx = -(bx - k * ax) * inv_den;
    const double dny = -(by - k * ay) * inv_den;
    // n = (-gh, -gv, 1)
    tgh.data[i] = -dnx / count;
    tgv.data[i] = -dny / count;
  }
  Tensor g_filled(1, d.height, d.width);
  sobel_adjoint(tgh, tgv, g_filled);
  return mask_is_full(mask) ? g_filled : chain_through_fill(g_filled, src);
}

LossBreakdown total_loss(const Tensor& d, const Tensor& d_gt,
                         const PixelMask& mask) {
  LossBreakdown out;
  out.l1 = l1_loss(d, d_gt, mask);
  out.grad = gradient_loss(d, d_gt, mask);
  out.normal = normal_loss(d, d_gt, mask);
  out.total = out.l1 + out.grad + out.normal;
  return out;
}

}  // namespace icdepth
