#include "icdepth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "icdepth/losses.hpp"

namespace icdepth {

const std::vector<std::string>& MetricsReport::field_names() {
  static const std::vector<std::string> names = {
      "absrel", "rmse",     "log10",    "delta1",  "delta2",
      "delta3", "dbe_acc",  "dbe_comp", "dde0",    "dde_minus",
      "dde_plus", "pe_plan", "pe_orie"};
  return names;
}

std::vector<std::optional<double>> MetricsReport::fields() const {
  return {absrel, rmse,     log10,    delta1,  delta2,   delta3,  dbe_acc,
          dbe_comp, dde0,   dde_minus, dde_plus, pe_plan, pe_orie};
}

MetricsReport standard_metrics(const Tensor& d, const Tensor& d_gt,
                               const PixelMask& mask) {
  if (d.channels != 1 || !d.same_shape(d_gt)) {
    throw std::invalid_argument("standard_metrics: shape mismatch");
  }
  long long n = 0;
  double s_absrel = 0.0, s_sq = 0.0, s_log = 0.0;
  long long n_d1 = 0, n_d2 = 0, n_d3 = 0;
  for (size_t i = 0; i < d.data.size(); ++i) {
    if (!mask_valid_at(mask, i)) continue;
    const double p = d.data[i], g = d_gt.data[i];
    if (p <= 0.0 || g <= 0.0) {
      throw std::invalid_argument("standard_metrics: non-positive depth");
    }
    const double err = p - g;
    s_absrel += std::abs(err) / g;
    s_sq += err * err;
    s_log += std::abs(std::log10(p) - std::log10(g));
    const double ratio = std::max(p / g, g / p);
    n_d1 += ratio < 1.25;
    n_d2 += ratio < 1.25 * 1.25;
    n_d3 += ratio < 1.25 * 1.25 * 1.25;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("standard_metrics: empty mask");
  MetricsReport r;
  r.absrel = s_absrel / n;
  r.rmse = std::sqrt(s_sq / n);
  r.log10 = s_log / n;
  r.delta1 = static_cast<double>(n_d1) / n;
  r.delta2 = static_cast<double>(n_d2) / n;
  r.delta3 = static_cast<double>(n_d3) / n;
  return r;
}

namespace {

inline int clampi(int v, int lo, int hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

Tensor gaussian_smooth_raster(const Tensor& in, double sigma) {
  if (sigma <= 0.0) return in;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& v : kernel) v /= norm;

  const int h = in.height, w = in.width;
  Tensor tmp(1, h, w), out(1, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        s += kernel[i + radius] * in.at(0, y, clampi(x + i, 0, w - 1));
      }
      tmp.at(0, y, x) = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        s += kernel[i + radius] * tmp.at(0, clampi(y + i, 0, h - 1), x);
      }
      out.at(0, y, x) = s;
    }
  }
  return out;
}

}  // namespace

EdgeMap canny(const Tensor& raster, double low, double high, double sigma) {
  if (raster.channels != 1 || raster.height < 3 || raster.width < 3) {
    throw std::invalid_argument("canny: input must be 1xHxW with H,W >= 3");
  }
  if (!(low > 0.0) || high < low) {
    throw std::invalid_argument("canny: need high >= low > 0");
  }
  const int h = raster.height, w = raster.width;
  const Tensor smooth = gaussian_smooth_raster(raster, sigma);
  Tensor gh, gv;
  sobel_gradients(smooth, gh, gv);

  Tensor mag(1, h, w);
  double max_mag = 0.0;
  for (size_t i = 0; i < mag.data.size(); ++i) {
    mag.data[i] = std::hypot(gh.data[i], gv.data[i]);
    max_mag = std::max(max_mag, mag.data[i]);
  }
  EdgeMap out(h, w);
  if (max_mag == 0.0) return out;
  for (double& v : mag.data) v /= max_mag;

  // non-maximum suppression along the quantized gradient direction; the
  // first neighbour is compared strictly so plateaus thin to one pixel
  auto mag_at = [&](int y, int x) -> double {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return mag.at(0, y, x);
  };
  std::vector<std::uint8_t> nms(static_cast<size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double m = mag.at(0, y, x);
      if (m == 0.0) continue;
      double angle = std::atan2(gv.at(0, y, x), gh.at(0, y, x));
      if (angle < 0.0) angle += M_PI;
      if (angle >= M_PI) angle -= M_PI;
      int dy1, dx1, dy2, dx2;
      if (angle < M_PI / 8.0 || angle >= 7.0 * M_PI / 8.0) {
        dy1 = 0; dx1 = -1; dy2 = 0; dx2 = 1;          // horizontal gradient
      } else if (angle < 3.0 * M_PI / 8.0) {
        dy1 = -1; dx1 = -1; dy2 = 1; dx2 = 1;         // 45 degrees
      } else if (angle < 5.0 * M_PI / 8.0) {
        dy1 = -1; dx1 = 0; dy2 = 1; dx2 = 0;          // vertical gradient
      } else {
        dy1 = -1; dx1 = 1; dy2 = 1; dx2 = -1;         // 135 degrees
      }
      if (m > mag_at(y + dy1, x + dx1) && m >= mag_at(y + dy2, x + dx2)) {
        nms[static_cast<size_t>(y) * w + x] = 1;
      }
    }
  }

  // double threshold + hysteresis (8-connected flood from strong pixels)
  std::vector<int> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t p = static_cast<size_t>(y) * w + x;
      if (nms[p] && mag.data[p] >= high && !out.edges[p]) {
        out.edges[p] = 1;
        stack.push_back(static_cast<int>(p));
        while (!stack.empty()) {
          const int q = stack.back();
          stack.pop_back();
          const int qy = q / w, qx = q % w;
          for (int oy = -1; oy <= 1; ++oy) {
            for (int ox = -1; ox <= 1; ++ox) {
              const int ny = qy + oy, nx = qx + ox;
              if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
              const size_t r = static_cast<size_t>(ny) * w + nx;
              if (!out.edges[r] && nms[r] && mag.data[r] >= low) {
                out.edges[r] = 1;
                stack.push_back(static_cast<int>(r));
              }
            }
          }
        }
      }
    }
  }
  return out;
}

namespace {

// 1D squared-distance transform (lower envelope of parabolas).
void dt_1d(const std::vector<double>& f, std::vector<double>& d,
           std::vector<int>& v, std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  int k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  for (int q = 1; q < n; ++q) {
    double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]));
    while (s <= z[k]) {
      --k;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = dq * dq + f[v[k]];
  }
}

}  // namespace

Tensor distance_transform(const EdgeMap& edges) {
  const int h = edges.height, w = edges.width;
  if (edges.count() == 0) {
    throw std::invalid_argument("distance_transform: no edge pixels");
  }
  constexpr double kFar = 1e18;
  Tensor sq(1, h, w);
  for (size_t i = 0; i < sq.data.size(); ++i) {
    sq.data[i] = edges.edges[i] ? 0.0 : kFar;
  }

  // columns, then rows
  {
    std::vector<double> f(h), d(h), z(h + 1);
    std::vector<int> v(h);
    for (int x = 0; x < w; ++x) {
      for (int y = 0; y < h; ++y) f[y] = sq.at(0, y, x);
      dt_1d(f, d, v, z);
      for (int y = 0; y < h; ++y) sq.at(0, y, x) = d[y];
    }
  }
  {
    std::vector<double> f(w), d(w), z(w + 1);
    std::vector<int> v(w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) f[x] = sq.at(0, y, x);
      dt_1d(f, d, v, z);
      for (int x = 0; x < w; ++x) sq.at(0, y, x) = d[x];
    }
  }
  for (double& s : sq.data) s = std::sqrt(s);
  return sq;
}

namespace {

std::optional<double> directed_chamfer(const EdgeMap& from, const EdgeMap& to,
                                       double theta) {
  if (from.count() == 0 || to.count() == 0) return std::nullopt;
  const Tensor dist = distance_transform(to);
  double sum = 0.0;
  long long matched = 0;
  for (size_t i = 0; i < from.edges.size(); ++i) {
    if (!from.edges[i]) continue;
    const double d = dist.data[i];
    if (d <= theta) {
      sum += d;
      ++matched;
    }
  }
  if (matched == 0) return std::nullopt;
  return sum / matched;
}

}  // namespace

ChamferResult truncated_chamfer(const EdgeMap& pred, const EdgeMap& gt,
                                double theta) {
  if (pred.height != gt.height || pred.width != gt.width) {
    throw std::invalid_argument("truncated_chamfer: shape mismatch");
  }
  ChamferResult r;
  r.acc = directed_chamfer(pred, gt, theta);
  r.comp = directed_chamfer(gt, pred, theta);
  return r;
}

DdeResult dde(const Tensor& d, const Tensor& d_gt, double plane_depth,
              const PixelMask& mask) {
  if (d.channels != 1 || !d.same_shape(d_gt)) {
    throw std::invalid_argument("dde: shape mismatch");
  }
  long long n = 0, agree = 0, minus = 0, plus = 0;
  for (size_t i = 0; i < d.data.size(); ++i) {
    if (!mask_valid_at(mask, i)) continue;
    const bool pred_front = d.data[i] < plane_depth;
    const bool gt_front = d_gt.data[i] < plane_depth;
    if (pred_front == gt_front) {
      ++agree;
    } else if (pred_front) {
      ++plus;   // predicted in front, GT behind
    } else {
      ++minus;  // predicted behind, GT in front
    }
    ++n;
  }
  if (n == 0) throw std::invalid_argument("dde: empty mask");
  DdeResult r;
  r.eps0 = 100.0 * agree / n;
  r.eps_minus = 100.0 * minus / n;
  r.eps_plus = 100.0 * plus / n;
  return r;
}

namespace {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

// Jacobi eigen decomposition of a symmetric 3x3 matrix. Returns eigenvalues
// ascending with matching unit eigenvectors as rows.
void symmetric_eigen3(double a[3][3], double eigenvalues[3],
                      double eigenvectors[3][3]) {
  double v[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
    if (off < 1e-15) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(a[p][q]) < 1e-18) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < 3; ++i) {
          const double aip = a[i][p], aiq = a[i][q];
          a[i][p] = c * aip - s * aiq;
          a[i][q] = s * aip + c * aiq;
        }
        for (int i = 0; i < 3; ++i) {
          const double api = a[p][i], aqi = a[q][i];
          a[p][i] = c * api - s * aqi;
          a[q][i] = s * api + c * aqi;
        }
        for (int i = 0; i < 3; ++i) {
          const double vip = v[i][p], viq = v[i][q];
          v[i][p] = c * vip - s * viq;
          v[i][q] = s * vip + c * viq;
        }
      }
    }
  }
  int order[3] = {0, 1, 2};
  std::sort(order, order + 3, [&](int i, int j) { return a[i][i] < a[j][j]; });
  for (int r = 0; r < 3; ++r) {
    eigenvalues[r] = a[order[r]][order[r]];
    for (int i = 0; i < 3; ++i) eigenvectors[r][i] = v[i][order[r]];
  }
}

struct FittedPlane {
  Vec3 normal;     // unit
  Vec3 centroid;
};

FittedPlane fit_plane(const std::vector<Vec3>& points) {
  if (points.size() < 3) {
    throw std::invalid_argument("planarity: plane mask has fewer than 3 points");
  }
  Vec3 c;
  for (const Vec3& p : points) {
    c.x += p.x;
    c.y += p.y;
    c.z += p.z;
  }
  const double inv = 1.0 / points.size();
  c.x *= inv;
  c.y *= inv;
  c.z *= inv;

  double m[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  for (const Vec3& p : points) {
    const double dx = p.x - c.x, dy = p.y - c.y, dz = p.z - c.z;
    m[0][0] += dx * dx;
    m[0][1] += dx * dy;
    m[0][2] += dx * dz;
    m[1][1] += dy * dy;
    m[1][2] += dy * dz;
    m[2][2] += dz * dz;
  }
  m[1][0] = m[0][1];
  m[2][0] = m[0][2];
  m[2][1] = m[1][2];

  double evals[3], evecs[3][3];
  symmetric_eigen3(m, evals, evecs);
  if (evals[1] <= 1e-12 * std::max(evals[2], 1e-300)) {
    throw std::invalid_argument("planarity: degenerate (collinear) plane mask");
  }
  FittedPlane plane;
  plane.normal = {evecs[0][0], evecs[0][1], evecs[0][2]};
  plane.centroid = c;
  return plane;
}

}  // namespace

PlanarityResult planarity_error(const Tensor& d, const Tensor& d_gt,
                                const std::vector<PixelMask>& plane_masks,
                                const CameraIntrinsics& intrinsics) {
  if (d.channels != 1 || !d.same_shape(d_gt)) {
    throw std::invalid_argument("planarity: shape mismatch");
  }
  if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0)) {
    throw std::invalid_argument("planarity: invalid intrinsics");
  }
  if (plane_masks.empty()) {
    throw std::invalid_argument("planarity: no plane masks");
  }
  const int h = d.height, w = d.width;
  auto backproject = [&](const Tensor& depth, const PixelMask& mask) {
    std::vector<Vec3> pts;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const size_t i = static_cast<size_t>(y) * w + x;
        if (!mask_valid_at(mask, i)) continue;
        const double z = depth.data[i];
        pts.push_back({(x - intrinsics.cx) / intrinsics.fx * z,
                       (y - intrinsics.cy) / intrinsics.fy * z, z});
      }
    }
    return pts;
  };

  double sum_plan = 0.0, sum_orie = 0.0;
  for (const PixelMask& mask : plane_masks) {
    if (mask.size() != d.data.size()) {
      throw std::invalid_argument("planarity: mask size mismatch");
    }
    const std::vector<Vec3> pred_pts = backproject(d, mask);
    const std::vector<Vec3> gt_pts = backproject(d_gt, mask);
    const FittedPlane pred = fit_plane(pred_pts);
    const FittedPlane gt = fit_plane(gt_pts);

    double shift = 0.0;
    for (const Vec3& p : pred_pts) {
      shift += std::abs((p.x - gt.centroid.x) * gt.normal.x +
                        (p.y - gt.centroid.y) * gt.normal.y +
                        (p.z - gt.centroid.z) * gt.normal.z);
    }
    sum_plan += 100.0 * shift / pred_pts.size();

    const double dot = std::abs(pred.normal.x * gt.normal.x +
                                pred.normal.y * gt.normal.y +
                                pred.normal.z * gt.normal.z);
    sum_orie += std::acos(std::min(1.0, dot)) * 180.0 / M_PI;
  }
  PlanarityResult r;
  r.plan_cm = sum_plan / plane_masks.size();
  r.orie_deg = sum_orie / plane_masks.size();
  return r;
}

}  // namespace icdepth
