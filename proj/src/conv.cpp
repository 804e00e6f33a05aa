#include "icdepth/conv.hpp"

#include <algorithm>
#include <stdexcept>

namespace icdepth {

void conv_output_dims(int in_h, int in_w, int kh, int kw, int stride,
                      int padding, int& out_h, int& out_w) {
  if (kh <= 0 || kw <= 0 || stride <= 0) {
    throw std::invalid_argument("conv: bad kernel size or stride");
  }
  if (padding != 0 && (padding != (kh - 1) / 2 || padding != (kw - 1) / 2)) {
    throw std::invalid_argument("conv: padding must be 0 or (k-1)/2");
  }
  out_h = (in_h + 2 * padding - kh) / stride + 1;
  out_w = (in_w + 2 * padding - kw) / stride + 1;
  if (out_h <= 0 || out_w <= 0) {
    throw std::invalid_argument("conv: kernel larger than padded input");
  }
}

namespace {

// Valid output range [o0, o1) such that o*stride + tap - padding stays in
// [0, limit).
void tap_range(int tap, int padding, int stride, int out_dim, int limit,
               int& o0, int& o1) {
  // smallest o with o*stride + tap - padding >= 0
  int lo = padding - tap;
  o0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
  // largest o with o*stride + tap - padding <= limit-1
  int hi = limit - 1 + padding - tap;
  o1 = hi < 0 ? 0 : std::min(out_dim, hi / stride + 1);
  if (o0 > o1) o0 = o1;
}

// acc[v] += wk * mask[v] * x[v*stride + off]; stride-1 bodies are kept
// separate so they vectorize.
inline void accumulate_masked_row(double* __restrict acc,
                                  const double* __restrict mask,
                                  const double* __restrict x, double wk,
                                  int v0, int v1, int stride, int off) {
  if (stride == 1) {
    const double* xs = x + off;
    for (int v = v0; v < v1; ++v) acc[v] += wk * mask[v] * xs[v];
  } else {
    for (int v = v0; v < v1; ++v) acc[v] += wk * mask[v] * x[v * stride + off];
  }
}

inline void accumulate_row(double* __restrict acc, const double* __restrict x,
                           double wk, int v0, int v1, int stride, int off) {
  if (stride == 1) {
    const double* xs = x + off;
    for (int v = v0; v < v1; ++v) acc[v] += wk * xs[v];
  } else {
    for (int v = v0; v < v1; ++v) acc[v] += wk * x[v * stride + off];
  }
}

// Blocked reductions: 8 fixed-order partial sums, combined pairwise. The
// order is deterministic (identical inputs give identical bits) though not
// the naive serial one.
inline double dot_masked_row(const double* __restrict g,
                             const double* __restrict mask,
                             const double* __restrict x, int v0, int v1,
                             int stride, int off) {
  if (stride == 1) {
    const double* xs = x + off;
    double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    int v = v0;
    for (; v + 8 <= v1; v += 8) {
      for (int l = 0; l < 8; ++l) {
        lanes[l] += g[v + l] * mask[v + l] * xs[v + l];
      }
    }
    double s = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
               ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    for (; v < v1; ++v) s += g[v] * mask[v] * xs[v];
    return s;
  }
  double s = 0.0;
  for (int v = v0; v < v1; ++v) s += g[v] * mask[v] * x[v * stride + off];
  return s;
}

inline double dot_row(const double* __restrict g, const double* __restrict x,
                      int v0, int v1, int stride, int off) {
  if (stride == 1) {
    const double* xs = x + off;
    double lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    int v = v0;
    for (; v + 8 <= v1; v += 8) {
      for (int l = 0; l < 8; ++l) lanes[l] += g[v + l] * xs[v + l];
    }
    double s = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
               ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    for (; v < v1; ++v) s += g[v] * xs[v];
    return s;
  }
  double s = 0.0;
  for (int v = v0; v < v1; ++v) s += g[v] * x[v * stride + off];
  return s;
}

inline void scatter_masked_row(double* __restrict gx,
                               const double* __restrict mask,
                               const double* __restrict g, double wk, int v0,
                               int v1, int stride, int off) {
  if (stride == 1) {
    double* gs = gx + off;
    for (int v = v0; v < v1; ++v) gs[v] += wk * mask[v] * g[v];
  } else {
    for (int v = v0; v < v1; ++v) gx[v * stride + off] += wk * mask[v] * g[v];
  }
}

inline void scatter_row(double* __restrict gx, const double* __restrict g,
                        double wk, int v0, int v1, int stride, int off) {
  if (stride == 1) {
    double* gs = gx + off;
    for (int v = v0; v < v1; ++v) gs[v] += wk * g[v];
  } else {
    for (int v = v0; v < v1; ++v) gx[v * stride + off] += wk * g[v];
  }
}

void check_conv_args(const Tensor& x, const ConvWeights& w) {
  if (w.in_channels != x.channels) {
    throw std::invalid_argument("conv: channel mismatch");
  }
  if (w.kernel.volume() != w.out_channels * w.in_channels * w.kh * w.kw ||
      w.bias.volume() != w.out_channels) {
    throw std::invalid_argument("conv: malformed weights");
  }
}

}  // namespace

IndicatorPlan make_indicator_plan(const SegmentMap& seg, int kh, int kw,
                                  int stride, int padding) {
  if (kh % 2 == 0 || kw % 2 == 0) {
    throw std::invalid_argument("instance conv: kernel size must be odd");
  }
  IndicatorPlan plan;
  plan.kh = kh;
  plan.kw = kw;
  plan.stride = stride;
  plan.padding = padding;
  plan.in_h = seg.height;
  plan.in_w = seg.width;
  conv_output_dims(seg.height, seg.width, kh, kw, stride, padding, plan.out_h,
                   plan.out_w);

  const int taps = kh * kw;
  plan.mask.assign(static_cast<size_t>(taps) * plan.out_h * plan.out_w, 0.0);
  plan.inv_denom.assign(static_cast<size_t>(plan.out_h) * plan.out_w, 0.0);
  std::vector<int> counts(plan.inv_denom.size(), 0);

  const int ci = (kh - 1) / 2;
  const int cj = (kw - 1) / 2;
  for (int i = 0; i < kh; ++i) {
    for (int j = 0; j < kw; ++j) {
      const int tap = i * kw + j;
      int u0, u1, v0, v1;
      tap_range(i, padding, stride, plan.out_h, seg.height, u0, u1);
      tap_range(j, padding, stride, plan.out_w, seg.width, v0, v1);
      for (int u = u0; u < u1; ++u) {
        const int y = u * stride + i - padding;
        const int cy = u * stride + ci - padding;
        for (int v = v0; v < v1; ++v) {
          const int x = v * stride + j - padding;
          const int cx = v * stride + cj - padding;
          if (seg.at(y, x) == seg.at(cy, cx)) {
            plan.mask[(static_cast<size_t>(tap) * plan.out_h + u) * plan.out_w +
                      v] = 1.0;
            counts[static_cast<size_t>(u) * plan.out_w + v] += 1;
          }
        }
      }
    }
  }
  const double norm = static_cast<double>(kw) * kh;
  for (size_t p = 0; p < counts.size(); ++p) {
    plan.inv_denom[p] = 1.0 / (counts[p] / norm + kInstanceConvEpsilon);
  }
  return plan;
}

Tensor instance_conv2d(const Tensor& x, const SegmentMap& seg,
                       const ConvWeights& w, int stride, int padding) {
  if (seg.height != x.height || seg.width != x.width) {
    throw std::invalid_argument("instance conv: segment map shape mismatch");
  }
  return instance_conv2d(x, make_indicator_plan(seg, w.kh, w.kw, stride, padding), w);
}

Tensor instance_conv2d(const Tensor& x, const IndicatorPlan& plan,
                       const ConvWeights& w) {
  check_conv_args(x, w);
  if (plan.in_h != x.height || plan.in_w != x.width || plan.kh != w.kh ||
      plan.kw != w.kw) {
    throw std::invalid_argument("instance conv: plan does not match input");
  }
  const int oh = plan.out_h, ow = plan.out_w;
  const int stride = plan.stride, padding = plan.padding;
  Tensor out(w.out_channels, oh, ow);


  for (int n = 0; n < w.out_channels; ++n) {
    std::vector<double> acc(static_cast<size_t>(oh) * ow, 0.0);
    for (int c = 0; c < x.channels; ++c) {
      for (int i = 0; i < w.kh; ++i) {
        for (int j = 0; j < w.kw; ++j) {
          const double wk = w.k(n, c, i, j);
          if (wk == 0.0) continue;
          const int tap = i * w.kw + j;
          int u0, u1, v0, v1;
          tap_range(i, padding, stride, oh, x.height, u0, u1);
          tap_range(j, padding, stride, ow, x.width, v0, v1);
          for (int u = u0; u < u1; ++u) {
            const int y = u * stride + i - padding;
            const double* xrow = &x.data[(static_cast<size_t>(c) * x.height + y) * x.width];
            const double* mrow = &plan.mask[(static_cast<size_t>(tap) * oh + u) * ow];
            accumulate_masked_row(&acc[static_cast<size_t>(u) * ow], mrow,
                                  xrow, wk, v0, v1, stride, j - padding);
          }
        }
      }
    }
    const double b = w.bias.data[n];
    double* orow = &out.data[static_cast<size_t>(n) * oh * ow];
    for (size_t p = 0; p < acc.size(); ++p) {
      orow[p] = acc[p] * plan.inv_denom[p] + b;
    }
  }
  return out;
}

ConvGrads instance_conv2d_backward(const Tensor& x, const IndicatorPlan& plan,
                                   const ConvWeights& w,
                                   const Tensor& grad_out) {
  check_conv_args(x, w);
  const int oh = plan.out_h, ow = plan.out_w;
  if (grad_out.channels != w.out_channels || grad_out.height != oh ||
      grad_out.width != ow) {
    throw std::invalid_argument("instance conv backward: grad shape mismatch");
  }
  const int stride = plan.stride, padding = plan.padding;

  // Upstream gradient scaled by the per-pixel normalizer; bias sits outside
  // the division so it uses the unscaled gradient.
  Tensor gscaled(grad_out.channels, oh, ow);
  for (int n = 0; n < grad_out.channels; ++n) {
    const double* g = &grad_out.data[static_cast<size_t>(n) * oh * ow];
    double* gs = &gscaled.data[static_cast<size_t>(n) * oh * ow];
    for (size_t p = 0; p < static_cast<size_t>(oh) * ow; ++p) {
      gs[p] = g[p] * plan.inv_denom[p];
    }
  }

  ConvGrads grads;
  grads.x = Tensor(x.channels, x.height, x.width);
  grads.kernel = Tensor(w.out_channels, w.in_channels, w.kh * w.kw);
  grads.bias = Tensor(w.out_channels, 1, 1);

  for (int n = 0; n < w.out_channels; ++n) {
    double s = 0.0;
    const double* g = &grad_out.data[static_cast<size_t>(n) * oh * ow];
    for (size_t p = 0; p < static_cast<size_t>(oh) * ow; ++p) s += g[p];
    grads.bias.data[n] = s;
  }


  for (int n = 0; n < w.out_channels; ++n) {
    for (int c = 0; c < x.channels; ++c) {
      for (int i = 0; i < w.kh; ++i) {
        for (int j = 0; j < w.kw; ++j) {
          const int tap = i * w.kw + j;
          int u0, u1, v0, v1;
          tap_range(i, padding, stride, oh, x.height, u0, u1);
          tap_range(j, padding, stride, ow, x.width, v0, v1);
          double s = 0.0;
          for (int u = u0; u < u1; ++u) {
            const int y = u * stride + i - padding;
            const double* xrow = &x.data[(static_cast<size_t>(c) * x.height + y) * x.width];
            const double* mrow = &plan.mask[(static_cast<size_t>(tap) * oh + u) * ow];
            const double* gs = &gscaled.data[(static_cast<size_t>(n) * oh + u) * ow];
            s += dot_masked_row(gs, mrow, xrow, v0, v1, stride, j - padding);
          }
          grads.kernel.at(n, c, tap) = s;
        }
      }
    }
  }


  for (int c = 0; c < x.channels; ++c) {
    for (int n = 0; n < w.out_channels; ++n) {
      for (int i = 0; i < w.kh; ++i) {
        for (int j = 0; j < w.kw; ++j) {
          const double wk = w.k(n, c, i, j);
          if (wk == 0.0) continue;
          const int tap = i * w.kw + j;
          int u0, u1, v0, v1;
          tap_range(i, padding, stride, oh, x.height, u0, u1);
          tap_range(j, padding, stride, ow, x.width, v0, v1);
          for (int u = u0; u < u1; ++u) {
            const int y = u * stride + i - padding;
            double* gx = &grads.x.data[(static_cast<size_t>(c) * x.height + y) * x.width];
            const double* mrow = &plan.mask[(static_cast<size_t>(tap) * oh + u) * ow];
            const double* gs = &gscaled.data[(static_cast<size_t>(n) * oh + u) * ow];
            scatter_masked_row(gx, mrow, gs, wk, v0, v1, stride, j - padding);
          }
        }
      }
    }
  }
  return grads;
}

Tensor standard_conv2d(const Tensor& x, const ConvWeights& w, int stride,
                       int padding) {
  check_conv_args(x, w);
  int oh, ow;
  conv_output_dims(x.height, x.width, w.kh, w.kw, stride, padding, oh, ow);
  Tensor out(w.out_channels, oh, ow);


  for (int n = 0; n < w.out_channels; ++n) {
    std::vector<double> acc(static_cast<size_t>(oh) * ow, 0.0);
    for (int c = 0; c < x.channels; ++c) {
      for (int i = 0; i < w.kh; ++i) {
        for (int j = 0; j < w.kw; ++j) {
          const double wk = w.k(n, c, i, j);
          if (wk == 0.0) continue;
          int u0, u1, v0, v1;
          tap_range(i, padding, stride, oh, x.height, u0, u1);
          tap_range(j, padding, stride, ow, x.width, v0, v1);
          for (int u = u0; u < u1; ++u) {
            const int y = u * stride + i - padding;
            const double* xrow = &x.data[(static_cast<size_t>(c) * x.height + y) * x.width];
            accumulate_row(&acc[static_cast<size_t>(u) * ow], xrow, wk, v0, v1,
                           stride, j - padding);
          }
        }
      }
    }
    const double b = w.bias.data[n];
    double* orow = &out.data[static_cast<size_t>(n) * oh * ow];
    for (size_t p = 0; p < acc.size(); ++p) orow[p] = acc[p] + b;
  }
  return out;
}

ConvGrads standard_conv2d_backward(const Tensor& x, const ConvWeights& w,
                                   int stride, int padding,
                                   const Tensor& grad_out) {
  check_conv_args(x, w);
  int oh, ow;
  conv_output_dims(x.height, x.width, w.kh, w.kw, stride, padding, oh, ow);
  if (grad_out.channels != w.out_channels || grad_out.height != oh ||
      grad_out.width != ow) {
    throw std::invalid_argument("conv backward: grad shape mismatch");
  }

  ConvGrads grads;
  grads.x = Tensor(x.channels, x.height, x.width);
  grads.kernel = Tensor(w.out_channels, w.in_channels, w.kh * w.kw);
  grads.bias = Tensor(w.out_channels, 1, 1);

  for (int n = 0; n < w.out_channels; ++n) {
    double s = 0.0;
    const double* g = &grad_out.data[static_cast<size_t>(n) * oh * ow];
    for (size_t p = 0; p < static_cast<size_t>(oh) * ow; ++p) s += g[p];
    grads.bias.data[n] = s;
  }


  for (int n = 0; n < w.out_channels; ++n) {
    for (int c = 0; c < x.channels; ++c) {
      for (int i = 0; i < w.kh; ++i) {
        for (int j = 0; j < w.kw; ++j) {
          int u0, u1, v0, v1;
          tap_range(i, padding, stride, oh, x.height, u0, u1);
          tap_range(j, padding, stride, ow, x.width, v0, v1);
          double s = 0.0;
          for (int u = u0; u < u1; ++u) {
            const int y = u * stride + i - padding;
            const double* xrow = &x.data[(static_cast<size_t>(c) * x.height + y) * x.width];
            const double* g = &grad_out.data[(static_cast<size_t>(n) * oh + u) * ow];
            s += dot_row(g, xrow, v0, v1, stride, j - padding);
          }
          grads.kernel.at(n, c, i * w.kw + j) = s;
        }
      }
    }
  }


  for (int c = 0; c < x.channels; ++c) {
    for (int n = 0; n < w.out_channels; ++n) {
      for (int i = 0; i < w.kh; ++i) {
        for (int j = 0; j < w.kw; ++j) {
          const double wk = w.k(n, c, i, j);
          if (wk == 0.0) continue;
          int u0, u1, v0, v1;
          tap_range(i, padding, stride, oh, x.height, u0, u1);
          tap_range(j, padding, stride, ow, x.width, v0, v1);
          for (int u = u0; u < u1; ++u) {
            const int y = u * stride + i - padding;
            double* gx = &grads.x.data[(static_cast<size_t>(c) * x.height + y) * x.width];
            const double* g = &grad_out.data[(static_cast<size_t>(n) * oh + u) * ow];
            scatter_row(gx, g, wk, v0, v1, stride, j - padding);
          }
        }
      }
    }
  }
  return grads;
}

SegmentMap center_pool(const SegmentMap& seg) {
  SegmentMap out((seg.height + 1) / 2, (seg.width + 1) / 2, seg.segment_count);
  for (int u = 0; u < out.height; ++u) {
    for (int v = 0; v < out.width; ++v) {
      out.at(u, v) = seg.at(2 * u, 2 * v);
    }
  }
  return out;
}

std::vector<SegmentMap> build_segment_pyramid(const SegmentMap& seg,
                                              int levels) {
  if (levels < 1) throw std::invalid_argument("segment pyramid: levels < 1");
  if (seg.height < 1 || seg.width < 1) {
    throw std::invalid_argument("segment pyramid: empty segment map");
  }
  std::vector<SegmentMap> pyramid;
  pyramid.reserve(levels);
  pyramid.push_back(seg);
  for (int l = 1; l < levels; ++l) {
    pyramid.push_back(center_pool(pyramid.back()));
  }
  return pyramid;
}

Tensor nearest_upsample(const Tensor& x) {
  Tensor out(x.channels, x.height * 2, x.width * 2);
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < x.height; ++y) {
      const double* in = &x.data[(static_cast<size_t>(c) * x.height + y) * x.width];
      for (int dy = 0; dy < 2; ++dy) {
        double* o = &out.data[(static_cast<size_t>(c) * out.height + 2 * y + dy) * out.width];
        for (int v = 0; v < x.width; ++v) {
          o[2 * v] = in[v];
          o[2 * v + 1] = in[v];
        }
      }
    }
  }
  return out;
}

Tensor nearest_upsample_backward(const Tensor& grad_out, int in_h, int in_w) {
  if (grad_out.height != in_h * 2 || grad_out.width != in_w * 2) {
    throw std::invalid_argument("nearest upsample backward: shape mismatch");
  }
  Tensor grads(grad_out.channels, in_h, in_w);
  for (int c = 0; c < grad_out.channels; ++c) {
    for (int y = 0; y < in_h; ++y) {
      double* g = &grads.data[(static_cast<size_t>(c) * in_h + y) * in_w];
      for (int dy = 0; dy < 2; ++dy) {
        const double* go = &grad_out.data[(static_cast<size_t>(c) * grad_out.height + 2 * y + dy) * grad_out.width];
        for (int v = 0; v < in_w; ++v) {
          g[v] += go[2 * v] + go[2 * v + 1];
        }
      }
    }
  }
  return grads;
}

}  // namespace icdepth
