#include <doctest.h>

#include <cmath>
#include <cstring>

#include "icdepth/autodiff.hpp"
#include "icdepth/conv.hpp"

using namespace icdepth;

namespace {

// Brute-force per-output-pixel reference. Independent gather-style indexing;
// accumulation runs in (c, i, j) order with the same product shapes as the
// production kernels so results are comparable bit-for-bit.
Tensor conv_reference(const Tensor& x, const SegmentMap* seg,
                      const ConvWeights& w, int stride, int padding) {
  const int oh = (x.height + 2 * padding - w.kh) / stride + 1;
  const int ow = (x.width + 2 * padding - w.kw) / stride + 1;
  Tensor out(w.out_channels, oh, ow);
  const double norm = static_cast<double>(w.kw) * w.kh;
  for (int n = 0; n < w.out_channels; ++n) {
    for (int u = 0; u < oh; ++u) {
      for (int v = 0; v < ow; ++v) {
        const int cy = u * stride + (w.kh - 1) / 2 - padding;
        const int cx = v * stride + (w.kw - 1) / 2 - padding;
        int count = 0;
        double acc = 0.0;
        for (int c = 0; c < w.in_channels; ++c) {
          for (int i = 0; i < w.kh; ++i) {
            for (int j = 0; j < w.kw; ++j) {
              const int y = u * stride + i - padding;
              const int xx = v * stride + j - padding;
              if (y < 0 || y >= x.height || xx < 0 || xx >= x.width) continue;
              if (seg) {
                if (seg->at(y, xx) != seg->at(cy, cx)) continue;
                if (c == 0) ++count;
              }
              acc += w.k(n, c, i, j) * 1.0 * x.at(c, y, xx);
            }
          }
        }
        if (seg) {
          const double inv = 1.0 / (count / norm + kInstanceConvEpsilon);
          out.at(n, u, v) = acc * inv + w.bias.data[n];
        } else {
          out.at(n, u, v) = acc + w.bias.data[n];
        }
      }
    }
  }
  return out;
}

bool bits_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data.data(), b.data.data(),
                     a.data.size() * sizeof(double)) == 0;
}

ConvWeights random_weights(Rng& rng, int out_c, int in_c, int k,
                           bool zero_bias = false) {
  ConvWeights w(out_c, in_c, k, k);
  w.kernel = random_uniform(rng, out_c, in_c, k * k, -1.0, 1.0);
  w.bias = zero_bias ? Tensor(out_c, 1, 1)
                     : random_uniform(rng, out_c, 1, 1, -0.5, 0.5);
  return w;
}

SegmentMap random_segments(Rng& rng, int h, int w, int n_segments) {
  // n_segments vertical-ish bands with a jittered boundary
  SegmentMap seg(h, w, n_segments);
  std::vector<int> offsets(h);
  for (int y = 0; y < h; ++y) offsets[y] = rng.uniform_int(3) - 1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int band = (x + offsets[y]) * n_segments / w;
      seg.at(y, x) = std::min(n_segments - 1, std::max(0, band));
    }
  }
  return seg;
}

}  // namespace

TEST_CASE("instance conv reproduces the two-pixel window arithmetic") {
  // 5x5 input, all-ones 3x3 kernel, zero bias; the window at (2,2) holds
  // feature values 0.6 (center) and 0.3 in its segment, everything else
  // belongs to another segment.
  Tensor x(1, 5, 5);
  Rng rng(42);
  for (double& v : x.data) v = rng.uniform(5.0, 9.0);  // arbitrary clutter
  x.at(0, 2, 2) = 0.6;
  x.at(0, 1, 2) = 0.3;
  SegmentMap seg(5, 5, 2);
  seg.at(2, 2) = 1;
  seg.at(1, 2) = 1;

  ConvWeights w(1, 1, 3, 3);
  for (double& v : w.kernel.data) v = 1.0;

  const Tensor out = instance_conv2d(x, seg, w, 1, 1);
  const double expected = 0.9 / (2.0 / 9.0 + kInstanceConvEpsilon);
  CHECK(out.at(0, 2, 2) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(out.at(0, 2, 2) == doctest::Approx(4.0498).epsilon(5e-4 / 4.0498));
}

TEST_CASE("single-segment map reduces to standard convolution") {
  Rng rng(1);
  const Tensor x = random_uniform(rng, 3, 8, 8, -1.0, 1.0);
  SegmentMap seg(8, 8, 1);

  SUBCASE("exact identity against the epsilon-scaled standard conv") {
    ConvWeights w = random_weights(rng, 2, 3, 3);
    const Tensor ic = instance_conv2d(x, seg, w, 1, 1);
    ConvWeights w_nobias = w;
    w_nobias.bias = Tensor(2, 1, 1);
    const Tensor sc_nb = standard_conv2d(x, w_nobias, 1, 1);
    const double inv = 1.0 / (1.0 + kInstanceConvEpsilon);
    for (int n = 0; n < 2; ++n) {
      for (int u = 1; u < 7; ++u) {
        for (int v = 1; v < 7; ++v) {
          CHECK(ic.at(n, u, v) == sc_nb.at(n, u, v) * inv + w.bias.data[n]);
        }
      }
    }
  }

  SUBCASE("relative agreement at interior pixels") {
    ConvWeights w = random_weights(rng, 2, 3, 3, /*zero_bias=*/true);
    const Tensor ic = instance_conv2d(x, seg, w, 1, 1);
    const Tensor sc = standard_conv2d(x, w, 1, 1);
    for (int n = 0; n < 2; ++n) {
      for (int u = 1; u < 7; ++u) {
        for (int v = 1; v < 7; ++v) {
          CHECK(std::abs(ic.at(n, u, v) - sc.at(n, u, v)) <=
                1e-4 * std::abs(sc.at(n, u, v)));
        }
      }
    }
  }
}

TEST_CASE("features outside the center segment never affect the output") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    const Tensor x = random_uniform(rng, 2, 10, 10, -1.0, 1.0);
    const SegmentMap seg = random_segments(rng, 10, 10, 2);
    ConvWeights w = random_weights(rng, 2, 2, 3);
    const Tensor base = instance_conv2d(x, seg, w, 1, 1);

    Tensor perturbed = x;
    for (int c = 0; c < 2; ++c) {
      for (int y = 0; y < 10; ++y) {
        for (int xx = 0; xx < 10; ++xx) {
          if (seg.at(y, xx) != 0) perturbed.at(c, y, xx) += rng.uniform(-5, 5);
        }
      }
    }
    const Tensor after = instance_conv2d(perturbed, seg, w, 1, 1);
    for (int n = 0; n < 2; ++n) {
      for (int y = 0; y < 10; ++y) {
        for (int xx = 0; xx < 10; ++xx) {
          if (seg.at(y, xx) == 0) {
            CHECK(base.at(n, y, xx) == after.at(n, y, xx));
          }
        }
      }
    }
  }
}

TEST_CASE("instance conv matches the brute-force reference bit-for-bit") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(300 + seed);
    const int h = 5 + rng.uniform_int(6);
    const int w_dim = 5 + rng.uniform_int(6);
    const Tensor x = random_uniform(rng, 1 + rng.uniform_int(3), h, w_dim,
                                    -1.0, 1.0);
    const SegmentMap seg = random_segments(rng, h, w_dim, 2 + rng.uniform_int(3));
    ConvWeights w = random_weights(rng, 1 + rng.uniform_int(3), x.channels, 3);
    const int stride = 1 + rng.uniform_int(2);
    const int padding = rng.uniform_int(2);  // 0 or same

    const Tensor got = instance_conv2d(x, seg, w, stride, padding);
    const Tensor want = conv_reference(x, &seg, w, stride, padding);
    CHECK(bits_equal(got, want));
  }
}

TEST_CASE("standard conv basics") {
  SUBCASE("1x1 identity kernel") {
    Rng rng(5);
    const Tensor x = random_uniform(rng, 1, 4, 4, -1.0, 1.0);
    ConvWeights w(1, 1, 1, 1);
    w.kernel.data[0] = 1.0;
    const Tensor out = standard_conv2d(x, w, 1, 0);
    CHECK(bits_equal(out, x));
  }

  SUBCASE("3x3 ones kernel on a unit impulse") {
    Tensor x(1, 7, 7);
    x.at(0, 3, 3) = 1.0;
    ConvWeights w(1, 1, 3, 3);
    for (double& v : w.kernel.data) v = 1.0;
    const Tensor out = standard_conv2d(x, w, 1, 1);
    for (int u = 0; u < 7; ++u) {
      for (int v = 0; v < 7; ++v) {
        const bool inside = std::abs(u - 3) <= 1 && std::abs(v - 3) <= 1;
        CHECK(out.at(0, u, v) == (inside ? 1.0 : 0.0));
      }
    }
  }

  SUBCASE("random cases match the brute-force reference bit-for-bit") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(500 + seed);
      const Tensor x = random_uniform(rng, 1 + rng.uniform_int(3),
                                      5 + rng.uniform_int(5),
                                      5 + rng.uniform_int(5), -1.0, 1.0);
      ConvWeights w = random_weights(rng, 1 + rng.uniform_int(3), x.channels, 3);
      const int stride = 1 + rng.uniform_int(2);
      const int padding = rng.uniform_int(2);
      const Tensor got = standard_conv2d(x, w, stride, padding);
      const Tensor want = conv_reference(x, nullptr, w, stride, padding);
      CHECK(bits_equal(got, want));
    }
  }
}

TEST_CASE("conv contract errors") {
  Rng rng(2);
  const Tensor x = random_uniform(rng, 2, 6, 6, -1.0, 1.0);
  SegmentMap seg(6, 6, 1);
  SUBCASE("even kernel size") {
    ConvWeights w(1, 2, 2, 2);
    CHECK_THROWS_AS(instance_conv2d(x, seg, w, 1, 0), std::invalid_argument);
  }
  SUBCASE("channel mismatch") {
    ConvWeights w = random_weights(rng, 1, 3, 3);
    CHECK_THROWS_AS(standard_conv2d(x, w, 1, 1), std::invalid_argument);
  }
  SUBCASE("segment map shape mismatch") {
    ConvWeights w = random_weights(rng, 1, 2, 3);
    SegmentMap wrong(5, 6, 1);
    CHECK_THROWS_AS(instance_conv2d(x, wrong, w, 1, 1), std::invalid_argument);
  }
}

TEST_CASE("center pooling") {
  SUBCASE("constant map stays constant") {
    SegmentMap seg(6, 6, 1);
    const SegmentMap out = center_pool(seg);
    CHECK(out.height == 3);
    CHECK(out.width == 3);
    for (int v : out.labels) CHECK(v == 0);
  }

  SUBCASE("distinct ids pick the top-left of each cell") {
    SegmentMap seg(4, 4, 16);
    for (int i = 0; i < 16; ++i) seg.labels[i] = i;
    const SegmentMap out = center_pool(seg);
    CHECK(out.at(0, 0) == seg.at(0, 0));
    CHECK(out.at(0, 1) == seg.at(0, 2));
    CHECK(out.at(1, 0) == seg.at(2, 0));
    CHECK(out.at(1, 1) == seg.at(2, 2));
  }

  SUBCASE("vertical half split is preserved") {
    SegmentMap seg(8, 8, 2);
    for (int y = 0; y < 8; ++y) {
      for (int x = 4; x < 8; ++x) seg.at(y, x) = 1;
    }
    const SegmentMap out = center_pool(seg);
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) {
        CHECK(out.at(y, x) == (x >= 2 ? 1 : 0));
      }
    }
  }

  SUBCASE("odd dims round up") {
    SegmentMap seg(5, 7, 1);
    const SegmentMap out = center_pool(seg);
    CHECK(out.height == 3);
    CHECK(out.width == 4);
  }
}

TEST_CASE("segment pyramid") {
  Rng rng(31);
  SUBCASE("one level is the input itself") {
    const SegmentMap seg = random_segments(rng, 6, 6, 3);
    const auto pyr = build_segment_pyramid(seg, 1);
    REQUIRE(pyr.size() == 1);
    CHECK(pyr[0].labels == seg.labels);
  }

  SUBCASE("dims halve per level") {
    SegmentMap seg(16, 16, 1);
    const auto pyr = build_segment_pyramid(seg, 3);
    CHECK(pyr[0].height == 16);
    CHECK(pyr[1].height == 8);
    CHECK(pyr[2].height == 4);
  }

  SUBCASE("ids at deeper levels exist at level 0") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng r(700 + seed);
      const SegmentMap seg = random_segments(r, 12, 12, 4);
      const auto pyr = build_segment_pyramid(seg, 3);
      std::vector<bool> present(seg.segment_count, false);
      for (int id : pyr[0].labels) present[id] = true;
      for (int id : pyr[2].labels) CHECK(present[id]);
    }
  }

  SUBCASE("bad level count") {
    SegmentMap seg(4, 4, 1);
    CHECK_THROWS_AS(build_segment_pyramid(seg, 0), std::invalid_argument);
  }
}

TEST_CASE("nearest upsample") {
  SUBCASE("1x1 becomes a 2x2 constant") {
    Tensor x(1, 1, 1);
    x.data[0] = 3.0;
    const Tensor out = nearest_upsample(x);
    CHECK(out.height == 2);
    CHECK(out.width == 2);
    for (double v : out.data) CHECK(v == 3.0);
  }

  SUBCASE("2x2 checkerboard becomes a block checkerboard") {
    Tensor x(1, 2, 2);
    x.at(0, 0, 0) = 1.0;
    x.at(0, 1, 1) = 1.0;
    const Tensor out = nearest_upsample(x);
    for (int y = 0; y < 4; ++y) {
      for (int v = 0; v < 4; ++v) {
        CHECK(out.at(0, y, v) == ((y / 2 == v / 2) ? 1.0 : 0.0));
      }
    }
  }

  SUBCASE("down-then-up on a constant tensor is identity") {
    Tensor x(2, 4, 4, 7.5);
    SegmentMap seg(4, 4, 1);
    const SegmentMap down = center_pool(seg);
    (void)down;
    const Tensor up = nearest_upsample(Tensor(2, 2, 2, 7.5));
    CHECK(bits_equal(up, x));
  }
}

TEST_CASE("conv gradients pass finite-difference checks") {
  SUBCASE("instance conv with a random 2-segment map") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      Rng rng(900 + seed);
      const Tensor x = random_uniform(rng, 2, 6, 6, -1.0, 1.0);
      const SegmentMap seg = random_segments(rng, 6, 6, 2);
      const Tensor kernel = random_uniform(rng, 2, 2, 9, -1.0, 1.0);
      const Tensor bias = random_uniform(rng, 2, 1, 1, -0.5, 0.5);
      auto plan = std::make_shared<const IndicatorPlan>(
          make_indicator_plan(seg, 3, 3, 1, 1));
      const auto program = [plan](Tape& t, const std::vector<int>& ids) {
        const int c = t.instance_conv(ids[0], ids[1], ids[2], plan, 2, 2, 3, 3);
        return t.sum(t.mul(c, c));
      };
      const GradCheckResult r = grad_check(program, {x, kernel, bias}, 1e-5, 1e-4);
      CHECK(r.pass);
    }
  }

  SUBCASE("standard conv, strided") {
    Rng rng(950);
    const Tensor x = random_uniform(rng, 2, 6, 6, -1.0, 1.0);
    const Tensor kernel = random_uniform(rng, 3, 2, 9, -1.0, 1.0);
    const Tensor bias = random_uniform(rng, 3, 1, 1, -0.5, 0.5);
    const auto program = [](Tape& t, const std::vector<int>& ids) {
      const int c = t.standard_conv(ids[0], ids[1], ids[2], 3, 2, 3, 3, 2, 1);
      return t.sum(t.mul(c, c));
    };
    const GradCheckResult r = grad_check(program, {x, kernel, bias}, 1e-5, 1e-4);
    CHECK(r.pass);
  }

  SUBCASE("nearest upsample") {
    Rng rng(960);
    const Tensor x = random_uniform(rng, 2, 3, 3, -1.0, 1.0);
    const auto program = [](Tape& t, const std::vector<int>& ids) {
      const int u = t.nearest_upsample(ids[0]);
      return t.sum(t.mul(u, u));
    };
    CHECK(grad_check(program, {x}, 1e-5, 1e-4).pass);
  }
}

TEST_CASE("instance conv gradients: degeneracy and zero upstream") {
  Rng rng(980);
  const Tensor x = random_uniform(rng, 2, 6, 6, -1.0, 1.0);
  SegmentMap seg(6, 6, 1);
  ConvWeights w = random_weights(rng, 2, 2, 3);
  const IndicatorPlan plan = make_indicator_plan(seg, 3, 3, 1, 1);

  SUBCASE("constant map gradients match standard conv gradients") {
    Tensor g = random_uniform(rng, 2, 6, 6, -1.0, 1.0);
    const ConvGrads gi = instance_conv2d_backward(x, plan, w, g);
    const ConvGrads gs = standard_conv2d_backward(x, w, 1, 1, g);
    // interior-only comparison: border pixels have shrunken normalizers
    for (int c = 0; c < 2; ++c) {
      for (int u = 2; u < 4; ++u) {
        for (int v = 2; v < 4; ++v) {
          const double a = gi.x.at(c, u, v) * (1.0 + kInstanceConvEpsilon);
          const double b = gs.x.at(c, u, v);
          CHECK(a == doctest::Approx(b).epsilon(1e-10));
        }
      }
    }
    CHECK(gi.bias.data[0] == gs.bias.data[0]);
  }

  SUBCASE("zero upstream gradient zeroes all parameter gradients") {
    const Tensor g(2, 6, 6);
    const ConvGrads gi = instance_conv2d_backward(x, plan, w, g);
    for (double v : gi.kernel.data) CHECK(v == 0.0);
    for (double v : gi.bias.data) CHECK(v == 0.0);
    for (double v : gi.x.data) CHECK(v == 0.0);
  }
}
