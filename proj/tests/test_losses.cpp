#include <doctest.h>

#include <cmath>

#include "icdepth/autodiff.hpp"
#include "icdepth/losses.hpp"

using namespace icdepth;

namespace {

// raster-order scalar loop, written against the definitions directly
double l1_oracle(const Tensor& d, const Tensor& gt) {
  double s = 0.0;
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      s += std::abs(gt.at(0, y, x) - d.at(0, y, x));
    }
  }
  return s / (d.height * d.width);
}

double sobel_tap_oracle(const Tensor& d, int u, int v, bool horizontal) {
  static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  double s = 0.0;
  for (int i = -1; i <= 1; ++i) {
    for (int j = -1; j <= 1; ++j) {
      const int y = std::clamp(u + i, 0, d.height - 1);
      const int x = std::clamp(v + j, 0, d.width - 1);
      const int w = horizontal ? kx[i + 1][j + 1] : ky[i + 1][j + 1];
      s += w * d.at(0, y, x);
    }
  }
  return s;
}

double gradient_loss_oracle(const Tensor& d, const Tensor& gt) {
  double s = 0.0;
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      s += std::abs(sobel_tap_oracle(d, y, x, true) -
                    sobel_tap_oracle(gt, y, x, true)) +
           std::abs(sobel_tap_oracle(d, y, x, false) -
                    sobel_tap_oracle(gt, y, x, false));
    }
  }
  return s / (d.height * d.width);
}

double normal_loss_oracle(const Tensor& d, const Tensor& gt) {
  double s = 0.0;
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      const double n[3] = {-sobel_tap_oracle(d, y, x, true),
                           -sobel_tap_oracle(d, y, x, false), 1.0};
      const double m[3] = {-sobel_tap_oracle(gt, y, x, true),
                           -sobel_tap_oracle(gt, y, x, false), 1.0};
      const double dot = n[0] * m[0] + n[1] * m[1] + n[2] * m[2];
      const double den =
          std::sqrt(n[0] * n[0] + n[1] * n[1] + 1.0) *
          std::sqrt(m[0] * m[0] + m[1] * m[1] + 1.0);
      s += 1.0 - dot / std::max(den, 1e-8);
    }
  }
  return s / (d.height * d.width);
}

// draws a GT whose offset from d stays away from the L1 kink
Tensor offset_gt(Rng& rng, const Tensor& d) {
  Tensor gt = d;
  for (double& v : gt.data) {
    v += (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 0.4);
  }
  return gt;
}

}  // namespace

TEST_CASE("l1 loss") {
  Rng rng(1);
  const Tensor d = random_uniform(rng, 1, 8, 8, 1.0, 5.0);

  SUBCASE("zero when equal") { CHECK(l1_loss(d, d) == 0.0); }

  SUBCASE("constant offset") {
    Tensor gt = d;
    for (double& v : gt.data) v += 0.5;
    CHECK(l1_loss(d, gt) == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("matches the loop oracle exactly") {
    const Tensor gt = random_uniform(rng, 1, 8, 8, 1.0, 5.0);
    CHECK(l1_loss(d, gt) == l1_oracle(d, gt));
  }

  SUBCASE("empty mask rejected") {
    PixelMask mask(64, 0);
    CHECK_THROWS_AS(l1_loss(d, d, mask), std::invalid_argument);
  }

  SUBCASE("mask restricts the sum") {
    Tensor gt = d;
    gt.data[0] += 10.0;  // only invalid pixel differs
    PixelMask mask(64, 1);
    mask[0] = 0;
    CHECK(l1_loss(d, gt, mask) == 0.0);
  }
}

TEST_CASE("sobel gradients") {
  SUBCASE("constant raster has zero gradients") {
    Tensor d(1, 5, 5, 2.5);
    Tensor gh, gv;
    sobel_gradients(d, gh, gv);
    for (double v : gh.data) CHECK(v == 0.0);
    for (double v : gv.data) CHECK(v == 0.0);
  }

  SUBCASE("unit column ramp gives 8 horizontally, 0 vertically") {
    Tensor d(1, 6, 6);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 6; ++x) d.at(0, y, x) = x;
    }
    Tensor gh, gv;
    sobel_gradients(d, gh, gv);
    for (int y = 1; y < 5; ++y) {
      for (int x = 1; x < 5; ++x) {
        CHECK(gh.at(0, y, x) == 8.0);
        CHECK(gv.at(0, y, x) == 0.0);
      }
    }
  }

  SUBCASE("transposing the input swaps the roles") {
    Rng rng(7);
    const Tensor d = random_uniform(rng, 1, 6, 6, 0.0, 1.0);
    Tensor dt(1, 6, 6);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 6; ++x) dt.at(0, y, x) = d.at(0, x, y);
    }
    Tensor gh, gv, gth, gtv;
    sobel_gradients(d, gh, gv);
    sobel_gradients(dt, gth, gtv);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 6; ++x) {
        CHECK(gth.at(0, y, x) == doctest::Approx(gv.at(0, x, y)).epsilon(1e-12));
        CHECK(gtv.at(0, y, x) == doctest::Approx(gh.at(0, x, y)).epsilon(1e-12));
      }
    }
  }

  SUBCASE("too-small input rejected") {
    Tensor d(1, 2, 5);
    Tensor gh, gv;
    CHECK_THROWS_AS(sobel_gradients(d, gh, gv), std::invalid_argument);
  }
}

TEST_CASE("gradient loss") {
  Rng rng(11);
  const Tensor d = random_uniform(rng, 1, 8, 8, 1.0, 5.0);

  SUBCASE("zero when equal") { CHECK(gradient_loss(d, d) == 0.0); }

  SUBCASE("invariant to a global constant offset") {
    Tensor gt = d;
    for (double& v : gt.data) v += 1.25;
    CHECK(gradient_loss(d, gt) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("matches the loop oracle") {
    const Tensor gt = random_uniform(rng, 1, 8, 8, 1.0, 5.0);
    CHECK(gradient_loss(d, gt) ==
          doctest::Approx(gradient_loss_oracle(d, gt)).epsilon(1e-12));
  }
}

TEST_CASE("normals from depth") {
  SUBCASE("flat plane gives (0,0,1)") {
    Tensor d(1, 5, 5, 3.0);
    const Tensor n = normals_from_depth(d);
    for (int y = 0; y < 5; ++y) {
      for (int x = 0; x < 5; ++x) {
        CHECK(n.at(0, y, x) == 0.0);
        CHECK(n.at(1, y, x) == 0.0);
        CHECK(n.at(2, y, x) == 1.0);
      }
    }
  }

  SUBCASE("column ramp gives (-8, 0, 1) at interior pixels") {
    Tensor d(1, 6, 6);
    for (int y = 0; y < 6; ++y) {
      for (int x = 0; x < 6; ++x) d.at(0, y, x) = x;
    }
    const Tensor n = normals_from_depth(d);
    for (int y = 1; y < 5; ++y) {
      for (int x = 1; x < 5; ++x) {
        CHECK(n.at(0, y, x) == -8.0);
        CHECK(n.at(1, y, x) == 0.0);
      }
    }
  }

  SUBCASE("z component is always exactly 1") {
    Rng rng(13);
    const Tensor d = random_uniform(rng, 1, 7, 7, 0.5, 6.0);
    const Tensor n = normals_from_depth(d);
    for (int y = 0; y < 7; ++y) {
      for (int x = 0; x < 7; ++x) CHECK(n.at(2, y, x) == 1.0);
    }
  }
}

TEST_CASE("normal loss") {
  Rng rng(17);
  const Tensor d = random_uniform(rng, 1, 8, 8, 1.0, 5.0);

  SUBCASE("zero when equal") { CHECK(normal_loss(d, d) == 0.0); }

  SUBCASE("stays within the cosine bounds [0, 2]") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng r(100 + seed);
      const Tensor a = random_uniform(r, 1, 6, 6, 0.5, 6.0);
      const Tensor b = random_uniform(r, 1, 6, 6, 0.5, 6.0);
      const double v = normal_loss(a, b);
      CHECK(v >= 0.0);
      CHECK(v <= 2.0);
    }
  }

  SUBCASE("matches the loop oracle within 1e-12") {
    const Tensor gt = random_uniform(rng, 1, 8, 8, 1.0, 5.0);
    CHECK(normal_loss(d, gt) ==
          doctest::Approx(normal_loss_oracle(d, gt)).epsilon(1e-12));
  }
}

TEST_CASE("total loss") {
  Rng rng(23);
  const Tensor d = random_uniform(rng, 1, 8, 8, 1.0, 5.0);

  SUBCASE("all four zeros when equal") {
    const LossBreakdown b = total_loss(d, d);
    CHECK(b.l1 == 0.0);
    CHECK(b.grad == 0.0);
    CHECK(b.normal == 0.0);
    CHECK(b.total == 0.0);
  }

  SUBCASE("components sum to the total exactly") {
    const Tensor gt = random_uniform(rng, 1, 8, 8, 1.0, 5.0);
    const LossBreakdown b = total_loss(d, gt);
    CHECK(b.total == b.l1 + b.grad + b.normal);
  }
}

TEST_CASE("loss gradients pass finite-difference checks") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(31 + seed);
    const Tensor d = random_uniform(rng, 1, 8, 8, 1.0, 5.0);
    const Tensor gt = offset_gt(rng, d);

    SUBCASE("l1") {
      const auto program = [&gt](Tape& t, const std::vector<int>& ids) {
        return t.l1_loss(ids[0], gt);
      };
      CHECK(grad_check(program, {d}, 1e-5, 1e-4).pass);
    }
    SUBCASE("gradient") {
      const auto program = [&gt](Tape& t, const std::vector<int>& ids) {
        return t.gradient_loss(ids[0], gt);
      };
      CHECK(grad_check(program, {d}, 1e-5, 1e-4).pass);
    }
    SUBCASE("normal") {
      const auto program = [&gt](Tape& t, const std::vector<int>& ids) {
        return t.normal_loss(ids[0], gt);
      };
      CHECK(grad_check(program, {d}, 1e-5, 1e-4).pass);
    }
    SUBCASE("total") {
      const auto program = [&gt](Tape& t, const std::vector<int>& ids) {
        const int l1 = t.l1_loss(ids[0], gt);
        const int lg = t.gradient_loss(ids[0], gt);
        const int ln = t.normal_loss(ids[0], gt);
        return t.add(t.add(l1, lg), ln);
      };
      CHECK(grad_check(program, {d}, 1e-5, 1e-4).pass);
    }
  }
}

TEST_CASE("masked loss gradients chain through the nearest-valid fill") {
  Rng rng(41);
  const Tensor d = random_uniform(rng, 1, 6, 6, 1.0, 5.0);
  const Tensor gt = offset_gt(rng, d);
  PixelMask mask(36, 1);
  mask[7] = 0;
  mask[8] = 0;
  mask[20] = 0;

  const auto program = [&gt, &mask](Tape& t, const std::vector<int>& ids) {
    const int lg = t.gradient_loss(ids[0], gt, mask);
    const int ln = t.normal_loss(ids[0], gt, mask);
    return t.add(lg, ln);
  };
  CHECK(grad_check(program, {d}, 1e-5, 1e-4).pass);
}

TEST_CASE("nearest-valid fill") {
  Tensor d(1, 3, 3);
  for (int i = 0; i < 9; ++i) d.data[i] = i;
  PixelMask mask(9, 1);
  mask[4] = 0;  // center invalid
  std::vector<int> src;
  const Tensor filled = fill_invalid_nearest(d, mask, &src);
  CHECK(filled.data[4] == d.data[src[4]]);
  CHECK(src[4] != 4);
  for (int i = 0; i < 9; ++i) {
    if (i != 4) {
      CHECK(filled.data[i] == d.data[i]);
      CHECK(src[i] == i);
    }
  }

  PixelMask none(9, 0);
  CHECK_THROWS_AS(fill_invalid_nearest(d, none), std::invalid_argument);
}
