#pragma once

#include <cassert>
#include <cstdint>
#include <random>
#include <vector>

namespace icdepth {

// Dense rank-3 tensor (channels x height x width), row-major with width
// fastest. All numerics in the project run in double precision.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w),
        data(static_cast<size_t>(c) * h * w, fill) {}

  static Tensor scalar(double v) {
    Tensor t(1, 1, 1);
    t.data[0] = v;
    return t;
  }

  int volume() const { return channels * height * width; }

  bool same_shape(const Tensor& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  double& at(int c, int y, int x) {
    assert(c >= 0 && c < channels && y >= 0 && y < height && x >= 0 && x < width);
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    assert(c >= 0 && c < channels && y >= 0 && y < height && x >= 0 && x < width);
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }

  // Value of a 1x1x1 tensor.
  double scalar_value() const {
    assert(volume() == 1);
    return data[0];
  }

  bool all_finite() const;
};

// Deterministic random source. std::mt19937_64 with hand-rolled draws so the
// stream does not depend on library distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    assert(n > 0);
    return static_cast<int>(gen_() % static_cast<std::uint64_t>(n));
  }

 private:
  std::mt19937_64 gen_;
};

Tensor random_uniform(Rng& rng, int c, int h, int w, double lo, double hi);

}  // namespace icdepth
