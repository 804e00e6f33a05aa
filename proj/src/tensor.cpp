#include "icdepth/tensor.hpp"

#include <cmath>

namespace icdepth {

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor random_uniform(Rng& rng, int c, int h, int w, double lo, double hi) {
  Tensor t(c, h, w);
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace icdepth
