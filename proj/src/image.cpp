#include "icdepth/image.hpp"

namespace icdepth {

Tensor RgbImage::to_tensor() const {
  Tensor t(3, height, width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        t.at(c, y, x) = at(y, x, c);
      }
    }
  }
  return t;
}

}  // namespace icdepth
