#pragma once

#include <optional>
#include <string>
#include <vector>

#include "icdepth/image.hpp"
#include "icdepth/tensor.hpp"

namespace icdepth {

struct CameraIntrinsics {
  double fx = 580.0;
  double fy = 580.0;
  double cx = 0.0;
  double cy = 0.0;

  static CameraIntrinsics defaults_for(int height, int width) {
    return {580.0, 580.0, width / 2.0, height / 2.0};
  }
};

// Canny defaults for depth rasters; thresholds apply to gradient magnitude
// normalized by its own maximum.
constexpr double kDepthCannySigma = 1.0;
constexpr double kDepthCannyLow = 0.05;
constexpr double kDepthCannyHigh = 0.1;

// Chamfer truncation distance for DBE, pixels.
constexpr double kDbeTruncation = 10.0;

// Reference plane depth for DDE, meters.
constexpr double kDdePlaneDepth = 3.0;

struct MetricsReport {
  std::optional<double> absrel, rmse, log10, delta1, delta2, delta3;
  std::optional<double> dbe_acc, dbe_comp;
  std::optional<double> dde0, dde_minus, dde_plus;
  std::optional<double> pe_plan, pe_orie;

  static const std::vector<std::string>& field_names();
  std::vector<std::optional<double>> fields() const;
};

// absrel, rmse, log10 and the delta thresholds over valid pixels.
MetricsReport standard_metrics(const Tensor& d, const Tensor& d_gt,
                               const PixelMask& mask = {});

// Canny edge detection on a real raster: Gaussian smooth, Sobel
// magnitude/orientation, 4-direction non-maximum suppression, double
// threshold on max-normalized magnitude, hysteresis from strong pixels.
EdgeMap canny(const Tensor& raster, double low, double high, double sigma);

// Exact Euclidean distance to the nearest edge pixel (two-pass lower
// envelope transform). Throws when the map has no edge pixels.
Tensor distance_transform(const EdgeMap& edges);

struct ChamferResult {
  std::optional<double> acc;   // mean truncated distance, pred -> gt
  std::optional<double> comp;  // mean truncated distance, gt -> pred
};

// Distances beyond theta are rejected; each mean runs over the matched
// (distance <= theta) edge pixels only.
ChamferResult truncated_chamfer(const EdgeMap& pred, const EdgeMap& gt,
                                double theta = kDbeTruncation);

struct DdeResult {
  double eps0 = 0.0;       // % of pixels on the correct side of the plane
  double eps_minus = 0.0;  // % predicted behind while GT in front
  double eps_plus = 0.0;   // % predicted in front while GT behind
};

DdeResult dde(const Tensor& d, const Tensor& d_gt,
              double plane_depth = kDdePlaneDepth, const PixelMask& mask = {});

struct PlanarityResult {
  double plan_cm = 0.0;
  double orie_deg = 0.0;
};

// Least-squares plane fits of the back-projected predicted and ground-truth
// points per plane mask; reports mean 3D shift (cm) and normal angle
// (degrees), averaged over planes.
PlanarityResult planarity_error(const Tensor& d, const Tensor& d_gt,
                                const std::vector<PixelMask>& plane_masks,
                                const CameraIntrinsics& intrinsics);

}  // namespace icdepth
