#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "icdepth/image.hpp"
#include "icdepth/losses.hpp"
#include "icdepth/metrics.hpp"
#include "icdepth/tensor.hpp"

namespace icdepth {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- PPM / PGM rasters ---

// Binary PPM (P6), maxval 255, channels scaled to [0,1].
RgbImage read_ppm(const std::string& path);
void write_ppm(const std::string& path, const RgbImage& img);

// Segment maps as 16-bit binary PGM (P5, maxval 65535, big-endian samples).
SegmentMap read_segment_map_pgm(const std::string& path);
void write_segment_map_pgm(const std::string& path, const SegmentMap& seg);

// Edge maps as 8-bit binary PGM; nonzero samples are edges.
EdgeMap read_edge_map_pgm(const std::string& path);
void write_edge_map_pgm(const std::string& path, const EdgeMap& edges);

// 16-bit PGM of arbitrary small non-negative integer labels (plane masks).
std::vector<PixelMask> read_plane_masks_pgm(const std::string& path);

// 8-bit preview with per-image min-max normalization; the range used is
// reported so a sidecar can record it.
void write_preview_pgm(const std::string& path, const Tensor& raster,
                       double& min_out, double& max_out);

// --- FloatRaster (FR1) ---
// magic "FR1\n", ASCII header "H W\n", then H*W little-endian float32,
// row-major.
Tensor read_float_raster(const std::string& path);
void write_float_raster(const std::string& path, const Tensor& raster);

// --- run configuration ---

struct RunConfig {
  int k = 64;
  double sigma = 1.0;
  double compactness = 10.0;
  int iterations = 10;
  double lr = 1e-3;
  int steps = 3000;
  std::string head = "ic";  // sc | sc_mask | ic
  std::uint64_t seed = 1;
  double canny_low = 0.05;
  double canny_high = 0.1;
  double dde_plane = 3.0;
  double fx = 580.0;
  double fy = 580.0;
  double cx = -1.0;  // negative: use W/2
  double cy = -1.0;  // negative: use H/2
  int size = 64;
  int shapes = 4;
};

// key = value lines; '#' comments and blank lines ignored; unknown keys are
// rejected.
RunConfig parse_run_config_text(const std::string& text);
RunConfig read_run_config(const std::string& path);

// --- training artifacts ---

void write_checkpoint(const std::string& path,
                      const std::vector<Tensor>& params);
std::vector<Tensor> read_checkpoint(const std::string& path);

void write_loss_csv(const std::string& path,
                    const std::vector<LossBreakdown>& curve);

// --- metrics reports ---

void write_metrics_csv(const std::string& path, const MetricsReport& report);
MetricsReport read_metrics_csv(const std::string& path);
std::string render_metrics_table(const MetricsReport& report);

// small text-file helpers
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace icdepth
