#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "icdepth/autodiff.hpp"
#include "icdepth/conv.hpp"
#include "icdepth/losses.hpp"
#include "icdepth/metrics.hpp"
#include "icdepth/scene.hpp"
#include "icdepth/slic.hpp"

namespace icdepth {

// Raised when training encounters a non-finite loss.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class HeadKind { kStandard, kStandardWithMask, kInstance };

struct NetConfig {
  HeadKind head = HeadKind::kInstance;
  std::vector<int> encoder_channels = {8, 16};  // two stride-2 stages
  std::vector<int> head_channels = {8, 6, 4};   // three 3x3 layers
  int segment_count = 64;
  double lr = 1e-3;
  int steps = 3000;
  std::uint64_t seed = 1;
  double slic_sigma = 1.0;
  double slic_compactness = 10.0;
  int slic_iterations = 10;
};

// Encoder-decoder depth network with a swappable 3-layer head. The encoder
// and decoder are standard convolutions providing global context; the head
// is standard, standard with the normalized segment map as an extra input
// channel, or instance convolutions over the full-resolution segment map.
// Output is made positive by softplus.
class ToyNet {
 public:
  ToyNet(const NetConfig& cfg, int height, int width,
         const SegmentMap& segments);

  // Full forward graph; returns the predicted depth node (1xHxW).
  int forward_graph(Tape& tape, int input, const std::vector<int>& param_ids) const;
  // Head-only graph from decoder features; exposed for boundary tests.
  int head_graph(Tape& tape, int features, const std::vector<int>& param_ids) const;

  // Registers all parameters as tape leaves, in layer order.
  std::vector<int> register_params(Tape& tape) const;

  Tensor predict(const Tensor& input) const;

  struct LayerSpec {
    int in_ch, out_ch, k, stride, padding;
    bool instance;
  };

  const std::vector<LayerSpec>& layers() const { return layers_; }
  int head_start() const { return head_start_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const NetConfig& config() const { return cfg_; }

 private:
  NetConfig cfg_;
  int height_, width_;
  std::vector<LayerSpec> layers_;
  int head_start_ = 0;  // index of the first head layer
  std::vector<Tensor> params_;  // kernel, bias per layer
  std::shared_ptr<const IndicatorPlan> ic_plan_;
  Tensor mask_channel_;  // min-max normalized segment ids
};

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long long step = 0;
  std::vector<Tensor> m, v;

  void init_like(const std::vector<Tensor>& params);
};

// Bias-corrected Adam update, in place.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr);

struct OverfitResult {
  std::vector<LossBreakdown> curve;  // one row per step
  Tensor prediction;                 // final depth map
  MetricsReport report;              // standard metrics + DBE
  SegmentMap segments;
  NetConfig cfg;
  std::vector<Tensor> final_params;
};

// Trains `cfg.steps` iterations on a single scene and evaluates against its
// ground truth and analytic boundaries. Deterministic given (scene, cfg).
OverfitResult overfit(const Scene& scene, const NetConfig& cfg);

struct HeadStats {
  double absrel = 0.0;
  double rmse = 0.0;
  std::optional<double> dbe_acc, dbe_comp;
};

struct CompareRow {
  std::uint64_t seed = 0;
  HeadStats sc, ic;
  std::optional<HeadStats> sc_mask;
};

struct CompareResult {
  std::vector<CompareRow> rows;
  HeadStats sc_median, ic_median;
  std::optional<HeadStats> sc_mask_median;
};

// Runs the overfitting experiment per seed for the SC and IC heads (and the
// SC-with-mask ablation when requested) with otherwise identical configs.
CompareResult compare_heads(const std::vector<std::uint64_t>& seeds,
                            const NetConfig& base_cfg, bool include_mask_head,
                            int size = 64, int n_shapes = 4);

double median(std::vector<double> values);

}  // namespace icdepth
