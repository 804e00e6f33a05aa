#include "icdepth/net.hpp"

#include <algorithm>
#include <cmath>

namespace icdepth {

namespace {

// Warm start for the final bias: softplus(4) sits mid-range of the scene
// depth distribution, which keeps early L1 gradients well scaled.
constexpr double kOutputBiasInit = 4.0;

// Hidden biases start slightly positive; zero-initialized biases let entire
// ReLU layers die on some seeds, which freezes training.
constexpr double kHiddenBiasInit = 0.02;

}  // namespace

ToyNet::ToyNet(const NetConfig& cfg, int height, int width,
               const SegmentMap& segments)
    : cfg_(cfg), height_(height), width_(width) {
  if (cfg.encoder_channels.size() != 2) {
    throw std::invalid_argument("net: encoder needs exactly 2 channel counts");
  }
  if (cfg.head_channels.size() != 3) {
    throw std::invalid_argument("net: head needs exactly 3 channel counts");
  }
  if (height % 4 != 0 || width % 4 != 0) {
    throw std::invalid_argument("net: input dims must be divisible by 4");
  }
  if (segments.height != height || segments.width != width) {
    throw std::invalid_argument("net: segment map shape mismatch");
  }

  const int e0 = cfg.encoder_channels[0];
  const int e1 = cfg.encoder_channels[1];
  const int h0 = cfg.head_channels[0];
  const int h1 = cfg.head_channels[1];
  const int h2 = cfg.head_channels[2];
  const bool ic = cfg.head == HeadKind::kInstance;
  const bool with_mask = cfg.head == HeadKind::kStandardWithMask;
  const int head_in = e0 + (with_mask ? 1 : 0);

  layers_ = {
      {3, e0, 3, 2, 1, false},        // encoder
      {e0, e1, 3, 2, 1, false},
      {e1, e0, 3, 1, 1, false},       // decoder (after nearest upsample)
      {e0, e0, 3, 1, 1, false},
      {head_in, h0, 3, 1, 1, ic},     // head
      {h0, h1, 3, 1, 1, ic},
      {h1, h2, 3, 1, 1, ic},
      {h2, 1, 1, 1, 0, false},        // 1x1 projection
  };
  head_start_ = 4;

  Rng rng(cfg.seed);
  for (const LayerSpec& l : layers_) {
    const double bound = std::sqrt(1.0 / (l.in_ch * l.k * l.k));
    params_.push_back(
        random_uniform(rng, l.out_ch, l.in_ch, l.k * l.k, -bound, bound));
    params_.push_back(Tensor(l.out_ch, 1, 1, kHiddenBiasInit));
  }
  params_.back().data[0] = kOutputBiasInit;

  if (ic) {
    ic_plan_ = std::make_shared<const IndicatorPlan>(
        make_indicator_plan(segments, 3, 3, 1, 1));
  }
  if (with_mask) {
    mask_channel_ = Tensor(1, height, width);
    const double denom = std::max(1, segments.segment_count - 1);
    for (size_t i = 0; i < mask_channel_.data.size(); ++i) {
      mask_channel_.data[i] = segments.labels[i] / denom;
    }
  }
}

std::vector<int> ToyNet::register_params(Tape& tape) const {
  std::vector<int> ids;
  ids.reserve(params_.size());
  for (const Tensor& p : params_) ids.push_back(tape.leaf(p));
  return ids;
}

int ToyNet::head_graph(Tape& tape, int features,
                       const std::vector<int>& param_ids) const {
  int h = features;
  if (cfg_.head == HeadKind::kStandardWithMask) {
    h = tape.concat_const_channel(h, mask_channel_);
  }
  for (size_t li = head_start_; li < layers_.size(); ++li) {
    const LayerSpec& l = layers_[li];
    const int k_id = param_ids[2 * li];
    const int b_id = param_ids[2 * li + 1];
    if (l.instance) {
      h = tape.instance_conv(h, k_id, b_id, ic_plan_, l.out_ch, l.in_ch, l.k,
                             l.k);
    } else {
      h = tape.standard_conv(h, k_id, b_id, l.out_ch, l.in_ch, l.k, l.k,
                             l.stride, l.padding);
    }
    if (li + 1 < layers_.size()) h = tape.relu(h);
  }
  return tape.softplus(h);
}

int ToyNet::forward_graph(Tape& tape, int input,
                          const std::vector<int>& param_ids) const {
  int h = input;
  for (int li = 0; li < head_start_; ++li) {
    const LayerSpec& l = layers_[li];
    if (li >= 2) h = tape.nearest_upsample(h);  // decoder stages
    h = tape.standard_conv(h, param_ids[2 * li], param_ids[2 * li + 1],
                           l.out_ch, l.in_ch, l.k, l.k, l.stride, l.padding);
    h = tape.relu(h);
  }
  return head_graph(tape, h, param_ids);
}

Tensor ToyNet::predict(const Tensor& input) const {
  Tape tape;
  std::vector<int> ids = register_params(tape);
  const int pred = forward_graph(tape, tape.leaf(input), ids);
  return tape.value(pred);
}

void AdamState::init_like(const std::vector<Tensor>& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const Tensor& p : params) {
    m.emplace_back(p.channels, p.height, p.width);
    v.emplace_back(p.channels, p.height, p.width);
  }
}

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam: parameter/gradient count mismatch");
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, state.step);
  const double c2 = 1.0 - std::pow(state.beta2, state.step);
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i])) {
      throw std::invalid_argument("adam: gradient shape mismatch");
    }
    double* p = params[i].data.data();
    const double* g = grads[i].data.data();
    double* m = state.m[i].data.data();
    double* v = state.v[i].data.data();
    const size_t n = params[i].data.size();
    for (size_t e = 0; e < n; ++e) {
      m[e] = state.beta1 * m[e] + (1.0 - state.beta1) * g[e];
      v[e] = state.beta2 * v[e] + (1.0 - state.beta2) * g[e] * g[e];
      p[e] -= lr * (m[e] / c1) / (std::sqrt(v[e] / c2) + state.epsilon);
    }
  }
}

OverfitResult overfit(const Scene& scene, const NetConfig& cfg) {
  SlicParams sp;
  sp.k = cfg.segment_count;
  sp.sigma = cfg.slic_sigma;
  sp.compactness = cfg.slic_compactness;
  sp.iterations = cfg.slic_iterations;
  SegmentMap segments = slic(scene.rgb, sp);

  ToyNet net(cfg, scene.rgb.height, scene.rgb.width, segments);
  const Tensor input = scene.rgb.to_tensor();
  const Tensor& gt = scene.depth_gt;

  // warm-start the output bias at the label mean (through the softplus)
  double mean_depth = 0.0;
  for (double v : gt.data) mean_depth += v;
  mean_depth /= gt.volume();
  net.params().back().data[0] = std::log(std::expm1(mean_depth));

  AdamState adam;
  adam.init_like(net.params());

  OverfitResult result;
  result.cfg = cfg;
  result.curve.reserve(cfg.steps);

  std::vector<Tensor> grads(net.params().size());
  for (int step = 0; step < cfg.steps; ++step) {
    // constant rate with a x0.1 polish phase over the last 15% of steps
    const double lr = step < cfg.steps - cfg.steps / 7 ? cfg.lr : cfg.lr * 0.1;
    Tape tape;
    std::vector<int> pids = net.register_params(tape);
    const int pred = net.forward_graph(tape, tape.leaf(input), pids);
    const int l1 = tape.l1_loss(pred, gt);
    const int lg = tape.gradient_loss(pred, gt);
    const int ln = tape.normal_loss(pred, gt);
    const int total = tape.add(tape.add(l1, lg), ln);

    LossBreakdown row;
    row.l1 = tape.value(l1).scalar_value();
    row.grad = tape.value(lg).scalar_value();
    row.normal = tape.value(ln).scalar_value();
    row.total = tape.value(total).scalar_value();
    if (!std::isfinite(row.total)) {
      throw NumericalError("training diverged: non-finite loss at step " +
                           std::to_string(step));
    }
    result.curve.push_back(row);

    tape.backward(total);
    for (size_t i = 0; i < pids.size(); ++i) {
      if (tape.has_gradient(pids[i])) {
        grads[i] = tape.gradient(pids[i]);
      } else {
        const Tensor& p = net.params()[i];
        grads[i] = Tensor(p.channels, p.height, p.width);
      }
    }
    adam_step(net.params(), grads, adam, lr);
  }

  result.prediction = net.predict(input);
  result.report = standard_metrics(result.prediction, gt);
  const EdgeMap pred_edges = canny(result.prediction, kDepthCannyLow,
                                   kDepthCannyHigh, kDepthCannySigma);
  const ChamferResult dbe =
      truncated_chamfer(pred_edges, scene.gt_boundaries, kDbeTruncation);
  result.report.dbe_acc = dbe.acc;
  result.report.dbe_comp = dbe.comp;
  result.segments = std::move(segments);
  result.final_params = net.params();
  return result;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

HeadStats stats_from_report(const MetricsReport& r) {
  HeadStats s;
  s.absrel = r.absrel.value();
  s.rmse = r.rmse.value();
  s.dbe_acc = r.dbe_acc;
  s.dbe_comp = r.dbe_comp;
  return s;
}

HeadStats median_stats(const std::vector<HeadStats>& all) {
  HeadStats m;
  std::vector<double> absrel, rmse, acc, comp;
  for (const HeadStats& s : all) {
    absrel.push_back(s.absrel);
    rmse.push_back(s.rmse);
    if (s.dbe_acc) acc.push_back(*s.dbe_acc);
    if (s.dbe_comp) comp.push_back(*s.dbe_comp);
  }
  m.absrel = median(absrel);
  m.rmse = median(rmse);
  if (!acc.empty()) m.dbe_acc = median(acc);
  if (!comp.empty()) m.dbe_comp = median(comp);
  return m;
}

}  // namespace

CompareResult compare_heads(const std::vector<std::uint64_t>& seeds,
                            const NetConfig& base_cfg, bool include_mask_head,
                            int size, int n_shapes) {
  if (seeds.size() < 5) {
    throw std::invalid_argument("compare_heads: need at least 5 seeds");
  }
  CompareResult result;
  std::vector<HeadStats> sc_all, ic_all, scm_all;
  for (std::uint64_t seed : seeds) {
    const Scene scene = gen_scene(seed, size, n_shapes);
    NetConfig cfg = base_cfg;
    cfg.seed = seed;

    CompareRow row;
    row.seed = seed;
    cfg.head = HeadKind::kStandard;
    row.sc = stats_from_report(overfit(scene, cfg).report);
    cfg.head = HeadKind::kInstance;
    row.ic = stats_from_report(overfit(scene, cfg).report);
    if (include_mask_head) {
      cfg.head = HeadKind::kStandardWithMask;
      row.sc_mask = stats_from_report(overfit(scene, cfg).report);
      scm_all.push_back(*row.sc_mask);
    }
    sc_all.push_back(row.sc);
    ic_all.push_back(row.ic);
    result.rows.push_back(std::move(row));
  }
  result.sc_median = median_stats(sc_all);
  result.ic_median = median_stats(ic_all);
  if (include_mask_head) result.sc_mask_median = median_stats(scm_all);
  return result;
}

}  // namespace icdepth
