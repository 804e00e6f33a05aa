#include "icdepth/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "icdepth/losses.hpp"

namespace icdepth {

int Tape::record(OpKind kind, std::vector<int> parents, Tensor value,
                 BackwardFn backward) {
  for (int p : parents) {
    if (p < 0 || p >= size()) {
      throw std::invalid_argument("tape: unknown input node id");
    }
  }
  Node n;
  n.id = size();
  n.kind = kind;
  n.parents = std::move(parents);
  n.value = std::move(value);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

void Tape::backward(int seed) {
  if (seed < 0 || seed >= size()) {
    throw std::invalid_argument("tape: unknown seed node");
  }
  if (nodes_[seed].value.volume() != 1) {
    throw std::invalid_argument("tape: backward seed must hold a scalar");
  }
  grads_.assign(nodes_.size(), Tensor());
  grads_[seed] = Tensor::scalar(1.0);
  for (int id = seed; id >= 0; --id) {
    if (!has_gradient(id) || !nodes_[id].backward) continue;
    nodes_[id].backward(*this, grads_[id]);
  }
}

void Tape::accumulate(int id, const Tensor& contribution) {
  Tensor& slot = grads_.at(id);
  if (slot.volume() == 0) {
    slot = Tensor(nodes_[id].value.channels, nodes_[id].value.height,
                  nodes_[id].value.width);
  }
  if (!slot.same_shape(contribution)) {
    throw std::invalid_argument("tape: gradient shape mismatch");
  }
  for (size_t i = 0; i < slot.data.size(); ++i) {
    slot.data[i] += contribution.data[i];
  }
}

int Tape::leaf(Tensor v) { return record(OpKind::kLeaf, {}, std::move(v)); }

int Tape::add(int a, int b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("add: shape mismatch");
  Tensor out = va;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
  return record(OpKind::kAdd, {a, b}, std::move(out),
                [a, b](Tape& t, const Tensor& g) {
                  t.accumulate(a, g);
                  t.accumulate(b, g);
                });
}

int Tape::mul(int a, int b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  if (!va.same_shape(vb)) throw std::invalid_argument("mul: shape mismatch");
  Tensor out = va;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb.data[i];
  return record(OpKind::kMul, {a, b}, std::move(out),
                [a, b](Tape& t, const Tensor& g) {
                  const Tensor& va = t.value(a);
                  const Tensor& vb = t.value(b);
                  Tensor ga = g, gb = g;
                  for (size_t i = 0; i < g.data.size(); ++i) {
                    ga.data[i] *= vb.data[i];
                    gb.data[i] *= va.data[i];
                  }
                  t.accumulate(a, ga);
                  t.accumulate(b, gb);
                });
}

int Tape::relu(int a) {
  Tensor out = value(a);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return record(OpKind::kRelu, {a}, std::move(out),
                [a](Tape& t, const Tensor& g) {
                  const Tensor& va = t.value(a);
                  Tensor ga = g;
                  for (size_t i = 0; i < g.data.size(); ++i) {
                    if (va.data[i] <= 0.0) ga.data[i] = 0.0;
                  }
                  t.accumulate(a, ga);
                });
}

int Tape::softplus(int a) {
  Tensor out = value(a);
  for (double& v : out.data) {
    v = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }
  return record(OpKind::kSoftplus, {a}, std::move(out),
                [a](Tape& t, const Tensor& g) {
                  const Tensor& va = t.value(a);
                  Tensor ga = g;
                  for (size_t i = 0; i < g.data.size(); ++i) {
                    const double x = va.data[i];
                    const double s = x > 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                             : std::exp(x) / (1.0 + std::exp(x));
                    ga.data[i] *= s;
                  }
                  t.accumulate(a, ga);
                });
}

int Tape::sum(int a) {
  double s = 0.0;
  for (double v : value(a).data) s += v;
  return record(OpKind::kSum, {a}, Tensor::scalar(s),
                [a](Tape& t, const Tensor& g) {
                  const Tensor& va = t.value(a);
                  Tensor ga(va.channels, va.height, va.width);
                  const double gv = g.scalar_value();
                  for (double& v : ga.data) v = gv;
                  t.accumulate(a, ga);
                });
}

ConvWeights Tape::weights_view(int kernel, int bias, int out_channels,
                               int in_channels, int kh, int kw) const {
  ConvWeights w(out_channels, in_channels, kh, kw);
  if (!w.kernel.same_shape(value(kernel)) || !w.bias.same_shape(value(bias))) {
    throw std::invalid_argument("conv: weight node shape mismatch");
  }
  w.kernel = value(kernel);
  w.bias = value(bias);
  return w;
}

int Tape::standard_conv(int x, int kernel, int bias, int out_channels,
                        int in_channels, int kh, int kw, int stride,
                        int padding) {
  ConvWeights w = weights_view(kernel, bias, out_channels, in_channels, kh, kw);
  Tensor out = standard_conv2d(value(x), w, stride, padding);
  auto geom = std::make_tuple(out_channels, in_channels, kh, kw);
  return record(
      OpKind::kStandardConv, {x, kernel, bias}, std::move(out),
      [x, kernel, bias, geom, stride, padding](Tape& t, const Tensor& g) {
        auto [oc, ic, kh_, kw_] = geom;
        ConvWeights w = t.weights_view(kernel, bias, oc, ic, kh_, kw_);
        ConvGrads cg = standard_conv2d_backward(t.value(x), w, stride, padding, g);
        t.accumulate(x, cg.x);
        t.accumulate(kernel, cg.kernel);
        t.accumulate(bias, cg.bias);
      });
}

int Tape::instance_conv(int x, int kernel, int bias,
                        std::shared_ptr<const IndicatorPlan> plan,
                        int out_channels, int in_channels, int kh, int kw) {
  ConvWeights w = weights_view(kernel, bias, out_channels, in_channels, kh, kw);
  Tensor out = instance_conv2d(value(x), *plan, w);
  auto geom = std::make_tuple(out_channels, in_channels, kh, kw);
  return record(OpKind::kInstanceConv, {x, kernel, bias}, std::move(out),
                [x, kernel, bias, plan, geom](Tape& t, const Tensor& g) {
                  auto [oc, ic, kh_, kw_] = geom;
                  ConvWeights w = t.weights_view(kernel, bias, oc, ic, kh_, kw_);
                  ConvGrads cg = instance_conv2d_backward(t.value(x), *plan, w, g);
                  t.accumulate(x, cg.x);
                  t.accumulate(kernel, cg.kernel);
                  t.accumulate(bias, cg.bias);
                });
}

int Tape::nearest_upsample(int a) {
  const Tensor& va = value(a);
  const int in_h = va.height, in_w = va.width;
  Tensor out = icdepth::nearest_upsample(va);
  return record(OpKind::kNearestUpsample, {a}, std::move(out),
                [a, in_h, in_w](Tape& t, const Tensor& g) {
                  t.accumulate(a, nearest_upsample_backward(g, in_h, in_w));
                });
}

int Tape::concat_const_channel(int a, Tensor extra) {
  const Tensor& va = value(a);
  if (extra.channels != 1 || extra.height != va.height ||
      extra.width != va.width) {
    throw std::invalid_argument("concat: extra channel shape mismatch");
  }
  Tensor out(va.channels + 1, va.height, va.width);
  std::copy(va.data.begin(), va.data.end(), out.data.begin());
  std::copy(extra.data.begin(), extra.data.end(),
            out.data.begin() + va.data.size());
  return record(OpKind::kConcatConstChannel, {a}, std::move(out),
                [a](Tape& t, const Tensor& g) {
                  const Tensor& va = t.value(a);
                  Tensor ga(va.channels, va.height, va.width);
                  std::copy(g.data.begin(), g.data.begin() + ga.data.size(),
                            ga.data.begin());
                  t.accumulate(a, ga);
                });
}

namespace {

int record_loss(Tape& t, OpKind kind, int pred, Tensor gt, PixelMask mask,
                double (*fwd)(const Tensor&, const Tensor&, const PixelMask&),
                Tensor (*bwd)(const Tensor&, const Tensor&, const PixelMask&)) {
  auto gt_p = std::make_shared<const Tensor>(std::move(gt));
  auto mask_p = std::make_shared<const PixelMask>(std::move(mask));
  const double v = fwd(t.value(pred), *gt_p, *mask_p);
  return t.record(kind, {pred}, Tensor::scalar(v),
                  [pred, gt_p, mask_p, bwd](Tape& tt, const Tensor& g) {
                    Tensor gp = bwd(tt.value(pred), *gt_p, *mask_p);
                    const double s = g.scalar_value();
                    for (double& x : gp.data) x *= s;
                    tt.accumulate(pred, gp);
                  });
}

}  // namespace

int Tape::l1_loss(int pred, Tensor gt, PixelMask mask) {
  return record_loss(*this, OpKind::kL1Loss, pred, std::move(gt),
                     std::move(mask), &icdepth::l1_loss, &l1_loss_grad);
}

int Tape::gradient_loss(int pred, Tensor gt, PixelMask mask) {
  return record_loss(*this, OpKind::kGradientLoss, pred, std::move(gt),
                     std::move(mask), &icdepth::gradient_loss,
                     &gradient_loss_grad);
}

int Tape::normal_loss(int pred, Tensor gt, PixelMask mask) {
  return record_loss(*this, OpKind::kNormalLoss, pred, std::move(gt),
                     std::move(mask), &icdepth::normal_loss, &normal_loss_grad);
}

namespace {

double eval_scalar(const TapeProgram& program,
                   const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (const Tensor& in : inputs) ids.push_back(tape.leaf(in));
  const int seed = program(tape, ids);
  return tape.value(seed).scalar_value();
}

}  // namespace

GradCheckResult grad_check(const TapeProgram& program,
                           const std::vector<Tensor>& inputs, double h,
                           double tol, int max_elements_per_input,
                           std::uint64_t subsample_seed) {
  Tape tape;
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (const Tensor& in : inputs) ids.push_back(tape.leaf(in));
  const int seed = program(tape, ids);
  if (tape.value(seed).volume() != 1) {
    throw std::invalid_argument("grad_check: program must return a scalar");
  }
  tape.backward(seed);

  GradCheckResult result;
  std::vector<Tensor> probe = inputs;
  for (size_t idx = 0; idx < inputs.size(); ++idx) {
    const int volume = inputs[idx].volume();
    std::vector<int> elements(volume);
    std::iota(elements.begin(), elements.end(), 0);
    if (max_elements_per_input >= 0 && max_elements_per_input < volume) {
      Rng rng(subsample_seed + idx);
      for (int e = 0; e < max_elements_per_input; ++e) {
        std::swap(elements[e], elements[e + rng.uniform_int(volume - e)]);
      }
      elements.resize(max_elements_per_input);
    }

    const Tensor* analytic =
        tape.has_gradient(ids[idx]) ? &tape.gradient(ids[idx]) : nullptr;
    for (int e : elements) {
      const double saved = probe[idx].data[e];
      probe[idx].data[e] = saved + h;
      const double fp = eval_scalar(program, probe);
      probe[idx].data[e] = saved - h;
      const double fm = eval_scalar(program, probe);
      probe[idx].data[e] = saved;

      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic ? analytic->data[e] : 0.0;
      // central differences cannot resolve differences below the rounding
      // noise of f itself; such elements carry no signal either way
      const double fd_noise = 128.0 * 2.220446049250313e-16 *
                              std::max({std::abs(fp), std::abs(fm), 1.0}) /
                              (2.0 * h);
      if (std::abs(a - numeric) > fd_noise) {
        const double rel = std::abs(a - numeric) /
                           std::max({std::abs(a), std::abs(numeric), 1e-8});
        result.max_rel_err = std::max(result.max_rel_err, rel);
      }
      ++result.elements_checked;
    }
  }
  result.pass = result.max_rel_err < tol;
  return result;
}

}  // namespace icdepth
