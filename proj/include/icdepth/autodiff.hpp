#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "icdepth/conv.hpp"
#include "icdepth/image.hpp"
#include "icdepth/tensor.hpp"

namespace icdepth {

enum class OpKind {
  kLeaf,
  kAdd,
  kMul,
  kRelu,
  kSoftplus,
  kSum,
  kStandardConv,
  kInstanceConv,
  kNearestUpsample,
  kConcatConstChannel,
  kL1Loss,
  kGradientLoss,
  kNormalLoss,
};

class Tape;
using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

struct Node {
  int id = -1;
  OpKind kind = OpKind::kLeaf;
  std::vector<int> parents;
  Tensor value;
  BackwardFn backward;  // accumulates parent gradients; empty for leaves
};

// Append-only reverse-mode tape. Node ids are indices into the node list,
// so parents always precede their consumers.
class Tape {
 public:
  int record(OpKind kind, std::vector<int> parents, Tensor value,
             BackwardFn backward = {});

  const Node& node(int id) const { return nodes_.at(id); }
  const Tensor& value(int id) const { return nodes_.at(id).value; }
  int size() const { return static_cast<int>(nodes_.size()); }

  // Reverse sweep from a scalar seed. Populates gradients for every node
  // reachable from the seed; d(seed)/d(seed) = 1.
  void backward(int seed);

  bool has_gradient(int id) const {
    return id >= 0 && id < static_cast<int>(grads_.size()) &&
           grads_[id].volume() > 0;
  }
  const Tensor& gradient(int id) const { return grads_.at(id); }

  // Adds `contribution` into the gradient slot for `id`.
  void accumulate(int id, const Tensor& contribution);

  // --- graph-building operations ---
  int leaf(Tensor v);
  int add(int a, int b);
  int mul(int a, int b);
  int relu(int a);
  int softplus(int a);
  int sum(int a);  // scalar total of all entries
  int standard_conv(int x, int kernel, int bias, int out_channels,
                    int in_channels, int kh, int kw, int stride, int padding);
  int instance_conv(int x, int kernel, int bias,
                    std::shared_ptr<const IndicatorPlan> plan,
                    int out_channels, int in_channels, int kh, int kw);
  int nearest_upsample(int a);
  int concat_const_channel(int a, Tensor extra);
  int l1_loss(int pred, Tensor gt, PixelMask mask = {});
  int gradient_loss(int pred, Tensor gt, PixelMask mask = {});
  int normal_loss(int pred, Tensor gt, PixelMask mask = {});

 private:
  ConvWeights weights_view(int kernel, int bias, int out_channels,
                           int in_channels, int kh, int kw) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// Central finite-difference check of an op (or graph) built by `program`
// from leaves seeded with `inputs`. The program must return a scalar node.
struct GradCheckResult {
  bool pass = false;
  double max_rel_err = 0.0;
  int elements_checked = 0;
};

using TapeProgram = std::function<int(Tape&, const std::vector<int>&)>;

// Compares analytic leaf gradients against (f(x+h)-f(x-h))/2h elementwise.
// Relative error uses a max(|analytic|, |numeric|, 1e-8) denominator.
// max_elements_per_input < 0 checks every element; otherwise a deterministic
// subsample of that size is drawn per input.
GradCheckResult grad_check(const TapeProgram& program,
                           const std::vector<Tensor>& inputs, double h,
                           double tol, int max_elements_per_input = -1,
                           std::uint64_t subsample_seed = 12345);

}  // namespace icdepth
