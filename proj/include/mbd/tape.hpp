#pragma once

#include <functional>
#include <vector>

#include "mbd/kernels.hpp"
#include "mbd/tensor.hpp"

namespace mbd {

// Handle into a Tape. Cheap to copy; only meaningful with the tape that
// created it.
struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over float32 tensors.
//
// Every op records a node whose backward closure scatters the upstream
// adjoint to its parents. backward() walks nodes in reverse creation order,
// which is a valid topological order because ops can only consume
// already-created values. Nodes created by constant() or stop_gradient()
// never receive adjoints: their gradient stays identically zero and nothing
// propagates through them.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value leaf(Tensor v);            // differentiable input
  Value constant(Tensor v);        // non-differentiable input
  Value stop_gradient(Value x);    // value alias that blocks gradient flow

  const Tensor& val(Value v) const;
  // Adjoint d(loss)/d(v); zeros if no gradient reached the node.
  Tensor grad(Value v) const;
  size_t size() const { return nodes_.size(); }

  // Elementwise; operands must have identical shapes.
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value div(Value a, Value b);

  Value affine(Value x, float scale, float shift);  // scale * x + shift
  Value abs(Value x);
  Value elu(Value x);
  Value sigmoid(Value x);
  Value exp_neg(Value x);  // e^(-x)
  Value clip(Value x, float lo, float hi);

  Value concat_channels(const std::vector<Value>& xs);
  Value slice_channels(Value x, int c0, int c1);  // channels [c0, c1)
  Value channel_mean(Value x);
  Value repeat_channels(Value x, int copies);

  Value conv2d(Value x, Value w, Value b, int stride, int pad);
  Value upsample2x(Value x);
  Value downsample2x(Value x);
  Value box3_mean(Value x);
  Value diff_x(Value x);
  Value diff_y(Value x);
  Value warp_horizontal(Value src, Value disp, WarpDir dir);

  Value sum(Value x);   // scalar, accumulated in double
  Value mean(Value x);  // sum / numel

  // Seeds d(loss)=1 and propagates to all reachable nodes. One call per
  // tape; zero_grad() re-arms.
  void backward(Value loss);
  // Vector-Jacobian product: seeds y's adjoint with an arbitrary tensor
  // (same shape as y) instead of the scalar 1.
  void backward(Value y, const Tensor& seed);
  void zero_grad();

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated on first contribution
    bool stopped = false;
    std::function<void(Tape&, const Tensor&)> backward;
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;

  Value make(Tensor v, std::function<void(Tape&, const Tensor&)> bwd, bool stopped = false);
  Node& node(Value v);
  const Node& node(Value v) const;
  // Accumulation buffer for a parent node; nullptr when gradients must not
  // flow into it (constant / stop_gradient).
  Tensor* grad_slot(int id);
  void check_same_shape(Value a, Value b, const char* op) const;
};

}  // namespace mbd
