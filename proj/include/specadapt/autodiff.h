// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Minimal define-by-run reverse-mode autodiff over Tensor. Backward passes
// are themselves built from these primitives, so gradients are differentiable
// (needed for the R1 penalty, whose discriminator-parameter gradient is a
// second derivative). Ops marked "first-order" construct value-only gradient
// nodes and cannot appear on a twice-differentiated path.

#ifndef SPECADAPT_AUTODIFF_H_
#define SPECADAPT_AUTODIFF_H_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "specadapt/tensor.h"

namespace specadapt {
namespace ad {

struct Node;

// Handle to a graph node. Cheap to copy; the graph is freed when the last
// handle to its root goes away.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  bool requires_grad() const;
  Node* node() const { return node_.get(); }
  std::shared_ptr<Node> node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

struct Node {
  Tensor value;
  bool requires_grad = false;
  std::string op;
  std::vector<std::shared_ptr<Node>> inputs;
  // Maps the gradient at this node to gradients of the inputs (one entry per
  // input; undefined Var for non-differentiable slots). Built lazily during
  // Grad(); closures construct further graph nodes from primitives.
  std::function<std::vector<Var>(const Var&)> grad_fn;
};

// Leaves and constants.
Var Constant(Tensor value);
Var ConstantScalar(double v);
Var Leaf(Tensor value);  // differentiable leaf (parameter or probed input)

// Elementwise with numpy-style broadcasting (right-aligned, size-1 stretch).
Var Add(const Var& a, const Var& b);
Var Sub(const Var& a, const Var& b);
Var Mul(const Var& a, const Var& b);
Var Div(const Var& a, const Var& b);
Var Neg(const Var& a);
Var ScalarMul(const Var& a, double c);
Var ScalarAdd(const Var& a, double c);
Var PowScalar(const Var& a, double p);
Var Exp(const Var& a);
Var Log(const Var& a);
Var Abs(const Var& a);
Var Relu(const Var& a);
Var LeakyRelu(const Var& a, double slope);
Var Sigmoid(const Var& a);
Var Swish(const Var& a);

// Shape ops.
Var Reshape(const Var& a, std::vector<int> shape);
Var Permute(const Var& a, std::vector<int> axes);
Var Expand(const Var& a, std::vector<int> shape);  // broadcast to shape
Var Concat(const std::vector<Var>& parts, int axis);
Var Slice(const Var& a, int axis, int start, int len);

// Reductions.
Var Sum(const Var& a);
Var Mean(const Var& a);
Var SumAxes(const Var& a, std::vector<int> axes, bool keepdims);
Var MeanAxes(const Var& a, std::vector<int> axes, bool keepdims);
Var MaxConst(const Var& a, int axis);  // row max as constant (softmax shift)

// Linear algebra. MatMul: [m,k]x[k,n]; Bmm: [B,m,k]x[B,k,n].
Var MatMul(const Var& a, const Var& b);
Var Bmm(const Var& a, const Var& b);

// Softmax along the last axis (composed from primitives).
Var SoftmaxLastAxis(const Var& a);

// 2-D convolution, NCHW, zero padding. x:[N,Ci,H,W], w:[Co,Ci,kh,kw].
Var Conv2d(const Var& x, const Var& w, int stride_h, int stride_w, int pad_h,
           int pad_w);
// Adjoints, exposed as primitives so conv gradients are differentiable.
Var Conv2dInputGrad(const Var& gy, const Var& w, int in_h, int in_w,
                    int stride_h, int stride_w, int pad_h, int pad_w);
Var Conv2dWeightGrad(const Var& x, const Var& gy, int kh, int kw, int stride_h,
                     int stride_w, int pad_h, int pad_w);

// Depthwise 1-D convolution over the last axis, valid (caller pads).
// x:[N,C,W], w:[C,k].
Var DepthwiseConv1d(const Var& x, const Var& w);

// Average pooling with kernel == stride; dims must divide exactly.
Var AvgPool2d(const Var& x, int kh, int kw);
Var UpsampleNearest2d(const Var& x, int fh, int fw);

// Edge-replicate padding of the last axis (first-order).
Var PadEdgeLast(const Var& x, int left, int right);

// Zero padding along one axis; adjoint of Slice.
Var ZeroPad(const Var& x, int axis, int before, int after);

// Gradients of `output` (scalar) w.r.t. `wrt`. The returned Vars are graph
// nodes: calling Grad again on expressions built from them yields second
// derivatives. Missing dependence yields a zero gradient.
std::vector<Var> Grad(const Var& output, const std::vector<Var>& wrt);

}  // namespace ad
}  // namespace specadapt

#endif  // SPECADAPT_AUTODIFF_H_
