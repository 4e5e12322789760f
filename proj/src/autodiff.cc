// Copyright 2026 The specadapt Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "specadapt/autodiff.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace specadapt {
namespace ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

std::shared_ptr<Node> MakeNode(Tensor value, std::string op,
                               std::vector<Var> inputs,
                               std::function<std::vector<Var>(const Var&)> fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = std::move(op);
  n->inputs.reserve(inputs.size());
  for (const auto& v : inputs) {
    n->inputs.push_back(v.node_ptr());
    if (v.defined() && v.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) n->grad_fn = std::move(fn);
  return n;
}

std::vector<std::int64_t> StridesOf(const std::vector<int>& shape) {
  std::vector<std::int64_t> s(shape.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = acc;
    acc *= shape[static_cast<std::size_t>(i)];
  }
  return s;
}

std::vector<int> BroadcastShape(const std::vector<int>& a,
                                const std::vector<int>& b) {
  std::size_t r = std::max(a.size(), b.size());
  std::vector<int> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    int da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    int db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument("broadcast shape mismatch");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `shape` right-aligned into rank `r`, zeroed on broadcast axes.
std::vector<std::int64_t> BroadcastStrides(const std::vector<int>& shape,
                                           const std::vector<int>& out_shape) {
  std::size_t r = out_shape.size();
  auto base = StridesOf(shape);
  std::vector<std::int64_t> s(r, 0);
  for (std::size_t i = 0; i < shape.size(); ++i) {
    std::size_t oi = i + (r - shape.size());
    s[oi] = (shape[i] == 1 && out_shape[oi] != 1) ? 0 : base[i];
  }
  return s;
}

template <typename F>
Tensor BroadcastBinaryEval(const Tensor& a, const Tensor& b, F f) {
  if (a.shape() == b.shape()) {
    Tensor out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    std::int64_t n = a.numel();
    for (std::int64_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  auto shape = BroadcastShape(a.shape(), b.shape());
  Tensor out(shape);
  auto sa = BroadcastStrides(a.shape(), shape);
  auto sb = BroadcastStrides(b.shape(), shape);
  std::size_t r = shape.size();
  std::vector<int> idx(r, 0);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  std::int64_t n = out.numel();
  std::int64_t oa = 0, ob = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    po[i] = f(pa[oa], pb[ob]);
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      std::size_t du = static_cast<std::size_t>(d);
      ++idx[du];
      oa += sa[du];
      ob += sb[du];
      if (idx[du] < shape[du]) break;
      oa -= sa[du] * shape[du];
      ob -= sb[du] * shape[du];
      idx[du] = 0;
    }
  }
  return out;
}

template <typename F>
Tensor UnaryEval(const Tensor& a, F f) {
  Tensor out(a.shape());
  const double* pa = a.data();
  double* po = out.data();
  std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);
  return out;
}

// Reduces g to `target` shape by summing broadcast axes (inverse of Expand).
Var SumToShape(const Var& g, const std::vector<int>& target) {
  const auto& gs = g.value().shape();
  if (gs == target) return g;
  std::size_t r = gs.size();
  std::vector<int> axes;
  for (std::size_t i = 0; i < r; ++i) {
    int td = i < r - target.size() ? 1 : target[i - (r - target.size())];
    if (gs[i] != td) axes.push_back(static_cast<int>(i));
  }
  Var reduced = axes.empty() ? g : SumAxes(g, axes, true);
  return Reshape(reduced, target);
}

Tensor SumAxesEval(const Tensor& a, const std::vector<bool>& reduce,
                   const std::vector<int>& out_shape) {
  Tensor out(out_shape);
  const auto& shape = a.shape();
  std::size_t r = shape.size();
  auto out_strides = StridesOf(out_shape);
  std::vector<std::int64_t> map_strides(r, 0);
  for (std::size_t i = 0; i < r; ++i) {
    map_strides[i] = reduce[i] ? 0 : out_strides[i];
  }
  std::vector<int> idx(r, 0);
  const double* pa = a.data();
  double* po = out.data();
  std::int64_t n = a.numel();
  std::int64_t off = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    po[off] += pa[i];
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      std::size_t du = static_cast<std::size_t>(d);
      ++idx[du];
      off += map_strides[du];
      if (idx[du] < shape[du]) break;
      off -= map_strides[du] * shape[du];
      idx[du] = 0;
    }
  }
  return out;
}

Tensor ExpandEval(const Tensor& a, const std::vector<int>& shape) {
  Tensor out(shape);
  auto sa = BroadcastStrides(a.shape(), shape);
  std::size_t r = shape.size();
  std::vector<int> idx(r, 0);
  const double* pa = a.data();
  double* po = out.data();
  std::int64_t n = out.numel();
  std::int64_t oa = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    po[i] = pa[oa];
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      std::size_t du = static_cast<std::size_t>(d);
      ++idx[du];
      oa += sa[du];
      if (idx[du] < shape[du]) break;
      oa -= sa[du] * shape[du];
      idx[du] = 0;
    }
  }
  return out;
}

void Im2Col(const double* x, int ci, int h, int w, int kh, int kw, int sh,
            int sw, int ph, int pw, int ho, int wo, double* col) {
  // col layout: [ci*kh*kw, ho*wo]
  for (int c = 0; c < ci; ++c) {
    const double* xc = x + static_cast<std::int64_t>(c) * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        double* row =
            col + (static_cast<std::int64_t>(c) * kh * kw + ki * kw + kj) *
                      (static_cast<std::int64_t>(ho) * wo);
        for (int oh = 0; oh < ho; ++oh) {
          int ih = oh * sh - ph + ki;
          if (ih < 0 || ih >= h) {
            std::fill(row + static_cast<std::int64_t>(oh) * wo,
                      row + static_cast<std::int64_t>(oh + 1) * wo, 0.0);
            continue;
          }
          for (int ow = 0; ow < wo; ++ow) {
            int iw = ow * sw - pw + kj;
            row[static_cast<std::int64_t>(oh) * wo + ow] =
                (iw < 0 || iw >= w) ? 0.0 : xc[static_cast<std::int64_t>(ih) * w + iw];
          }
        }
      }
    }
  }
}

void Col2ImAdd(const double* col, int ci, int h, int w, int kh, int kw, int sh,
               int sw, int ph, int pw, int ho, int wo, double* x) {
  for (int c = 0; c < ci; ++c) {
    double* xc = x + static_cast<std::int64_t>(c) * h * w;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const double* row =
            col + (static_cast<std::int64_t>(c) * kh * kw + ki * kw + kj) *
                      (static_cast<std::int64_t>(ho) * wo);
        for (int oh = 0; oh < ho; ++oh) {
          int ih = oh * sh - ph + ki;
          if (ih < 0 || ih >= h) continue;
          for (int ow = 0; ow < wo; ++ow) {
            int iw = ow * sw - pw + kj;
            if (iw < 0 || iw >= w) continue;
            xc[static_cast<std::int64_t>(ih) * w + iw] +=
                row[static_cast<std::int64_t>(oh) * wo + ow];
          }
        }
      }
    }
  }
}

struct ConvDims {
  int n, ci, h, w, co, kh, kw, ho, wo;
};

ConvDims ConvGeometry(const std::vector<int>& xs, const std::vector<int>& ws,
                      int sh, int sw, int ph, int pw) {
  if (xs.size() != 4 || ws.size() != 4) {
    throw std::invalid_argument("conv2d expects 4-D input and weight");
  }
  if (xs[1] != ws[1]) throw std::invalid_argument("conv2d channel mismatch");
  ConvDims d;
  d.n = xs[0];
  d.ci = xs[1];
  d.h = xs[2];
  d.w = xs[3];
  d.co = ws[0];
  d.kh = ws[2];
  d.kw = ws[3];
  d.ho = (d.h + 2 * ph - d.kh) / sh + 1;
  d.wo = (d.w + 2 * pw - d.kw) / sw + 1;
  if (d.ho < 1 || d.wo < 1) throw std::invalid_argument("conv2d output collapses");
  return d;
}

Tensor Conv2dEval(const Tensor& x, const Tensor& w, int sh, int sw, int ph,
                  int pw) {
  ConvDims d = ConvGeometry(x.shape(), w.shape(), sh, sw, ph, pw);
  Tensor y({d.n, d.co, d.ho, d.wo});
  std::int64_t ckk = static_cast<std::int64_t>(d.ci) * d.kh * d.kw;
  std::int64_t hw = static_cast<std::int64_t>(d.ho) * d.wo;
  std::vector<double> col(static_cast<std::size_t>(ckk * hw));
  CMapMat wm(w.data(), d.co, ckk);
  for (int n = 0; n < d.n; ++n) {
    Im2Col(x.data() + static_cast<std::int64_t>(n) * d.ci * d.h * d.w, d.ci,
           d.h, d.w, d.kh, d.kw, sh, sw, ph, pw, d.ho, d.wo, col.data());
    CMapMat cm(col.data(), ckk, hw);
    MapMat ym(y.data() + static_cast<std::int64_t>(n) * d.co * hw, d.co, hw);
    ym.noalias() = wm * cm;
  }
  return y;
}

Tensor Conv2dInputGradEval(const Tensor& gy, const Tensor& w, int in_h,
                           int in_w, int sh, int sw, int ph, int pw) {
  const auto& gs = gy.shape();
  const auto& ws = w.shape();
  int n = gs[0], co = gs[1], ho = gs[2], wo = gs[3];
  int ci = ws[1], kh = ws[2], kw = ws[3];
  if (ws[0] != co) throw std::invalid_argument("conv2d grad channel mismatch");
  Tensor gx({n, ci, in_h, in_w});
  std::int64_t ckk = static_cast<std::int64_t>(ci) * kh * kw;
  std::int64_t hw = static_cast<std::int64_t>(ho) * wo;
  std::vector<double> col(static_cast<std::size_t>(ckk * hw));
  CMapMat wm(w.data(), co, ckk);
  for (int b = 0; b < n; ++b) {
    CMapMat gym(gy.data() + static_cast<std::int64_t>(b) * co * hw, co, hw);
    MapMat cm(col.data(), ckk, hw);
    cm.noalias() = wm.transpose() * gym;
    Col2ImAdd(col.data(), ci, in_h, in_w, kh, kw, sh, sw, ph, pw, ho, wo,
              gx.data() + static_cast<std::int64_t>(b) * ci * in_h * in_w);
  }
  return gx;
}

Tensor Conv2dWeightGradEval(const Tensor& x, const Tensor& gy, int kh, int kw,
                            int sh, int sw, int ph, int pw) {
  const auto& xs = x.shape();
  const auto& gs = gy.shape();
  int n = xs[0], ci = xs[1], h = xs[2], w = xs[3];
  int co = gs[1], ho = gs[2], wo = gs[3];
  Tensor gw({co, ci, kh, kw});
  std::int64_t ckk = static_cast<std::int64_t>(ci) * kh * kw;
  std::int64_t hw = static_cast<std::int64_t>(ho) * wo;
  std::vector<double> col(static_cast<std::size_t>(ckk * hw));
  MapMat gwm(gw.data(), co, ckk);
  for (int b = 0; b < n; ++b) {
    Im2Col(x.data() + static_cast<std::int64_t>(b) * ci * h * w, ci, h, w, kh,
           kw, sh, sw, ph, pw, ho, wo, col.data());
    CMapMat cm(col.data(), ckk, hw);
    CMapMat gym(gy.data() + static_cast<std::int64_t>(b) * co * hw, co, hw);
    gwm.noalias() += gym * cm.transpose();
  }
  return gw;
}

}  // namespace

const Tensor& Var::value() const {
  if (!node_) throw std::logic_error("value() on undefined Var");
  return node_->value;
}

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

Var Constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "const";
  return Var(n);
}

Var ConstantScalar(double v) { return Constant(Tensor::Scalar(v)); }

Var Leaf(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = "leaf";
  n->requires_grad = true;
  return Var(n);
}

Var Add(const Var& a, const Var& b) {
  Tensor v = BroadcastBinaryEval(a.value(), b.value(),
                                 [](double x, double y) { return x + y; });
  auto as = a.value().shape();
  auto bs = b.value().shape();
  return Var(MakeNode(std::move(v), "add", {a, b}, [as, bs](const Var& g) {
    return std::vector<Var>{SumToShape(g, as), SumToShape(g, bs)};
  }));
}

Var Sub(const Var& a, const Var& b) {
  Tensor v = BroadcastBinaryEval(a.value(), b.value(),
                                 [](double x, double y) { return x - y; });
  auto as = a.value().shape();
  auto bs = b.value().shape();
  return Var(MakeNode(std::move(v), "sub", {a, b}, [as, bs](const Var& g) {
    return std::vector<Var>{SumToShape(g, as), SumToShape(Neg(g), bs)};
  }));
}

Var Mul(const Var& a, const Var& b) {
  Tensor v = BroadcastBinaryEval(a.value(), b.value(),
                                 [](double x, double y) { return x * y; });
  auto as = a.value().shape();
  auto bs = b.value().shape();
  return Var(MakeNode(std::move(v), "mul", {a, b}, [a, b, as, bs](const Var& g) {
    return std::vector<Var>{SumToShape(Mul(g, b), as), SumToShape(Mul(g, a), bs)};
  }));
}

Var Div(const Var& a, const Var& b) {
  Tensor v = BroadcastBinaryEval(a.value(), b.value(),
                                 [](double x, double y) { return x / y; });
  auto as = a.value().shape();
  auto bs = b.value().shape();
  return Var(MakeNode(std::move(v), "div", {a, b}, [a, b, as, bs](const Var& g) {
    Var ga = SumToShape(Div(g, b), as);
    Var gb = SumToShape(Neg(Div(Mul(g, a), Mul(b, b))), bs);
    return std::vector<Var>{ga, gb};
  }));
}

Var Neg(const Var& a) {
  Tensor v = UnaryEval(a.value(), [](double x) { return -x; });
  return Var(MakeNode(std::move(v), "neg", {a}, [](const Var& g) {
    return std::vector<Var>{Neg(g)};
  }));
}

Var ScalarMul(const Var& a, double c) {
  Tensor v = UnaryEval(a.value(), [c](double x) { return c * x; });
  return Var(MakeNode(std::move(v), "smul", {a}, [c](const Var& g) {
    return std::vector<Var>{ScalarMul(g, c)};
  }));
}

Var ScalarAdd(const Var& a, double c) {
  Tensor v = UnaryEval(a.value(), [c](double x) { return x + c; });
  return Var(MakeNode(std::move(v), "sadd", {a}, [](const Var& g) {
    return std::vector<Var>{g};
  }));
}

Var PowScalar(const Var& a, double p) {
  Tensor v = UnaryEval(a.value(), [p](double x) { return std::pow(x, p); });
  return Var(MakeNode(std::move(v), "pow", {a}, [a, p](const Var& g) {
    return std::vector<Var>{ScalarMul(Mul(g, PowScalar(a, p - 1.0)), p)};
  }));
}

Var Exp(const Var& a) {
  Tensor v = UnaryEval(a.value(), [](double x) { return std::exp(x); });
  return Var(MakeNode(std::move(v), "exp", {a}, [a](const Var& g) {
    return std::vector<Var>{Mul(g, Exp(a))};
  }));
}

Var Log(const Var& a) {
  Tensor v = UnaryEval(a.value(), [](double x) { return std::log(x); });
  return Var(MakeNode(std::move(v), "log", {a}, [a](const Var& g) {
    return std::vector<Var>{Div(g, a)};
  }));
}

Var Abs(const Var& a) {
  Tensor v = UnaryEval(a.value(), [](double x) { return std::fabs(x); });
  Tensor sign = UnaryEval(a.value(),
                          [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
  return Var(MakeNode(std::move(v), "abs", {a}, [sign](const Var& g) {
    return std::vector<Var>{Mul(g, Constant(sign))};
  }));
}

Var Relu(const Var& a) {
  Tensor v = UnaryEval(a.value(), [](double x) { return x > 0 ? x : 0.0; });
  Tensor mask = UnaryEval(a.value(), [](double x) { return x > 0 ? 1.0 : 0.0; });
  return Var(MakeNode(std::move(v), "relu", {a}, [mask](const Var& g) {
    return std::vector<Var>{Mul(g, Constant(mask))};
  }));
}

Var LeakyRelu(const Var& a, double slope) {
  Tensor v = UnaryEval(a.value(),
                       [slope](double x) { return x > 0 ? x : slope * x; });
  Tensor mask =
      UnaryEval(a.value(), [slope](double x) { return x > 0 ? 1.0 : slope; });
  return Var(MakeNode(std::move(v), "lrelu", {a}, [mask](const Var& g) {
    return std::vector<Var>{Mul(g, Constant(mask))};
  }));
}

Var Sigmoid(const Var& a) {
  return PowScalar(ScalarAdd(Exp(Neg(a)), 1.0), -1.0);
}

Var Swish(const Var& a) { return Mul(a, Sigmoid(a)); }

Var Reshape(const Var& a, std::vector<int> shape) {
  Tensor v = a.value().Reshaped(shape);
  auto orig = a.value().shape();
  return Var(MakeNode(std::move(v), "reshape", {a}, [orig](const Var& g) {
    return std::vector<Var>{Reshape(g, orig)};
  }));
}

Var Permute(const Var& a, std::vector<int> axes) {
  const auto& shape = a.value().shape();
  std::size_t r = shape.size();
  if (axes.size() != r) throw std::invalid_argument("permute rank mismatch");
  std::vector<int> out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = shape[static_cast<std::size_t>(axes[i])];
  Tensor out(out_shape);
  auto in_strides = StridesOf(shape);
  std::vector<std::int64_t> walk(r);
  for (std::size_t i = 0; i < r; ++i) walk[i] = in_strides[static_cast<std::size_t>(axes[i])];
  std::vector<int> idx(r, 0);
  const double* pa = a.value().data();
  double* po = out.data();
  std::int64_t n = out.numel();
  std::int64_t off = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    po[i] = pa[off];
    for (int d = static_cast<int>(r) - 1; d >= 0; --d) {
      std::size_t du = static_cast<std::size_t>(d);
      ++idx[du];
      off += walk[du];
      if (idx[du] < out_shape[du]) break;
      off -= walk[du] * out_shape[du];
      idx[du] = 0;
    }
  }
  std::vector<int> inv(r);
  for (std::size_t i = 0; i < r; ++i) inv[static_cast<std::size_t>(axes[i])] = static_cast<int>(i);
  return Var(MakeNode(std::move(out), "permute", {a}, [inv](const Var& g) {
    return std::vector<Var>{Permute(g, inv)};
  }));
}

Var Expand(const Var& a, std::vector<int> shape) {
  Tensor v = ExpandEval(a.value(), shape);
  auto orig = a.value().shape();
  return Var(MakeNode(std::move(v), "expand", {a}, [orig](const Var& g) {
    return std::vector<Var>{SumToShape(g, orig)};
  }));
}

Var Concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat of nothing");
  auto shape = parts[0].value().shape();
  std::size_t ax = static_cast<std::size_t>(axis < 0 ? axis + static_cast<int>(shape.size()) : axis);
  int total = 0;
  for (const auto& p : parts) total += p.value().shape()[ax];
  auto out_shape = shape;
  out_shape[ax] = total;
  Tensor out(out_shape);
  // outer x axis x inner layout
  std::int64_t inner = 1;
  for (std::size_t i = ax + 1; i < shape.size(); ++i) inner *= shape[i];
  std::int64_t outer = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= shape[i];
  std::int64_t dst_axis = total;
  std::vector<int> starts;
  int cursor = 0;
  for (const auto& p : parts) {
    const auto& ps = p.value().shape();
    std::int64_t paxis = ps[ax];
    const double* src = p.value().data();
    double* dst = out.data();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy(src + o * paxis * inner, src + (o + 1) * paxis * inner,
                dst + (o * dst_axis + cursor) * inner);
    }
    starts.push_back(cursor);
    cursor += static_cast<int>(paxis);
  }
  std::vector<int> lens;
  for (const auto& p : parts) lens.push_back(p.value().shape()[ax]);
  int a_int = static_cast<int>(ax);
  return Var(MakeNode(std::move(out), "concat", parts,
                      [starts, lens, a_int](const Var& g) {
                        std::vector<Var> gs;
                        for (std::size_t i = 0; i < starts.size(); ++i) {
                          gs.push_back(Slice(g, a_int, starts[i], lens[i]));
                        }
                        return gs;
                      }));
}

Var ZeroPad(const Var& a, int axis, int before, int after) {
  const auto& shape = a.value().shape();
  auto out_shape = shape;
  out_shape[static_cast<std::size_t>(axis)] += before + after;
  Tensor out(out_shape);
  std::int64_t inner = 1;
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) inner *= shape[i];
  std::int64_t outer = 1;
  for (std::size_t i = 0; i < static_cast<std::size_t>(axis); ++i) outer *= shape[i];
  std::int64_t src_axis = shape[static_cast<std::size_t>(axis)];
  std::int64_t dst_axis = out_shape[static_cast<std::size_t>(axis)];
  const double* src = a.value().data();
  double* dst = out.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy(src + o * src_axis * inner, src + (o + 1) * src_axis * inner,
              dst + (o * dst_axis + before) * inner);
  }
  int start = before;
  int len = static_cast<int>(src_axis);
  return Var(MakeNode(std::move(out), "zeropad", {a},
                      [axis, start, len](const Var& g) {
                        return std::vector<Var>{Slice(g, axis, start, len)};
                      }));
}

Var Slice(const Var& a, int axis, int start, int len) {
  const auto& shape = a.value().shape();
  std::size_t ax = static_cast<std::size_t>(axis < 0 ? axis + static_cast<int>(shape.size()) : axis);
  if (start < 0 || start + len > shape[ax]) {
    throw std::invalid_argument("slice out of range");
  }
  auto out_shape = shape;
  out_shape[ax] = len;
  Tensor out(out_shape);
  std::int64_t inner = 1;
  for (std::size_t i = ax + 1; i < shape.size(); ++i) inner *= shape[i];
  std::int64_t outer = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= shape[i];
  std::int64_t src_axis = shape[ax];
  const double* src = a.value().data();
  double* dst = out.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    std::copy(src + (o * src_axis + start) * inner,
              src + (o * src_axis + start + len) * inner,
              dst + o * len * inner);
  }
  int before = start;
  int after = static_cast<int>(src_axis) - start - len;
  int a_int = static_cast<int>(ax);
  return Var(MakeNode(std::move(out), "slice", {a},
                      [a_int, before, after](const Var& g) {
                        return std::vector<Var>{ZeroPad(g, a_int, before, after)};
                      }));
}

Var Sum(const Var& a) {
  double s = 0.0;
  const double* p = a.value().data();
  std::int64_t n = a.value().numel();
  for (std::int64_t i = 0; i < n; ++i) s += p[i];
  auto shape = a.value().shape();
  return Var(MakeNode(Tensor::Scalar(s), "sum", {a}, [shape](const Var& g) {
    return std::vector<Var>{Expand(g, shape)};
  }));
}

Var Mean(const Var& a) {
  std::int64_t n = a.value().numel();
  return ScalarMul(Sum(a), 1.0 / static_cast<double>(n));
}

Var SumAxes(const Var& a, std::vector<int> axes, bool keepdims) {
  const auto& shape = a.value().shape();
  std::size_t r = shape.size();
  std::vector<bool> reduce(r, false);
  for (int ax : axes) {
    if (ax < 0) ax += static_cast<int>(r);
    reduce[static_cast<std::size_t>(ax)] = true;
  }
  std::vector<int> keep_shape(r);
  std::vector<int> squeezed;
  for (std::size_t i = 0; i < r; ++i) {
    keep_shape[i] = reduce[i] ? 1 : shape[i];
    if (!reduce[i]) squeezed.push_back(shape[i]);
  }
  Tensor v = SumAxesEval(a.value(), reduce, keep_shape);
  std::vector<int> out_shape = keepdims ? keep_shape : squeezed;
  v = v.Reshaped(out_shape);
  auto orig = shape;
  return Var(MakeNode(std::move(v), "sumaxes", {a},
                      [orig, keep_shape](const Var& g) {
                        return std::vector<Var>{Expand(Reshape(g, keep_shape), orig)};
                      }));
}

Var MeanAxes(const Var& a, std::vector<int> axes, bool keepdims) {
  const auto& shape = a.value().shape();
  double n = 1;
  for (int ax : axes) {
    int i = ax < 0 ? ax + static_cast<int>(shape.size()) : ax;
    n *= shape[static_cast<std::size_t>(i)];
  }
  return ScalarMul(SumAxes(a, std::move(axes), keepdims), 1.0 / n);
}

Var MaxConst(const Var& a, int axis) {
  const auto& shape = a.value().shape();
  std::size_t ax = static_cast<std::size_t>(axis < 0 ? axis + static_cast<int>(shape.size()) : axis);
  auto out_shape = shape;
  out_shape[ax] = 1;
  Tensor out(out_shape);
  std::int64_t inner = 1;
  for (std::size_t i = ax + 1; i < shape.size(); ++i) inner *= shape[i];
  std::int64_t outer = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= shape[i];
  std::int64_t n_axis = shape[ax];
  const double* src = a.value().data();
  double* dst = out.data();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      double m = src[o * n_axis * inner + in];
      for (std::int64_t k = 1; k < n_axis; ++k) {
        m = std::max(m, src[(o * n_axis + k) * inner + in]);
      }
      dst[o * inner + in] = m;
    }
  }
  return Constant(std::move(out));
}

Var MatMul(const Var& a, const Var& b) {
  const auto& as = a.value().shape();
  const auto& bs = b.value().shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) {
    throw std::invalid_argument("matmul shape mismatch");
  }
  Tensor out({as[0], bs[1]});
  CMapMat am(a.value().data(), as[0], as[1]);
  CMapMat bm(b.value().data(), bs[0], bs[1]);
  MapMat om(out.data(), as[0], bs[1]);
  om.noalias() = am * bm;
  return Var(MakeNode(std::move(out), "matmul", {a, b}, [a, b](const Var& g) {
    Var ga, gb;
    if (a.requires_grad()) ga = MatMul(g, Permute(b, {1, 0}));
    if (b.requires_grad()) gb = MatMul(Permute(a, {1, 0}), g);
    return std::vector<Var>{ga, gb};
  }));
}

Var Bmm(const Var& a, const Var& b) {
  const auto& as = a.value().shape();
  const auto& bs = b.value().shape();
  if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1]) {
    throw std::invalid_argument("bmm shape mismatch");
  }
  int B = as[0], m = as[1], k = as[2], n = bs[2];
  Tensor out({B, m, n});
  for (int i = 0; i < B; ++i) {
    CMapMat am(a.value().data() + static_cast<std::int64_t>(i) * m * k, m, k);
    CMapMat bm(b.value().data() + static_cast<std::int64_t>(i) * k * n, k, n);
    MapMat om(out.data() + static_cast<std::int64_t>(i) * m * n, m, n);
    om.noalias() = am * bm;
  }
  return Var(MakeNode(std::move(out), "bmm", {a, b}, [a, b](const Var& g) {
    Var ga, gb;
    if (a.requires_grad()) ga = Bmm(g, Permute(b, {0, 2, 1}));
    if (b.requires_grad()) gb = Bmm(Permute(a, {0, 2, 1}), g);
    return std::vector<Var>{ga, gb};
  }));
}

Var SoftmaxLastAxis(const Var& a) {
  Var shifted = Sub(a, MaxConst(a, -1));
  Var e = Exp(shifted);
  Var denom = SumAxes(e, {-1}, true);
  return Div(e, denom);
}

Var Conv2d(const Var& x, const Var& w, int sh, int sw, int ph, int pw) {
  Tensor y = Conv2dEval(x.value(), w.value(), sh, sw, ph, pw);
  int in_h = x.value().shape()[2];
  int in_w = x.value().shape()[3];
  int kh = w.value().shape()[2];
  int kw = w.value().shape()[3];
  return Var(MakeNode(std::move(y), "conv2d", {x, w},
                      [x, w, in_h, in_w, kh, kw, sh, sw, ph, pw](const Var& g) {
                        Var gx, gw;
                        if (x.requires_grad()) {
                          gx = Conv2dInputGrad(g, w, in_h, in_w, sh, sw, ph, pw);
                        }
                        if (w.requires_grad()) {
                          gw = Conv2dWeightGrad(x, g, kh, kw, sh, sw, ph, pw);
                        }
                        return std::vector<Var>{gx, gw};
                      }));
}

Var Conv2dInputGrad(const Var& gy, const Var& w, int in_h, int in_w, int sh,
                    int sw, int ph, int pw) {
  Tensor gx = Conv2dInputGradEval(gy.value(), w.value(), in_h, in_w, sh, sw, ph, pw);
  int kh = w.value().shape()[2];
  int kw = w.value().shape()[3];
  return Var(MakeNode(std::move(gx), "conv2d_dx", {gy, w},
                      [gy, w, kh, kw, sh, sw, ph, pw](const Var& u) {
                        // <u, dX(gy, w)> is bilinear in (gy, w).
                        Var d_gy, d_w;
                        if (gy.requires_grad()) d_gy = Conv2d(u, w, sh, sw, ph, pw);
                        if (w.requires_grad()) {
                          d_w = Conv2dWeightGrad(u, gy, kh, kw, sh, sw, ph, pw);
                        }
                        return std::vector<Var>{d_gy, d_w};
                      }));
}

Var Conv2dWeightGrad(const Var& x, const Var& gy, int kh, int kw, int sh,
                     int sw, int ph, int pw) {
  Tensor gw = Conv2dWeightGradEval(x.value(), gy.value(), kh, kw, sh, sw, ph, pw);
  int in_h = x.value().shape()[2];
  int in_w = x.value().shape()[3];
  return Var(MakeNode(std::move(gw), "conv2d_dw", {x, gy},
                      [x, gy, in_h, in_w, sh, sw, ph, pw](const Var& v) {
                        Var d_x, d_gy;
                        if (x.requires_grad()) {
                          d_x = Conv2dInputGrad(gy, v, in_h, in_w, sh, sw, ph, pw);
                        }
                        if (gy.requires_grad()) d_gy = Conv2d(x, v, sh, sw, ph, pw);
                        return std::vector<Var>{d_x, d_gy};
                      }));
}

namespace {

Tensor DepthwiseConv1dEval(const Tensor& x, const Tensor& w) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  int n = xs[0], c = xs[1], len = xs[2], k = ws[1];
  if (ws[0] != c) throw std::invalid_argument("depthwise channel mismatch");
  int lo = len - k + 1;
  if (lo < 1) throw std::invalid_argument("depthwise input too short");
  Tensor y({n, c, lo});
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double* xc = x.data() + (static_cast<std::int64_t>(b) * c + ch) * len;
      const double* wc = w.data() + static_cast<std::int64_t>(ch) * k;
      double* yc = y.data() + (static_cast<std::int64_t>(b) * c + ch) * lo;
      for (int t = 0; t < lo; ++t) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += xc[t + j] * wc[j];
        yc[t] = s;
      }
    }
  }
  return y;
}

Tensor DepthwiseConv1dDxEval(const Tensor& gy, const Tensor& w, int in_len) {
  const auto& gs = gy.shape();
  int n = gs[0], c = gs[1], lo = gs[2], k = w.shape()[1];
  Tensor gx({n, c, in_len});
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double* gc = gy.data() + (static_cast<std::int64_t>(b) * c + ch) * lo;
      const double* wc = w.data() + static_cast<std::int64_t>(ch) * k;
      double* xc = gx.data() + (static_cast<std::int64_t>(b) * c + ch) * in_len;
      for (int t = 0; t < lo; ++t) {
        for (int j = 0; j < k; ++j) xc[t + j] += gc[t] * wc[j];
      }
    }
  }
  return gx;
}

Tensor DepthwiseConv1dDwEval(const Tensor& x, const Tensor& gy, int k) {
  const auto& xs = x.shape();
  const auto& gs = gy.shape();
  int n = xs[0], c = xs[1], len = xs[2], lo = gs[2];
  Tensor gw({c, k});
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const double* xc = x.data() + (static_cast<std::int64_t>(b) * c + ch) * len;
      const double* gc = gy.data() + (static_cast<std::int64_t>(b) * c + ch) * lo;
      double* wc = gw.data() + static_cast<std::int64_t>(ch) * k;
      for (int t = 0; t < lo; ++t) {
        for (int j = 0; j < k; ++j) wc[j] += xc[t + j] * gc[t];
      }
    }
  }
  return gw;
}

Var DepthwiseConv1dDx(const Var& gy, const Var& w, int in_len);
Var DepthwiseConv1dDw(const Var& x, const Var& gy, int k);

Var DepthwiseConv1dDx(const Var& gy, const Var& w, int in_len) {
  Tensor gx = DepthwiseConv1dDxEval(gy.value(), w.value(), in_len);
  int k = w.value().shape()[1];
  return Var(MakeNode(std::move(gx), "dw1d_dx", {gy, w},
                      [gy, w, k](const Var& u) {
                        Var d_gy, d_w;
                        if (gy.requires_grad()) d_gy = DepthwiseConv1d(u, w);
                        if (w.requires_grad()) d_w = DepthwiseConv1dDw(u, gy, k);
                        return std::vector<Var>{d_gy, d_w};
                      }));
}

Var DepthwiseConv1dDw(const Var& x, const Var& gy, int k) {
  Tensor gw = DepthwiseConv1dDwEval(x.value(), gy.value(), k);
  int in_len = x.value().shape()[2];
  return Var(MakeNode(std::move(gw), "dw1d_dw", {x, gy},
                      [x, gy, in_len](const Var& v) {
                        Var d_x, d_gy;
                        if (x.requires_grad()) d_x = DepthwiseConv1dDx(gy, v, in_len);
                        if (gy.requires_grad()) d_gy = DepthwiseConv1d(x, v);
                        return std::vector<Var>{d_x, d_gy};
                      }));
}

}  // namespace

Var DepthwiseConv1d(const Var& x, const Var& w) {
  Tensor y = DepthwiseConv1dEval(x.value(), w.value());
  int in_len = x.value().shape()[2];
  int k = w.value().shape()[1];
  return Var(MakeNode(std::move(y), "dw1d", {x, w},
                      [x, w, in_len, k](const Var& g) {
                        Var gx, gw;
                        if (x.requires_grad()) gx = DepthwiseConv1dDx(g, w, in_len);
                        if (w.requires_grad()) gw = DepthwiseConv1dDw(x, g, k);
                        return std::vector<Var>{gx, gw};
                      }));
}

Var AvgPool2d(const Var& x, int kh, int kw) {
  const auto& xs = x.value().shape();
  if (xs.size() != 4) throw std::invalid_argument("avgpool expects 4-D");
  if (xs[2] % kh != 0 || xs[3] % kw != 0) {
    throw std::invalid_argument("avgpool dims must divide exactly");
  }
  int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  int ho = h / kh, wo = w / kw;
  Tensor y({n, c, ho, wo});
  const double* px = x.value().data();
  double* py = y.data();
  double inv = 1.0 / (kh * kw);
  for (int b = 0; b < n * c; ++b) {
    const double* xc = px + static_cast<std::int64_t>(b) * h * w;
    double* yc = py + static_cast<std::int64_t>(b) * ho * wo;
    for (int oh = 0; oh < ho; ++oh) {
      for (int ow = 0; ow < wo; ++ow) {
        double s = 0.0;
        for (int i = 0; i < kh; ++i) {
          for (int j = 0; j < kw; ++j) {
            s += xc[static_cast<std::int64_t>(oh * kh + i) * w + ow * kw + j];
          }
        }
        yc[static_cast<std::int64_t>(oh) * wo + ow] = s * inv;
      }
    }
  }
  return Var(MakeNode(std::move(y), "avgpool", {x}, [kh, kw](const Var& g) {
    return std::vector<Var>{
        ScalarMul(UpsampleNearest2d(g, kh, kw), 1.0 / (kh * kw))};
  }));
}

Var UpsampleNearest2d(const Var& x, int fh, int fw) {
  const auto& xs = x.value().shape();
  if (xs.size() != 4) throw std::invalid_argument("upsample expects 4-D");
  int n = xs[0], c = xs[1], h = xs[2], w = xs[3];
  int ho = h * fh, wo = w * fw;
  Tensor y({n, c, ho, wo});
  const double* px = x.value().data();
  double* py = y.data();
  for (int b = 0; b < n * c; ++b) {
    const double* xc = px + static_cast<std::int64_t>(b) * h * w;
    double* yc = py + static_cast<std::int64_t>(b) * ho * wo;
    for (int oh = 0; oh < ho; ++oh) {
      for (int ow = 0; ow < wo; ++ow) {
        yc[static_cast<std::int64_t>(oh) * wo + ow] =
            xc[static_cast<std::int64_t>(oh / fh) * w + ow / fw];
      }
    }
  }
  return Var(MakeNode(std::move(y), "upsample", {x}, [fh, fw](const Var& g) {
    return std::vector<Var>{
        ScalarMul(AvgPool2d(g, fh, fw), static_cast<double>(fh * fw))};
  }));
}

Var PadEdgeLast(const Var& x, int left, int right) {
  const auto& xs = x.value().shape();
  std::size_t r = xs.size();
  int w = xs[r - 1];
  auto out_shape = xs;
  out_shape[r - 1] = w + left + right;
  Tensor y(out_shape);
  std::int64_t outer = x.value().numel() / w;
  const double* px = x.value().data();
  double* py = y.data();
  int wo = w + left + right;
  for (std::int64_t o = 0; o < outer; ++o) {
    const double* src = px + o * w;
    double* dst = py + o * wo;
    for (int i = 0; i < left; ++i) dst[i] = src[0];
    std::copy(src, src + w, dst + left);
    for (int i = 0; i < right; ++i) dst[left + w + i] = src[w - 1];
  }
  return Var(MakeNode(std::move(y), "pad_edge", {x},
                      [left, right, w](const Var& g) {
    // First-order adjoint: pad-region gradients fold onto the edge cells.
    const auto& gs = g.value().shape();
    std::size_t gr = gs.size();
    auto in_shape = gs;
    in_shape[gr - 1] = w;
    Tensor gx(in_shape);
    std::int64_t wo = gs[gr - 1];
    std::int64_t outer = g.value().numel() / wo;
    const double* pg = g.value().data();
    double* pgx = gx.data();
    for (std::int64_t o = 0; o < outer; ++o) {
      const double* src = pg + o * wo;
      double* dst = pgx + o * w;
      std::copy(src + left, src + left + w, dst);
      for (int i = 0; i < left; ++i) dst[0] += src[i];
      for (int i = 0; i < right; ++i) dst[w - 1] += src[left + w + i];
    }
    auto n = std::make_shared<Node>();
    n->value = std::move(gx);
    n->op = "pad_edge_adjoint";
    n->inputs.push_back(g.node_ptr());
    n->requires_grad = g.requires_grad();
    if (n->requires_grad) {
      n->grad_fn = [](const Var&) -> std::vector<Var> {
        throw std::logic_error("second derivative through pad_edge unsupported");
      };
    }
    return std::vector<Var>{Var(n)};
  }));
}

std::vector<Var> Grad(const Var& output, const std::vector<Var>& wrt) {
  if (!output.defined() || output.value().numel() != 1) {
    throw std::invalid_argument("Grad requires a defined scalar output");
  }
  // Post-order over the requires_grad subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  if (output.requires_grad()) {
    stack.emplace_back(output.node(), 0);
    seen.insert(output.node());
  }
  while (!stack.empty()) {
    auto& [node, i] = stack.back();
    if (i < node->inputs.size()) {
      Node* child = node->inputs[i].get();
      ++i;
      if (child && child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::unordered_map<Node*, Var> gmap;
  if (output.requires_grad()) {
    gmap[output.node()] = Constant(Tensor::Full(output.value().shape(), 1.0));
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    auto git = gmap.find(n);
    if (git == gmap.end() || !n->grad_fn) continue;
    std::vector<Var> gs = n->grad_fn(git->second);
    for (std::size_t i = 0; i < n->inputs.size(); ++i) {
      Node* in = n->inputs[i].get();
      if (!in || !in->requires_grad) continue;
      if (i >= gs.size() || !gs[i].defined()) continue;
      auto jt = gmap.find(in);
      if (jt == gmap.end()) {
        gmap[in] = gs[i];
      } else {
        jt->second = Add(jt->second, gs[i]);
      }
    }
  }
  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const auto& v : wrt) {
    auto it = gmap.find(v.node());
    if (it != gmap.end()) {
      result.push_back(it->second);
    } else {
      result.push_back(Constant(Tensor::Zeros(v.value().shape())));
    }
  }
  return result;
}

}  // namespace ad
}  // namespace specadapt
