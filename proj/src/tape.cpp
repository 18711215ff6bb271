#include "mbd/tape.hpp"

#include <cassert>
#include <cmath>

namespace mbd {

namespace {

void add_into(Tensor& dst, const Tensor& src) {
  float* d = dst.data();
  const float* s = src.data();
  const std::int64_t n = dst.numel();
  for (std::int64_t i = 0; i < n; ++i) d[i] += s[i];
}

}  // namespace

Value Tape::make(Tensor v, std::function<void(Tape&, const Tensor&)> bwd, bool stopped) {
#ifndef NDEBUG
  assert(v.all_finite() && "non-finite value produced on tape");
#endif
  Node n;
  n.value = std::move(v);
  n.stopped = stopped;
  n.backward = std::move(bwd);
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Value v) {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) throw Error("invalid tape value handle");
  return nodes_[static_cast<size_t>(v.id)];
}

const Tape::Node& Tape::node(Value v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) throw Error("invalid tape value handle");
  return nodes_[static_cast<size_t>(v.id)];
}

Tensor* Tape::grad_slot(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.stopped) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

void Tape::check_same_shape(Value a, Value b, const char* op) const {
  if (!node(a).value.same_shape(node(b).value)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(node(a).value.shape()) + " vs " +
                     shape_str(node(b).value.shape()));
  }
}

Value Tape::leaf(Tensor v) { return make(std::move(v), nullptr, false); }

Value Tape::constant(Tensor v) { return make(std::move(v), nullptr, true); }

Value Tape::stop_gradient(Value x) { return make(node(x).value, nullptr, true); }

const Tensor& Tape::val(Value v) const { return node(v).value; }

Tensor Tape::grad(Value v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

Value Tape::add(Value a, Value b) {
  check_same_shape(a, b, "add");
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
  int ia = a.id, ib = b.id;
  return make(std::move(out), [ia, ib](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_slot(ia)) add_into(*ga, g);
    if (Tensor* gb = t.grad_slot(ib)) add_into(*gb, g);
  });
}

Value Tape::sub(Value a, Value b) {
  check_same_shape(a, b, "sub");
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
  int ia = a.id, ib = b.id;
  return make(std::move(out), [ia, ib](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_slot(ia)) add_into(*ga, g);
    if (Tensor* gb = t.grad_slot(ib)) {
      for (std::int64_t i = 0; i < g.numel(); ++i) (*gb)[i] -= g[i];
    }
  });
}

Value Tape::mul(Value a, Value b) {
  check_same_shape(a, b, "mul");
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
  int ia = a.id, ib = b.id;
  return make(std::move(out), [ia, ib](Tape& t, const Tensor& g) {
    if (Tensor* ga = t.grad_slot(ia)) {
      const Tensor& bvv = t.nodes_[static_cast<size_t>(ib)].value;
      for (std::int64_t i = 0; i < g.numel(); ++i) (*ga)[i] += bvv[i] * g[i];
    }
    if (Tensor* gb = t.grad_slot(ib)) {
      const Tensor& avv = t.nodes_[static_cast<size_t>(ia)].value;
      for (std::int64_t i = 0; i < g.numel(); ++i) (*gb)[i] += avv[i] * g[i];
    }
  });
}

Value Tape::div(Value a, Value b) {
  check_same_shape(a, b, "div");
  const Tensor& av = node(a).value;
  const Tensor& bv = node(b).value;
  Tensor out(av.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] / bv[i];
  int ia = a.id, ib = b.id;
  return make(std::move(out), [ia, ib](Tape& t, const Tensor& g) {
    const Tensor& avv = t.nodes_[static_cast<size_t>(ia)].value;
    const Tensor& bvv = t.nodes_[static_cast<size_t>(ib)].value;
    if (Tensor* ga = t.grad_slot(ia)) {
      for (std::int64_t i = 0; i < g.numel(); ++i) (*ga)[i] += g[i] / bvv[i];
    }
    if (Tensor* gb = t.grad_slot(ib)) {
      for (std::int64_t i = 0; i < g.numel(); ++i) (*gb)[i] -= g[i] * avv[i] / (bvv[i] * bvv[i]);
    }
  });
}

Value Tape::affine(Value x, float scale, float shift) {
  const Tensor& xv = node(x).value;
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = scale * xv[i] + shift;
  int ix = x.id;
  return make(std::move(out), [ix, scale](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) {
      for (std::int64_t i = 0; i < g.numel(); ++i) (*gx)[i] += scale * g[i];
    }
  });
}

Value Tape::abs(Value x) {
  const Tensor& xv = node(x).value;
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::fabs(xv[i]);
  int ix = x.id;
  return make(std::move(out), [ix](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) {
      const Tensor& xvv = t.nodes_[static_cast<size_t>(ix)].value;
      // Subgradient 0 at exactly 0.
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        (*gx)[i] += (xvv[i] > 0.0f ? 1.0f : (xvv[i] < 0.0f ? -1.0f : 0.0f)) * g[i];
      }
    }
  });
}

Value Tape::elu(Value x) {
  const Tensor& xv = node(x).value;
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    const float v = xv[i];
    out[i] = v > 0.0f ? v : std::expm1(v);
  }
  int ix = x.id;
  return make(std::move(out), [ix](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) {
      const Tensor& xvv = t.nodes_[static_cast<size_t>(ix)].value;
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        const float v = xvv[i];
        (*gx)[i] += (v > 0.0f ? 1.0f : std::exp(v)) * g[i];
      }
    }
  });
}

Value Tape::sigmoid(Value x) {
  const Tensor& xv = node(x).value;
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    const float v = xv[i];
    if (v >= 0.0f) {
      out[i] = 1.0f / (1.0f + std::exp(-v));
    } else {
      const float e = std::exp(v);
      out[i] = e / (1.0f + e);
    }
  }
  int ix = x.id;
  int iy = static_cast<int>(nodes_.size());  // id the new node will get
  return make(std::move(out), [ix, iy](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) {
      const Tensor& s = t.nodes_[static_cast<size_t>(iy)].value;
      for (std::int64_t i = 0; i < g.numel(); ++i) (*gx)[i] += s[i] * (1.0f - s[i]) * g[i];
    }
  });
}

Value Tape::exp_neg(Value x) {
  const Tensor& xv = node(x).value;
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::exp(-xv[i]);
  int ix = x.id;
  int iy = static_cast<int>(nodes_.size());
  return make(std::move(out), [ix, iy](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) {
      const Tensor& e = t.nodes_[static_cast<size_t>(iy)].value;
      for (std::int64_t i = 0; i < g.numel(); ++i) (*gx)[i] -= e[i] * g[i];
    }
  });
}

Value Tape::clip(Value x, float lo, float hi) {
  const Tensor& xv = node(x).value;
  Tensor out(xv.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(xv[i], lo, hi);
  int ix = x.id;
  return make(std::move(out), [ix, lo, hi](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) {
      const Tensor& xvv = t.nodes_[static_cast<size_t>(ix)].value;
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        if (xvv[i] >= lo && xvv[i] <= hi) (*gx)[i] += g[i];
      }
    }
  });
}

Value Tape::concat_channels(const std::vector<Value>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const Tensor& first = node(xs[0]).value;
  if (first.rank() != 4) throw ShapeError("concat_channels: rank-4 tensors required");
  const int n = first.dim(0), h = first.dim(2), w = first.dim(3);
  int c_total = 0;
  for (Value v : xs) {
    const Tensor& t = node(v).value;
    if (t.rank() != 4 || t.dim(0) != n || t.dim(2) != h || t.dim(3) != w) {
      throw ShapeError("concat_channels: incompatible shape " + shape_str(t.shape()));
    }
    c_total += t.dim(1);
  }
  Tensor out({n, c_total, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  std::vector<int> ids;
  std::vector<int> chans;
  for (Value v : xs) {
    ids.push_back(v.id);
    chans.push_back(node(v).value.dim(1));
  }
  for (int nn = 0; nn < n; ++nn) {
    int co = 0;
    for (size_t k = 0; k < ids.size(); ++k) {
      const Tensor& src = nodes_[static_cast<size_t>(ids[k])].value;
      const int ck = chans[k];
      std::copy_n(src.data() + static_cast<std::int64_t>(nn) * ck * hw, static_cast<size_t>(ck * hw),
                  out.data() + (static_cast<std::int64_t>(nn) * c_total + co) * hw);
      co += ck;
    }
  }
  return make(std::move(out), [ids, chans, n, hw, c_total](Tape& t, const Tensor& g) {
    int co = 0;
    for (size_t k = 0; k < ids.size(); ++k) {
      const int ck = chans[k];
      if (Tensor* gx = t.grad_slot(ids[k])) {
        for (int nn = 0; nn < n; ++nn) {
          const float* gp = g.data() + (static_cast<std::int64_t>(nn) * c_total + co) * hw;
          float* dp = gx->data() + static_cast<std::int64_t>(nn) * ck * hw;
          for (std::int64_t i = 0; i < ck * hw; ++i) dp[i] += gp[i];
        }
      }
      co += ck;
    }
  });
}

Value Tape::slice_channels(Value x, int c0, int c1) {
  const Tensor& xv = node(x).value;
  if (xv.rank() != 4) throw ShapeError("slice_channels: rank-4 tensor required");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  if (c0 < 0 || c1 > c || c0 >= c1) throw ShapeError("slice_channels: bad channel range");
  const int ck = c1 - c0;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({n, ck, h, w});
  for (int nn = 0; nn < n; ++nn) {
    std::copy_n(xv.data() + (static_cast<std::int64_t>(nn) * c + c0) * hw, static_cast<size_t>(ck * hw),
                out.data() + static_cast<std::int64_t>(nn) * ck * hw);
  }
  int ix = x.id;
  return make(std::move(out), [ix, c0, c, n, ck, hw](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) {
      for (int nn = 0; nn < n; ++nn) {
        const float* gp = g.data() + static_cast<std::int64_t>(nn) * ck * hw;
        float* dp = gx->data() + (static_cast<std::int64_t>(nn) * c + c0) * hw;
        for (std::int64_t i = 0; i < ck * hw; ++i) dp[i] += gp[i];
      }
    }
  });
}

Value Tape::channel_mean(Value x) {
  const Tensor& xv = node(x).value;
  if (xv.rank() != 4) throw ShapeError("channel_mean: rank-4 tensor required");
  const int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({n, 1, h, w});
  const float inv_c = 1.0f / static_cast<float>(c);
  for (int nn = 0; nn < n; ++nn) {
    float* op = out.data() + static_cast<std::int64_t>(nn) * hw;
    for (int cc = 0; cc < c; ++cc) {
      const float* xp = xv.data() + (static_cast<std::int64_t>(nn) * c + cc) * hw;
      if (cc == 0) {
        for (std::int64_t i = 0; i < hw; ++i) op[i] = xp[i];
      } else {
        for (std::int64_t i = 0; i < hw; ++i) op[i] += xp[i];
      }
    }
    for (std::int64_t i = 0; i < hw; ++i) op[i] *= inv_c;
  }
  int ix = x.id;
  return make(std::move(out), [ix, n, c, hw, inv_c](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) {
      for (int nn = 0; nn < n; ++nn) {
        const float* gp = g.data() + static_cast<std::int64_t>(nn) * hw;
        for (int cc = 0; cc < c; ++cc) {
          float* dp = gx->data() + (static_cast<std::int64_t>(nn) * c + cc) * hw;
          for (std::int64_t i = 0; i < hw; ++i) dp[i] += inv_c * gp[i];
        }
      }
    }
  });
}

Value Tape::repeat_channels(Value x, int copies) {
  const Tensor& xv = node(x).value;
  if (xv.rank() != 4 || xv.dim(1) != 1) throw ShapeError("repeat_channels: rank-4 single-channel tensor required");
  if (copies < 1) throw ShapeError("repeat_channels: copies must be >= 1");
  const int n = xv.dim(0), h = xv.dim(2), w = xv.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor out({n, copies, h, w});
  for (int nn = 0; nn < n; ++nn) {
    const float* xp = xv.data() + static_cast<std::int64_t>(nn) * hw;
    for (int cc = 0; cc < copies; ++cc) {
      std::copy_n(xp, static_cast<size_t>(hw), out.data() + (static_cast<std::int64_t>(nn) * copies + cc) * hw);
    }
  }
  int ix = x.id;
  return make(std::move(out), [ix, n, copies, hw](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) {
      for (int nn = 0; nn < n; ++nn) {
        float* dp = gx->data() + static_cast<std::int64_t>(nn) * hw;
        for (int cc = 0; cc < copies; ++cc) {
          const float* gp = g.data() + (static_cast<std::int64_t>(nn) * copies + cc) * hw;
          for (std::int64_t i = 0; i < hw; ++i) dp[i] += gp[i];
        }
      }
    }
  });
}

Value Tape::conv2d(Value x, Value w, Value b, int stride, int pad) {
  Tensor out = kernels::conv2d(node(x).value, node(w).value, node(b).value, stride, pad);
  int ix = x.id, iw = w.id, ib = b.id;
  return make(std::move(out), [ix, iw, ib, stride, pad](Tape& t, const Tensor& g) {
    kernels::conv2d_backward(t.nodes_[static_cast<size_t>(ix)].value, t.nodes_[static_cast<size_t>(iw)].value,
                             stride, pad, g, t.grad_slot(ix), t.grad_slot(iw), t.grad_slot(ib));
  });
}

Value Tape::upsample2x(Value x) {
  Tensor out = kernels::upsample2x_bilinear(node(x).value);
  int ix = x.id;
  return make(std::move(out), [ix](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) add_into(*gx, kernels::upsample2x_bilinear_backward(g));
  });
}

Value Tape::downsample2x(Value x) {
  Tensor out = kernels::downsample2x_area(node(x).value);
  int ix = x.id;
  return make(std::move(out), [ix](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) add_into(*gx, kernels::downsample2x_area_backward(g));
  });
}

Value Tape::box3_mean(Value x) {
  Tensor out = kernels::box3_mean(node(x).value);
  int ix = x.id;
  return make(std::move(out), [ix](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) add_into(*gx, kernels::box3_mean_backward(g));
  });
}

Value Tape::diff_x(Value x) {
  Tensor out = kernels::diff_x(node(x).value);
  int ix = x.id;
  return make(std::move(out), [ix](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) add_into(*gx, kernels::diff_x_backward(g));
  });
}

Value Tape::diff_y(Value x) {
  Tensor out = kernels::diff_y(node(x).value);
  int ix = x.id;
  return make(std::move(out), [ix](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) add_into(*gx, kernels::diff_y_backward(g));
  });
}

Value Tape::warp_horizontal(Value src, Value disp, WarpDir dir) {
  Tensor out = kernels::warp_horizontal(node(src).value, node(disp).value, dir);
  int is = src.id, id = disp.id;
  return make(std::move(out), [is, id, dir](Tape& t, const Tensor& g) {
    kernels::warp_horizontal_backward(t.nodes_[static_cast<size_t>(is)].value,
                                      t.nodes_[static_cast<size_t>(id)].value, dir, g, t.grad_slot(is),
                                      t.grad_slot(id));
  });
}

Value Tape::sum(Value x) {
  const Tensor& xv = node(x).value;
  Tensor out = Tensor::scalar(static_cast<float>(xv.sum64()));
  int ix = x.id;
  return make(std::move(out), [ix](Tape& t, const Tensor& g) {
    if (Tensor* gx = t.grad_slot(ix)) {
      const float gv = g[0];
      for (std::int64_t i = 0; i < gx->numel(); ++i) (*gx)[i] += gv;
    }
  });
}

Value Tape::mean(Value x) {
  const std::int64_t n = node(x).value.numel();
  return affine(sum(x), 1.0f / static_cast<float>(n), 0.0f);
}

void Tape::backward(Value loss) {
  const Node& l = node(loss);
  if (l.value.numel() != 1) throw ShapeError("backward: loss must be a scalar, got " + shape_str(l.value.shape()));
  backward(loss, Tensor::scalar(1.0f));
}

void Tape::backward(Value y, const Tensor& seed) {
  if (backward_done_) throw Error("backward() already ran on this tape; call zero_grad() first");
  Node& l = node(y);
  if (l.stopped) throw Error("backward: target is a non-differentiable node");
  seed.require_shape(l.value.shape(), "backward seed");
  backward_done_ = true;
  if (l.grad.empty()) l.grad = Tensor(l.value.shape());
  add_into(l.grad, seed);
  for (int i = y.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad = Tensor();
  backward_done_ = false;
}

}  // namespace mbd
