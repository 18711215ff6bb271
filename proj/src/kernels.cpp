#include "mbd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace mbd::kernels {

namespace {

constexpr int kMr = 4;   // GEMM row block
constexpr int kNr = 32;  // GEMM column block (two 16-float vectors)

void require_rank4(const Tensor& t, const char* what) {
  if (t.rank() != 4) throw ShapeError(std::string(what) + ": expected rank-4 NCHW tensor, got " + shape_str(t.shape()));
}

}  // namespace

void gemm_nn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
             bool accumulate) {
  for (int i = 0; i < m; i += kMr) {
    const int mh = std::min(kMr, m - i);
    for (int j = 0; j < n; j += kNr) {
      const int nw = std::min(kNr, n - j);
      if (mh == kMr && nw == kNr) {
        float t[kMr][kNr];
        for (int r = 0; r < kMr; ++r) {
          if (accumulate) {
            std::memcpy(t[r], c + static_cast<size_t>(i + r) * ldc + j, kNr * sizeof(float));
          } else {
            std::memset(t[r], 0, kNr * sizeof(float));
          }
        }
        for (int p = 0; p < k; ++p) {
          const float* __restrict bp = b + static_cast<size_t>(p) * ldb + j;
          for (int r = 0; r < kMr; ++r) {
            const float av = a[static_cast<size_t>(i + r) * lda + p];
            float* __restrict tr = t[r];
            for (int cc = 0; cc < kNr; ++cc) tr[cc] += av * bp[cc];
          }
        }
        for (int r = 0; r < kMr; ++r) {
          std::memcpy(c + static_cast<size_t>(i + r) * ldc + j, t[r], kNr * sizeof(float));
        }
      } else {
        // Edge tile, generic bounds.
        for (int r = 0; r < mh; ++r) {
          float* __restrict cr = c + static_cast<size_t>(i + r) * ldc + j;
          float t[kNr];
          for (int cc = 0; cc < nw; ++cc) t[cc] = accumulate ? cr[cc] : 0.0f;
          const float* ar = a + static_cast<size_t>(i + r) * lda;
          for (int p = 0; p < k; ++p) {
            const float av = ar[p];
            const float* __restrict bp = b + static_cast<size_t>(p) * ldb + j;
            for (int cc = 0; cc < nw; ++cc) t[cc] += av * bp[cc];
          }
          for (int cc = 0; cc < nw; ++cc) cr[cc] = t[cc];
        }
      }
    }
  }
}

void gemm_abt(int m, int n, int k2, const float* a, int lda, const float* b, int ldb, float* c, int ldc) {
  // Row-row dot products with 16 independent accumulator lanes; the lane
  // combine and the tail both run in a fixed order, so results are stable
  // from run to run.
  constexpr int kLanes = 16;
  const int k_main = k2 - k2 % kLanes;
  for (int i = 0; i < m; ++i) {
    const float* __restrict ar = a + static_cast<size_t>(i) * lda;
    for (int j = 0; j < n; ++j) {
      const float* __restrict br = b + static_cast<size_t>(j) * ldb;
      float acc[kLanes] = {0};
      for (int p = 0; p < k_main; p += kLanes) {
        for (int l = 0; l < kLanes; ++l) acc[l] += ar[p + l] * br[p + l];
      }
      float dot = 0.0f;
      for (int l = 0; l < kLanes; ++l) dot += acc[l];
      for (int p = k_main; p < k2; ++p) dot += ar[p] * br[p];
      c[static_cast<size_t>(i) * ldc + j] += dot;
    }
  }
}

namespace {

// Unpacks one NCHW sample into a [Cin*kh*kw, Hout*Wout] patch matrix.
void im2col(const float* x, int c_in, int h, int w, int kh, int kw, int stride, int pad, int h_out, int w_out,
            float* col) {
  const std::int64_t n = static_cast<std::int64_t>(h_out) * w_out;
  for (int ci = 0; ci < c_in; ++ci) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        float* row = col + (static_cast<std::int64_t>(ci) * kh * kw + ky * kw + kx) * n;
        for (int oy = 0; oy < h_out; ++oy) {
          const int iy = oy * stride + ky - pad;
          float* dst = row + static_cast<std::int64_t>(oy) * w_out;
          if (iy < 0 || iy >= h) {
            std::memset(dst, 0, static_cast<size_t>(w_out) * sizeof(float));
            continue;
          }
          const float* srow = x + (static_cast<std::int64_t>(ci) * h + iy) * w;
          if (stride == 1) {
            const int ix0 = kx - pad;
            int o_lo = std::max(0, -ix0);
            int o_hi = std::max(o_lo, std::min(w_out, w - ix0));
            if (o_lo > 0) std::memset(dst, 0, static_cast<size_t>(o_lo) * sizeof(float));
            if (o_hi > o_lo) std::memcpy(dst + o_lo, srow + ix0 + o_lo, static_cast<size_t>(o_hi - o_lo) * sizeof(float));
            if (o_hi < w_out) std::memset(dst + o_hi, 0, static_cast<size_t>(w_out - o_hi) * sizeof(float));
          } else {
            for (int ox = 0; ox < w_out; ++ox) {
              const int ix = ox * stride + kx - pad;
              dst[ox] = (ix >= 0 && ix < w) ? srow[ix] : 0.0f;
            }
          }
        }
      }
    }
  }
}

// Transpose of im2col: scatter-adds a patch-matrix gradient back to NCHW.
void col2im_accum(const float* col, int c_in, int h, int w, int kh, int kw, int stride, int pad, int h_out, int w_out,
                  float* gx) {
  const std::int64_t n = static_cast<std::int64_t>(h_out) * w_out;
  for (int ci = 0; ci < c_in; ++ci) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const float* row = col + (static_cast<std::int64_t>(ci) * kh * kw + ky * kw + kx) * n;
        for (int oy = 0; oy < h_out; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          float* drow = gx + (static_cast<std::int64_t>(ci) * h + iy) * w;
          const float* src = row + static_cast<std::int64_t>(oy) * w_out;
          if (stride == 1) {
            const int ix0 = kx - pad;
            int o_lo = std::max(0, -ix0);
            int o_hi = std::max(o_lo, std::min(w_out, w - ix0));
            for (int o = o_lo; o < o_hi; ++o) drow[ix0 + o] += src[o];
          } else {
            for (int ox = 0; ox < w_out; ++ox) {
              const int ix = ox * stride + kx - pad;
              if (ix >= 0 && ix < w) drow[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

struct ConvDims {
  int n, c_in, h, w;
  int c_out, kh, kw;
  int h_out, w_out;
  std::int64_t patch_rows, out_hw;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int stride, int pad) {
  require_rank4(x, "conv2d input");
  require_rank4(w, "conv2d weight");
  if (w.dim(1) != x.dim(1)) {
    throw ShapeError("conv2d: weight expects " + std::to_string(w.dim(1)) + " input channels, input has " +
                     std::to_string(x.dim(1)));
  }
  if (stride < 1 || pad < 0) throw ShapeError("conv2d: stride must be >= 1 and pad >= 0");
  ConvDims d;
  d.n = x.dim(0);
  d.c_in = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.c_out = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.h_out = (d.h + 2 * pad - d.kh) / stride + 1;
  d.w_out = (d.w + 2 * pad - d.kw) / stride + 1;
  if (d.h + 2 * pad < d.kh || d.w + 2 * pad < d.kw) {
    throw ShapeError("conv2d: kernel larger than padded input");
  }
  d.patch_rows = static_cast<std::int64_t>(d.c_in) * d.kh * d.kw;
  d.out_hw = static_cast<std::int64_t>(d.h_out) * d.w_out;
  return d;
}

}  // namespace

std::vector<int> conv2d_out_shape(const std::vector<int>& x_shape, const std::vector<int>& w_shape, int stride,
                                  int pad) {
  Tensor x_probe(x_shape);  // shape validation only
  Tensor w_probe(w_shape);
  ConvDims d = conv_dims(x_probe, w_probe, stride, pad);
  return {d.n, d.c_out, d.h_out, d.w_out};
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  ConvDims d = conv_dims(x, w, stride, pad);
  b.require_shape({d.c_out}, "conv2d bias");
  Tensor out({d.n, d.c_out, d.h_out, d.w_out});
  std::vector<float> col(static_cast<size_t>(d.patch_rows * d.out_hw));
  const std::int64_t x_stride = static_cast<std::int64_t>(d.c_in) * d.h * d.w;
  const std::int64_t o_stride = static_cast<std::int64_t>(d.c_out) * d.out_hw;
  for (int s = 0; s < d.n; ++s) {
    im2col(x.data() + s * x_stride, d.c_in, d.h, d.w, d.kh, d.kw, stride, pad, d.h_out, d.w_out, col.data());
    float* o = out.data() + s * o_stride;
    gemm_nn(d.c_out, static_cast<int>(d.out_hw), static_cast<int>(d.patch_rows), w.data(),
            static_cast<int>(d.patch_rows), col.data(), static_cast<int>(d.out_hw), o, static_cast<int>(d.out_hw),
            false);
    for (int co = 0; co < d.c_out; ++co) {
      const float bias = b[co];
      float* row = o + static_cast<std::int64_t>(co) * d.out_hw;
      for (std::int64_t i = 0; i < d.out_hw; ++i) row[i] += bias;
    }
  }
  return out;
}

void conv2d_backward(const Tensor& x, const Tensor& w, int stride, int pad, const Tensor& gout, Tensor* gx,
                     Tensor* gw, Tensor* gb) {
  ConvDims d = conv_dims(x, w, stride, pad);
  gout.require_shape({d.n, d.c_out, d.h_out, d.w_out}, "conv2d_backward upstream");
  if (gx) gx->require_shape(x.shape(), "conv2d_backward gx");
  if (gw) gw->require_shape(w.shape(), "conv2d_backward gw");
  if (gb) gb->require_shape({d.c_out}, "conv2d_backward gb");

  const std::int64_t x_stride = static_cast<std::int64_t>(d.c_in) * d.h * d.w;
  const std::int64_t o_stride = static_cast<std::int64_t>(d.c_out) * d.out_hw;
  const int k_rows = static_cast<int>(d.patch_rows);
  const int n_cols = static_cast<int>(d.out_hw);

  std::vector<float> col;
  if (gw || gx) col.resize(static_cast<size_t>(d.patch_rows * d.out_hw));
  std::vector<float> wt;  // weight transposed to [patch_rows, c_out], for gx
  if (gx) {
    wt.resize(static_cast<size_t>(d.patch_rows) * d.c_out);
    for (int co = 0; co < d.c_out; ++co) {
      for (int p = 0; p < k_rows; ++p) {
        wt[static_cast<size_t>(p) * d.c_out + co] = w[static_cast<std::int64_t>(co) * k_rows + p];
      }
    }
  }
  std::vector<float> colg;
  if (gx) colg.resize(static_cast<size_t>(d.patch_rows * d.out_hw));
  std::vector<double> gb_acc;
  if (gb) gb_acc.assign(static_cast<size_t>(d.c_out), 0.0);

  for (int s = 0; s < d.n; ++s) {
    const float* go = gout.data() + s * o_stride;
    if (gw || gx) {
      im2col(x.data() + s * x_stride, d.c_in, d.h, d.w, d.kh, d.kw, stride, pad, d.h_out, d.w_out, col.data());
    }
    if (gw) {
      gemm_abt(d.c_out, k_rows, n_cols, go, n_cols, col.data(), n_cols, gw->data(), k_rows);
    }
    if (gx) {
      gemm_nn(k_rows, n_cols, d.c_out, wt.data(), d.c_out, go, n_cols, colg.data(), n_cols, false);
      col2im_accum(colg.data(), d.c_in, d.h, d.w, d.kh, d.kw, stride, pad, d.h_out, d.w_out,
                   gx->data() + s * x_stride);
    }
    if (gb) {
      for (int co = 0; co < d.c_out; ++co) {
        const float* row = go + static_cast<std::int64_t>(co) * d.out_hw;
        double acc = 0.0;
        for (std::int64_t i = 0; i < d.out_hw; ++i) acc += static_cast<double>(row[i]);
        gb_acc[static_cast<size_t>(co)] += acc;
      }
    }
  }
  if (gb) {
    for (int co = 0; co < d.c_out; ++co) (*gb)[co] += static_cast<float>(gb_acc[static_cast<size_t>(co)]);
  }
}

namespace {

struct LerpAxis {
  std::vector<int> i0, i1;
  std::vector<float> t;
};

// Source coordinates for x2 bilinear upsampling with align_corners=false:
// u = (o + 0.5)/2 - 0.5, clamped to the valid range.
LerpAxis upsample_axis(int in_size) {
  LerpAxis ax;
  const int out_size = in_size * 2;
  ax.i0.resize(static_cast<size_t>(out_size));
  ax.i1.resize(static_cast<size_t>(out_size));
  ax.t.resize(static_cast<size_t>(out_size));
  for (int o = 0; o < out_size; ++o) {
    float u = 0.5f * static_cast<float>(o) - 0.25f;
    u = std::clamp(u, 0.0f, static_cast<float>(in_size - 1));
    int i0 = static_cast<int>(u);
    int i1 = std::min(i0 + 1, in_size - 1);
    ax.i0[static_cast<size_t>(o)] = i0;
    ax.i1[static_cast<size_t>(o)] = i1;
    ax.t[static_cast<size_t>(o)] = u - static_cast<float>(i0);
  }
  return ax;
}

}  // namespace

Tensor upsample2x_bilinear(const Tensor& x) {
  require_rank4(x, "upsample2x_bilinear");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({n, c, 2 * h, 2 * w});
  LerpAxis ay = upsample_axis(h);
  LerpAxis axx = upsample_axis(w);
  for (int nn = 0; nn < n; ++nn) {
    for (int cc = 0; cc < c; ++cc) {
      const float* plane = x.data() + (static_cast<std::int64_t>(nn) * c + cc) * h * w;
      float* oplane = out.data() + (static_cast<std::int64_t>(nn) * c + cc) * 4 * h * w;
      for (int oy = 0; oy < 2 * h; ++oy) {
        const float* r0 = plane + static_cast<std::int64_t>(ay.i0[oy]) * w;
        const float* r1 = plane + static_cast<std::int64_t>(ay.i1[oy]) * w;
        const float ty = ay.t[oy];
        float* orow = oplane + static_cast<std::int64_t>(oy) * 2 * w;
        for (int ox = 0; ox < 2 * w; ++ox) {
          const int x0 = axx.i0[ox], x1 = axx.i1[ox];
          const float tx = axx.t[ox];
          const float top = (1.0f - tx) * r0[x0] + tx * r0[x1];
          const float bot = (1.0f - tx) * r1[x0] + tx * r1[x1];
          orow[ox] = (1.0f - ty) * top + ty * bot;
        }
      }
    }
  }
  return out;
}

Tensor upsample2x_bilinear_backward(const Tensor& gout) {
  require_rank4(gout, "upsample2x_bilinear_backward");
  const int n = gout.dim(0), c = gout.dim(1), oh = gout.dim(2), ow = gout.dim(3);
  if (oh % 2 != 0 || ow % 2 != 0) throw ShapeError("upsample2x_bilinear_backward: odd upstream dims");
  const int h = oh / 2, w = ow / 2;
  Tensor gin({n, c, h, w});
  LerpAxis ay = upsample_axis(h);
  LerpAxis axx = upsample_axis(w);
  for (int nn = 0; nn < n; ++nn) {
    for (int cc = 0; cc < c; ++cc) {
      float* plane = gin.data() + (static_cast<std::int64_t>(nn) * c + cc) * h * w;
      const float* gplane = gout.data() + (static_cast<std::int64_t>(nn) * c + cc) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        float* r0 = plane + static_cast<std::int64_t>(ay.i0[oy]) * w;
        float* r1 = plane + static_cast<std::int64_t>(ay.i1[oy]) * w;
        const float ty = ay.t[oy];
        const float* grow = gplane + static_cast<std::int64_t>(oy) * ow;
        for (int ox = 0; ox < ow; ++ox) {
          const int x0 = axx.i0[ox], x1 = axx.i1[ox];
          const float tx = axx.t[ox];
          const float g = grow[ox];
          r0[x0] += (1.0f - ty) * (1.0f - tx) * g;
          r0[x1] += (1.0f - ty) * tx * g;
          r1[x0] += ty * (1.0f - tx) * g;
          r1[x1] += ty * tx * g;
        }
      }
    }
  }
  return gin;
}

Tensor downsample2x_area(const Tensor& x) {
  require_rank4(x, "downsample2x_area");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("downsample2x_area: dims must be even, got " + shape_str(x.shape()));
  }
  Tensor out({n, c, h / 2, w / 2});
  for (int nn = 0; nn < n; ++nn) {
    for (int cc = 0; cc < c; ++cc) {
      const float* plane = x.data() + (static_cast<std::int64_t>(nn) * c + cc) * h * w;
      float* oplane = out.data() + (static_cast<std::int64_t>(nn) * c + cc) * (h / 2) * (w / 2);
      for (int oy = 0; oy < h / 2; ++oy) {
        const float* r0 = plane + static_cast<std::int64_t>(2 * oy) * w;
        const float* r1 = r0 + w;
        float* orow = oplane + static_cast<std::int64_t>(oy) * (w / 2);
        for (int ox = 0; ox < w / 2; ++ox) {
          orow[ox] = 0.25f * (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]);
        }
      }
    }
  }
  return out;
}

Tensor downsample2x_area_backward(const Tensor& gout) {
  require_rank4(gout, "downsample2x_area_backward");
  const int n = gout.dim(0), c = gout.dim(1), oh = gout.dim(2), ow = gout.dim(3);
  Tensor gin({n, c, oh * 2, ow * 2});
  for (int nn = 0; nn < n; ++nn) {
    for (int cc = 0; cc < c; ++cc) {
      const float* gplane = gout.data() + (static_cast<std::int64_t>(nn) * c + cc) * oh * ow;
      float* plane = gin.data() + (static_cast<std::int64_t>(nn) * c + cc) * 4 * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        float* r0 = plane + static_cast<std::int64_t>(2 * oy) * 2 * ow;
        float* r1 = r0 + 2 * ow;
        const float* grow = gplane + static_cast<std::int64_t>(oy) * ow;
        for (int ox = 0; ox < ow; ++ox) {
          const float g = 0.25f * grow[ox];
          r0[2 * ox] += g;
          r0[2 * ox + 1] += g;
          r1[2 * ox] += g;
          r1[2 * ox + 1] += g;
        }
      }
    }
  }
  return gin;
}

Tensor box3_mean(const Tensor& x) {
  require_rank4(x, "box3_mean");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out(x.shape());
  constexpr float kInv9 = 1.0f / 9.0f;
  for (int nn = 0; nn < n; ++nn) {
    for (int cc = 0; cc < c; ++cc) {
      const float* plane = x.data() + (static_cast<std::int64_t>(nn) * c + cc) * h * w;
      float* oplane = out.data() + (static_cast<std::int64_t>(nn) * c + cc) * h * w;
      for (int y = 0; y < h; ++y) {
        const int y0 = std::max(y - 1, 0), y1 = y, y2 = std::min(y + 1, h - 1);
        const float* ra = plane + static_cast<std::int64_t>(y0) * w;
        const float* rb = plane + static_cast<std::int64_t>(y1) * w;
        const float* rc = plane + static_cast<std::int64_t>(y2) * w;
        float* orow = oplane + static_cast<std::int64_t>(y) * w;
        for (int x2 = 0; x2 < w; ++x2) {
          const int xl = std::max(x2 - 1, 0), xr = std::min(x2 + 1, w - 1);
          const float s = ra[xl] + ra[x2] + ra[xr] + rb[xl] + rb[x2] + rb[xr] + rc[xl] + rc[x2] + rc[xr];
          orow[x2] = s * kInv9;
        }
      }
    }
  }
  return out;
}

Tensor box3_mean_backward(const Tensor& gout) {
  require_rank4(gout, "box3_mean_backward");
  const int n = gout.dim(0), c = gout.dim(1), h = gout.dim(2), w = gout.dim(3);
  Tensor gin(gout.shape());
  constexpr float kInv9 = 1.0f / 9.0f;
  for (int nn = 0; nn < n; ++nn) {
    for (int cc = 0; cc < c; ++cc) {
      const float* gplane = gout.data() + (static_cast<std::int64_t>(nn) * c + cc) * h * w;
      float* plane = gin.data() + (static_cast<std::int64_t>(nn) * c + cc) * h * w;
      for (int y = 0; y < h; ++y) {
        const float* grow = gplane + static_cast<std::int64_t>(y) * w;
        for (int x = 0; x < w; ++x) {
          const float g = grow[x] * kInv9;
          for (int dy = -1; dy <= 1; ++dy) {
            const int yy = std::clamp(y + dy, 0, h - 1);
            float* row = plane + static_cast<std::int64_t>(yy) * w;
            for (int dx = -1; dx <= 1; ++dx) {
              row[std::clamp(x + dx, 0, w - 1)] += g;
            }
          }
        }
      }
    }
  }
  return gin;
}

namespace {

void check_warp_shapes(const Tensor& src, const Tensor& disp) {
  require_rank4(src, "warp_horizontal src");
  disp.require_shape({src.dim(0), 1, src.dim(2), src.dim(3)}, "warp_horizontal disp");
}

}  // namespace

Tensor warp_horizontal(const Tensor& src, const Tensor& disp, WarpDir dir) {
  check_warp_shapes(src, disp);
  const int n = src.dim(0), c = src.dim(1), h = src.dim(2), w = src.dim(3);
  const float sign = (dir == WarpDir::kSampleLeftOf) ? -1.0f : 1.0f;
  Tensor out(src.shape());
  for (int nn = 0; nn < n; ++nn) {
    const float* dplane = disp.data() + static_cast<std::int64_t>(nn) * h * w;
    for (int cc = 0; cc < c; ++cc) {
      const float* plane = src.data() + (static_cast<std::int64_t>(nn) * c + cc) * h * w;
      float* oplane = out.data() + (static_cast<std::int64_t>(nn) * c + cc) * h * w;
      for (int y = 0; y < h; ++y) {
        const float* srow = plane + static_cast<std::int64_t>(y) * w;
        const float* drow = dplane + static_cast<std::int64_t>(y) * w;
        float* orow = oplane + static_cast<std::int64_t>(y) * w;
        for (int x = 0; x < w; ++x) {
          float u = static_cast<float>(x) + sign * drow[x];
          u = std::clamp(u, 0.0f, static_cast<float>(w - 1));
          const int x0 = static_cast<int>(u);
          const int x1 = std::min(x0 + 1, w - 1);
          const float t = u - static_cast<float>(x0);
          orow[x] = (1.0f - t) * srow[x0] + t * srow[x1];
        }
      }
    }
  }
  return out;
}

void warp_horizontal_backward(const Tensor& src, const Tensor& disp, WarpDir dir, const Tensor& gout, Tensor* gsrc,
                              Tensor* gdisp) {
  check_warp_shapes(src, disp);
  gout.require_shape(src.shape(), "warp_horizontal_backward upstream");
  if (gsrc) gsrc->require_shape(src.shape(), "warp_horizontal_backward gsrc");
  if (gdisp) gdisp->require_shape(disp.shape(), "warp_horizontal_backward gdisp");
  const int n = src.dim(0), c = src.dim(1), h = src.dim(2), w = src.dim(3);
  const float sign = (dir == WarpDir::kSampleLeftOf) ? -1.0f : 1.0f;
  for (int nn = 0; nn < n; ++nn) {
    const float* dplane = disp.data() + static_cast<std::int64_t>(nn) * h * w;
    for (int cc = 0; cc < c; ++cc) {
      const float* plane = src.data() + (static_cast<std::int64_t>(nn) * c + cc) * h * w;
      const float* gplane = gout.data() + (static_cast<std::int64_t>(nn) * c + cc) * h * w;
      float* gsplane = gsrc ? gsrc->data() + (static_cast<std::int64_t>(nn) * c + cc) * h * w : nullptr;
      float* gdplane = gdisp ? gdisp->data() + static_cast<std::int64_t>(nn) * h * w : nullptr;
      for (int y = 0; y < h; ++y) {
        const float* srow = plane + static_cast<std::int64_t>(y) * w;
        const float* drow = dplane + static_cast<std::int64_t>(y) * w;
        const float* grow = gplane + static_cast<std::int64_t>(y) * w;
        float* gsrow = gsplane ? gsplane + static_cast<std::int64_t>(y) * w : nullptr;
        float* gdrow = gdplane ? gdplane + static_cast<std::int64_t>(y) * w : nullptr;
        for (int x = 0; x < w; ++x) {
          const float u_raw = static_cast<float>(x) + sign * drow[x];
          const float u = std::clamp(u_raw, 0.0f, static_cast<float>(w - 1));
          const int x0 = static_cast<int>(u);
          const int x1 = std::min(x0 + 1, w - 1);
          const float t = u - static_cast<float>(x0);
          const float g = grow[x];
          if (gsrow) {
            gsrow[x0] += (1.0f - t) * g;
            gsrow[x1] += t * g;
          }
          // No disparity gradient once the sample clamps to the border.
          if (gdrow && u_raw > 0.0f && u_raw < static_cast<float>(w - 1)) {
            gdrow[x] += sign * (srow[x1] - srow[x0]) * g;
          }
        }
      }
    }
  }
}

Tensor diff_x(const Tensor& x) {
  require_rank4(x, "diff_x");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (w < 2) throw ShapeError("diff_x: width must be >= 2");
  Tensor out({n, c, h, w - 1});
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(n) * c * h; ++p) {
    const float* row = x.data() + p * w;
    float* orow = out.data() + p * (w - 1);
    for (int i = 0; i < w - 1; ++i) orow[i] = row[i + 1] - row[i];
  }
  return out;
}

Tensor diff_x_backward(const Tensor& gout) {
  require_rank4(gout, "diff_x_backward");
  const int n = gout.dim(0), c = gout.dim(1), h = gout.dim(2), w_out = gout.dim(3);
  Tensor gin({n, c, h, w_out + 1});
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(n) * c * h; ++p) {
    const float* grow = gout.data() + p * w_out;
    float* row = gin.data() + p * (w_out + 1);
    for (int i = 0; i < w_out; ++i) {
      row[i + 1] += grow[i];
      row[i] -= grow[i];
    }
  }
  return gin;
}

Tensor diff_y(const Tensor& x) {
  require_rank4(x, "diff_y");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2) throw ShapeError("diff_y: height must be >= 2");
  Tensor out({n, c, h - 1, w});
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(n) * c; ++p) {
    const float* plane = x.data() + p * h * w;
    float* oplane = out.data() + p * (h - 1) * w;
    for (int y = 0; y < h - 1; ++y) {
      const float* r0 = plane + static_cast<std::int64_t>(y) * w;
      const float* r1 = r0 + w;
      float* orow = oplane + static_cast<std::int64_t>(y) * w;
      for (int x2 = 0; x2 < w; ++x2) orow[x2] = r1[x2] - r0[x2];
    }
  }
  return out;
}

Tensor diff_y_backward(const Tensor& gout) {
  require_rank4(gout, "diff_y_backward");
  const int n = gout.dim(0), c = gout.dim(1), h_out = gout.dim(2), w = gout.dim(3);
  Tensor gin({n, c, h_out + 1, w});
  for (std::int64_t p = 0; p < static_cast<std::int64_t>(n) * c; ++p) {
    const float* gplane = gout.data() + p * h_out * w;
    float* plane = gin.data() + p * (h_out + 1) * w;
    for (int y = 0; y < h_out; ++y) {
      const float* grow = gplane + static_cast<std::int64_t>(y) * w;
      float* r0 = plane + static_cast<std::int64_t>(y) * w;
      float* r1 = r0 + w;
      for (int x2 = 0; x2 < w; ++x2) {
        r1[x2] += grow[x2];
        r0[x2] -= grow[x2];
      }
    }
  }
  return gin;
}

Tensor hflip(const Tensor& x) {
  require_rank4(x, "hflip");
  const int w = x.dim(3);
  Tensor out(x.shape());
  for (std::int64_t p = 0; p < x.numel() / w; ++p) {
    const float* row = x.data() + p * w;
    float* orow = out.data() + p * w;
    for (int i = 0; i < w; ++i) orow[i] = row[w - 1 - i];
  }
  return out;
}

}  // namespace mbd::kernels
