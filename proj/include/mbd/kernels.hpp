#pragma once

#include "mbd/tensor.hpp"

namespace mbd {

// Horizontal warp direction for rectified stereo. Disparities are
// non-negative and live in the coordinate frame of the *output* image:
//   kSampleLeftOf : out(x) = src(x - d(x))  (e.g. rebuild a left view from a right view)
//   kSampleRightOf: out(x) = src(x + d(x))  (e.g. rebuild a right view from a left view)
enum class WarpDir { kSampleLeftOf, kSampleRightOf };

namespace kernels {

// --- GEMM ------------------------------------------------------------------
// Row-major, deterministic accumulation order (fixed blocking, no threads).

// C[m,n] = (accumulate ? C : 0) + A[m,k] * B[k,n]
void gemm_nn(int m, int n, int k, const float* a, int lda, const float* b, int ldb, float* c, int ldc,
             bool accumulate);

// C[m,n] += A[m,k2] * B[n,k2]^T  (dot products of rows)
void gemm_abt(int m, int n, int k2, const float* a, int lda, const float* b, int ldb, float* c, int ldc);

// --- Convolution -------------------------------------------------------------
// x [N,Cin,H,W], w [Cout,Cin,kh,kw], b [Cout]; zero padding, floor output dims.

std::vector<int> conv2d_out_shape(const std::vector<int>& x_shape, const std::vector<int>& w_shape, int stride,
                                  int pad);
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
// Any of gx/gw/gb may be null to skip that gradient. Non-null outputs are
// accumulated into (caller zero-initialises).
void conv2d_backward(const Tensor& x, const Tensor& w, int stride, int pad, const Tensor& gout, Tensor* gx,
                     Tensor* gw, Tensor* gb);

// --- Resampling --------------------------------------------------------------

// Bilinear x2 upsampling, align_corners=false, edge-clamped.
Tensor upsample2x_bilinear(const Tensor& x);
Tensor upsample2x_bilinear_backward(const Tensor& gout);

// 2x2 area (average) downsampling; dims must be even.
Tensor downsample2x_area(const Tensor& x);
Tensor downsample2x_area_backward(const Tensor& gout);

// 3x3 box mean with clamped (replicate) padding, per channel.
Tensor box3_mean(const Tensor& x);
Tensor box3_mean_backward(const Tensor& gout);

// --- Warping -----------------------------------------------------------------
// src [N,C,H,W], disp [N,1,H,W] in pixels at this resolution. Sample
// coordinates are clamped to the image; interpolation is bilinear along x.

Tensor warp_horizontal(const Tensor& src, const Tensor& disp, WarpDir dir);
// gsrc/gdisp accumulated into when non-null. Disparity receives no gradient
// where the sample coordinate was clamped.
void warp_horizontal_backward(const Tensor& src, const Tensor& disp, WarpDir dir, const Tensor& gout, Tensor* gsrc,
                              Tensor* gdisp);

// --- Finite differences ------------------------------------------------------
// Forward differences; output is one column (row) narrower.

Tensor diff_x(const Tensor& x);
Tensor diff_x_backward(const Tensor& gout);
Tensor diff_y(const Tensor& x);
Tensor diff_y_backward(const Tensor& gout);

// --- Misc --------------------------------------------------------------------

Tensor hflip(const Tensor& x);  // mirror along the width axis

}  // namespace kernels
}  // namespace mbd
