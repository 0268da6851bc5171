#pragma once

#include <cstdint>

// Low-level numeric kernels behind the tensor ops. All matrices are dense
// row-major double. The default implementations are blocked and parallelized;
// kernels::ref holds plain serial loops with the obvious summation order,
// kept as the oracle for the kernel tests and the benchmark target.
//
// Temporal convolutions operate on activations laid out (channels, T, lanes),
// lane-major innermost; a rank-2 series is the lanes == 1 case. All are
// same-padded cross-correlations along T (odd tap count required upstream).
// Backward kernels accumulate (+=) into their destination buffer.

namespace stgcn::kernels {

// c[m x n] = a[m x k] * b[k x n]
void matmul(double* c, const double* a, const double* b, int m, int k, int n);
// c[m x n] += a[m x k] * b[n x k]^T
void matmul_nt_acc(double* c, const double* a, const double* b, int m, int k, int n);
// c[m x n] += a[k x m]^T * b[k x n]
void matmul_tn_acc(double* c, const double* a, const double* b, int m, int k, int n);

// y[co x t x lanes] = x[ci x t x lanes] (*) w[co x ci x taps]
void conv1d_forward(double* y, const double* x, const double* w,
                    int co, int ci, int taps, int t, int lanes);
void conv1d_backward_x(double* dx, const double* dy, const double* w,
                       int co, int ci, int taps, int t, int lanes);
void conv1d_backward_w(double* dw, const double* dy, const double* x,
                       int co, int ci, int taps, int t, int lanes);

// Depthwise variant: w[c x taps], channels independent.
void conv1d_dw_forward(double* y, const double* x, const double* w,
                       int c, int taps, int t, int lanes);
void conv1d_dw_backward_x(double* dx, const double* dy, const double* w,
                          int c, int taps, int t, int lanes);
void conv1d_dw_backward_w(double* dw, const double* dy, const double* x,
                          int c, int taps, int t, int lanes);

// Serial reference implementations (same contracts).
namespace ref {
void matmul(double* c, const double* a, const double* b, int m, int k, int n);
void matmul_nt_acc(double* c, const double* a, const double* b, int m, int k, int n);
void matmul_tn_acc(double* c, const double* a, const double* b, int m, int k, int n);
void conv1d_forward(double* y, const double* x, const double* w,
                    int co, int ci, int taps, int t, int lanes);
void conv1d_backward_x(double* dx, const double* dy, const double* w,
                       int co, int ci, int taps, int t, int lanes);
void conv1d_backward_w(double* dw, const double* dy, const double* x,
                       int co, int ci, int taps, int t, int lanes);
void conv1d_dw_forward(double* y, const double* x, const double* w,
                       int c, int taps, int t, int lanes);
void conv1d_dw_backward_x(double* dx, const double* dy, const double* w,
                          int c, int taps, int t, int lanes);
void conv1d_dw_backward_w(double* dw, const double* dy, const double* x,
                          int c, int taps, int t, int lanes);
}  // namespace ref

}  // namespace stgcn::kernels
