#include "stgcn/kernels.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Dense>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <cstring>

namespace stgcn::kernels {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using CMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using WStride = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
using WMap = Eigen::Map<const RowMat, 0, WStride>;

int thread_count() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

// Row-block partition for disjoint-output parallelism. Each output row is
// produced by exactly one thread with a fixed inner summation order, so
// results are reproducible for a fixed thread count.
template <typename Fn>
void parallel_rows(int rows, std::int64_t work, Fn&& fn) {
    const int nt = std::min(thread_count(), rows);
    if (nt <= 1 || work < (1 << 18)) {
        fn(0, rows);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel num_threads(nt)
    {
        const int tid = omp_get_thread_num();
        const int per = (rows + nt - 1) / nt;
        const int r0 = std::min(rows, tid * per);
        const int r1 = std::min(rows, r0 + per);
        if (r1 > r0) {
            fn(r0, r1);
        }
    }
#else
    fn(0, rows);
#endif
}

}  // namespace

void matmul(double* c, const double* a, const double* b, int m, int k, int n) {
    CMap bm(b, k, n, Eigen::OuterStride<>(n));
    parallel_rows(m, static_cast<std::int64_t>(m) * k * n, [&](int r0, int r1) {
        CMap am(a + static_cast<std::ptrdiff_t>(r0) * k, r1 - r0, k, Eigen::OuterStride<>(k));
        Map cm(c + static_cast<std::ptrdiff_t>(r0) * n, r1 - r0, n, Eigen::OuterStride<>(n));
        cm.noalias() = am * bm;
    });
}

void matmul_nt_acc(double* c, const double* a, const double* b, int m, int k, int n) {
    CMap bm(b, n, k, Eigen::OuterStride<>(k));
    parallel_rows(m, static_cast<std::int64_t>(m) * k * n, [&](int r0, int r1) {
        CMap am(a + static_cast<std::ptrdiff_t>(r0) * k, r1 - r0, k, Eigen::OuterStride<>(k));
        Map cm(c + static_cast<std::ptrdiff_t>(r0) * n, r1 - r0, n, Eigen::OuterStride<>(n));
        cm.noalias() += am * bm.transpose();
    });
}

void matmul_tn_acc(double* c, const double* a, const double* b, int m, int k, int n) {
    CMap bm(b, k, n, Eigen::OuterStride<>(n));
    parallel_rows(m, static_cast<std::int64_t>(m) * k * n, [&](int r0, int r1) {
        // rows r0..r1 of a^T are columns r0..r1 of a
        CMap am(a + r0, k, r1 - r0, Eigen::OuterStride<>(m));
        Map cm(c + static_cast<std::ptrdiff_t>(r0) * n, r1 - r0, n, Eigen::OuterStride<>(n));
        cm.noalias() += am.transpose() * bm;
    });
}

// Same-padded cross-correlation as one small GEMM per tap on a contiguous
// (t, lane) slab: y[:, t0:t1, :] += W_g * x[:, t0+d:t1+d, :].
void conv1d_forward(double* y, const double* x, const double* w,
                    int co, int ci, int taps, int t, int lanes) {
    const int half = taps / 2;
    const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(t) * lanes;
    std::memset(y, 0, sizeof(double) * static_cast<std::size_t>(co) * row);
    const std::int64_t work = static_cast<std::int64_t>(co) * ci * taps * row;
    parallel_rows(co, work, [&](int r0, int r1) {
        for (int g = 0; g < taps; ++g) {
            const int d = g - half;
            const int t0 = std::max(0, -d);
            const int t1 = std::min(t, t - d);
            if (t1 <= t0) {
                continue;
            }
            const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(t1 - t0) * lanes;
            WMap wg(w + static_cast<std::ptrdiff_t>(r0) * ci * taps + g, r1 - r0, ci,
                    WStride(static_cast<std::ptrdiff_t>(ci) * taps, taps));
            CMap xs(x + static_cast<std::ptrdiff_t>(t0 + d) * lanes, ci, len,
                    Eigen::OuterStride<>(row));
            Map ys(y + static_cast<std::ptrdiff_t>(r0) * row + static_cast<std::ptrdiff_t>(t0) * lanes,
                   r1 - r0, len, Eigen::OuterStride<>(row));
            ys.noalias() += wg * xs;
        }
    });
}

void conv1d_backward_x(double* dx, const double* dy, const double* w,
                       int co, int ci, int taps, int t, int lanes) {
    const int half = taps / 2;
    const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(t) * lanes;
    const std::int64_t work = static_cast<std::int64_t>(co) * ci * taps * row;
    parallel_rows(ci, work, [&](int r0, int r1) {
        for (int g = 0; g < taps; ++g) {
            const int d = g - half;
            const int t0 = std::max(0, -d);
            const int t1 = std::min(t, t - d);
            if (t1 <= t0) {
                continue;
            }
            const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(t1 - t0) * lanes;
            // rows r0..r1 of W_g^T are columns r0..r1 of W_g
            WMap wg(w + static_cast<std::ptrdiff_t>(r0) * taps + g, co, r1 - r0,
                    WStride(static_cast<std::ptrdiff_t>(ci) * taps, taps));
            CMap dys(dy + static_cast<std::ptrdiff_t>(t0) * lanes, co, len,
                     Eigen::OuterStride<>(row));
            Map dxs(dx + static_cast<std::ptrdiff_t>(r0) * row + static_cast<std::ptrdiff_t>(t0 + d) * lanes,
                    r1 - r0, len, Eigen::OuterStride<>(row));
            dxs.noalias() += wg.transpose() * dys;
        }
    });
}

void conv1d_backward_w(double* dw, const double* dy, const double* x,
                       int co, int ci, int taps, int t, int lanes) {
    const int half = taps / 2;
    const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(t) * lanes;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (thread_count() > 1 && taps > 1)
#endif
    for (int g = 0; g < taps; ++g) {
        const int d = g - half;
        const int t0 = std::max(0, -d);
        const int t1 = std::min(t, t - d);
        if (t1 <= t0) {
            continue;
        }
        const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(t1 - t0) * lanes;
        CMap dys(dy + static_cast<std::ptrdiff_t>(t0) * lanes, co, len, Eigen::OuterStride<>(row));
        CMap xs(x + static_cast<std::ptrdiff_t>(t0 + d) * lanes, ci, len, Eigen::OuterStride<>(row));
        Eigen::Map<RowMat, 0, WStride> dwg(dw + g, co, ci,
                                           WStride(static_cast<std::ptrdiff_t>(ci) * taps, taps));
        dwg.noalias() += dys * xs.transpose();
    }
}

void conv1d_dw_forward(double* y, const double* x, const double* w,
                       int c, int taps, int t, int lanes) {
    const int half = taps / 2;
    const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(t) * lanes;
    std::memset(y, 0, sizeof(double) * static_cast<std::size_t>(c) * row);
    parallel_rows(c, static_cast<std::int64_t>(c) * taps * row, [&](int r0, int r1) {
        for (int ch = r0; ch < r1; ++ch) {
            for (int g = 0; g < taps; ++g) {
                const int d = g - half;
                const int t0 = std::max(0, -d);
                const int t1 = std::min(t, t - d);
                const double wg = w[static_cast<std::ptrdiff_t>(ch) * taps + g];
                double* yp = y + ch * row + static_cast<std::ptrdiff_t>(t0) * lanes;
                const double* xp = x + ch * row + static_cast<std::ptrdiff_t>(t0 + d) * lanes;
                const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(std::max(0, t1 - t0)) * lanes;
                for (std::ptrdiff_t i = 0; i < len; ++i) {
                    yp[i] += wg * xp[i];
                }
            }
        }
    });
}

void conv1d_dw_backward_x(double* dx, const double* dy, const double* w,
                          int c, int taps, int t, int lanes) {
    const int half = taps / 2;
    const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(t) * lanes;
    parallel_rows(c, static_cast<std::int64_t>(c) * taps * row, [&](int r0, int r1) {
        for (int ch = r0; ch < r1; ++ch) {
            for (int g = 0; g < taps; ++g) {
                const int d = g - half;
                const int t0 = std::max(0, -d);
                const int t1 = std::min(t, t - d);
                const double wg = w[static_cast<std::ptrdiff_t>(ch) * taps + g];
                const double* dyp = dy + ch * row + static_cast<std::ptrdiff_t>(t0) * lanes;
                double* dxp = dx + ch * row + static_cast<std::ptrdiff_t>(t0 + d) * lanes;
                const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(std::max(0, t1 - t0)) * lanes;
                for (std::ptrdiff_t i = 0; i < len; ++i) {
                    dxp[i] += wg * dyp[i];
                }
            }
        }
    });
}

void conv1d_dw_backward_w(double* dw, const double* dy, const double* x,
                          int c, int taps, int t, int lanes) {
    const int half = taps / 2;
    const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(t) * lanes;
    parallel_rows(c, static_cast<std::int64_t>(c) * taps * row, [&](int r0, int r1) {
        for (int ch = r0; ch < r1; ++ch) {
            for (int g = 0; g < taps; ++g) {
                const int d = g - half;
                const int t0 = std::max(0, -d);
                const int t1 = std::min(t, t - d);
                const double* dyp = dy + ch * row + static_cast<std::ptrdiff_t>(t0) * lanes;
                const double* xp = x + ch * row + static_cast<std::ptrdiff_t>(t0 + d) * lanes;
                const std::ptrdiff_t len = static_cast<std::ptrdiff_t>(std::max(0, t1 - t0)) * lanes;
                double acc = 0.0;
                for (std::ptrdiff_t i = 0; i < len; ++i) {
                    acc += dyp[i] * xp[i];
                }
                dw[static_cast<std::ptrdiff_t>(ch) * taps + g] += acc;
            }
        }
    });
}

namespace ref {

void matmul(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                acc += a[static_cast<std::ptrdiff_t>(i) * k + p] * b[static_cast<std::ptrdiff_t>(p) * n + j];
            }
            c[static_cast<std::ptrdiff_t>(i) * n + j] = acc;
        }
    }
}

void matmul_nt_acc(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                acc += a[static_cast<std::ptrdiff_t>(i) * k + p] * b[static_cast<std::ptrdiff_t>(j) * k + p];
            }
            c[static_cast<std::ptrdiff_t>(i) * n + j] += acc;
        }
    }
}

void matmul_tn_acc(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                acc += a[static_cast<std::ptrdiff_t>(p) * m + i] * b[static_cast<std::ptrdiff_t>(p) * n + j];
            }
            c[static_cast<std::ptrdiff_t>(i) * n + j] += acc;
        }
    }
}

void conv1d_forward(double* y, const double* x, const double* w,
                    int co, int ci, int taps, int t, int lanes) {
    const int half = taps / 2;
    const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(t) * lanes;
    for (int o = 0; o < co; ++o) {
        for (int tt = 0; tt < t; ++tt) {
            for (int l = 0; l < lanes; ++l) {
                double acc = 0.0;
                for (int i = 0; i < ci; ++i) {
                    for (int g = 0; g < taps; ++g) {
                        const int src = tt + g - half;
                        if (src < 0 || src >= t) {
                            continue;  // zero padding
                        }
                        acc += w[(static_cast<std::ptrdiff_t>(o) * ci + i) * taps + g] *
                               x[i * row + static_cast<std::ptrdiff_t>(src) * lanes + l];
                    }
                }
                y[o * row + static_cast<std::ptrdiff_t>(tt) * lanes + l] = acc;
            }
        }
    }
}

void conv1d_backward_x(double* dx, const double* dy, const double* w,
                       int co, int ci, int taps, int t, int lanes) {
    const int half = taps / 2;
    const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(t) * lanes;
    for (int o = 0; o < co; ++o) {
        for (int tt = 0; tt < t; ++tt) {
            for (int l = 0; l < lanes; ++l) {
                const double g_out = dy[o * row + static_cast<std::ptrdiff_t>(tt) * lanes + l];
                for (int i = 0; i < ci; ++i) {
                    for (int g = 0; g < taps; ++g) {
                        const int src = tt + g - half;
                        if (src < 0 || src >= t) {
                            continue;
                        }
                        dx[i * row + static_cast<std::ptrdiff_t>(src) * lanes + l] +=
                            w[(static_cast<std::ptrdiff_t>(o) * ci + i) * taps + g] * g_out;
                    }
                }
            }
        }
    }
}

void conv1d_backward_w(double* dw, const double* dy, const double* x,
                       int co, int ci, int taps, int t, int lanes) {
    const int half = taps / 2;
    const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(t) * lanes;
    for (int o = 0; o < co; ++o) {
        for (int i = 0; i < ci; ++i) {
            for (int g = 0; g < taps; ++g) {
                double acc = 0.0;
                for (int tt = 0; tt < t; ++tt) {
                    const int src = tt + g - half;
                    if (src < 0 || src >= t) {
                        continue;
                    }
                    for (int l = 0; l < lanes; ++l) {
                        acc += dy[o * row + static_cast<std::ptrdiff_t>(tt) * lanes + l] *
                               x[i * row + static_cast<std::ptrdiff_t>(src) * lanes + l];
                    }
                }
                dw[(static_cast<std::ptrdiff_t>(o) * ci + i) * taps + g] += acc;
            }
        }
    }
}

void conv1d_dw_forward(double* y, const double* x, const double* w,
                       int c, int taps, int t, int lanes) {
    const int half = taps / 2;
    const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(t) * lanes;
    for (int ch = 0; ch < c; ++ch) {
        for (int tt = 0; tt < t; ++tt) {
            for (int l = 0; l < lanes; ++l) {
                double acc = 0.0;
                for (int g = 0; g < taps; ++g) {
                    const int src = tt + g - half;
                    if (src < 0 || src >= t) {
                        continue;
                    }
                    acc += w[static_cast<std::ptrdiff_t>(ch) * taps + g] *
                           x[ch * row + static_cast<std::ptrdiff_t>(src) * lanes + l];
                }
                y[ch * row + static_cast<std::ptrdiff_t>(tt) * lanes + l] = acc;
            }
        }
    }
}

void conv1d_dw_backward_x(double* dx, const double* dy, const double* w,
                          int c, int taps, int t, int lanes) {
    const int half = taps / 2;
    const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(t) * lanes;
    for (int ch = 0; ch < c; ++ch) {
        for (int tt = 0; tt < t; ++tt) {
            for (int l = 0; l < lanes; ++l) {
                const double g_out = dy[ch * row + static_cast<std::ptrdiff_t>(tt) * lanes + l];
                for (int g = 0; g < taps; ++g) {
                    const int src = tt + g - half;
                    if (src < 0 || src >= t) {
                        continue;
                    }
                    dx[ch * row + static_cast<std::ptrdiff_t>(src) * lanes + l] +=
                        w[static_cast<std::ptrdiff_t>(ch) * taps + g] * g_out;
                }
            }
        }
    }
}

void conv1d_dw_backward_w(double* dw, const double* dy, const double* x,
                          int c, int taps, int t, int lanes) {
    const int half = taps / 2;
    const std::ptrdiff_t row = static_cast<std::ptrdiff_t>(t) * lanes;
    for (int ch = 0; ch < c; ++ch) {
        for (int g = 0; g < taps; ++g) {
            double acc = 0.0;
            for (int tt = 0; tt < t; ++tt) {
                const int src = tt + g - half;
                if (src < 0 || src >= t) {
                    continue;
                }
                for (int l = 0; l < lanes; ++l) {
                    acc += dy[ch * row + static_cast<std::ptrdiff_t>(tt) * lanes + l] *
                           x[ch * row + static_cast<std::ptrdiff_t>(src) * lanes + l];
                }
            }
            dw[static_cast<std::ptrdiff_t>(ch) * taps + g] += acc;
        }
    }
}

}  // namespace ref

}  // namespace stgcn::kernels
