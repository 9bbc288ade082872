#include "dstok/kernels.hpp"

#include "dstok/common.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dstok::kernels {

static mode g_mode = mode::automatic;

void set_mode(mode m) { g_mode = m; }
mode get_mode() { return g_mode; }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

static bool use_parallel(int64_t work) {
#ifdef _OPENMP
    if (g_mode == mode::serial) return false;
    if (g_mode == mode::parallel) return true;
    return max_threads() > 1 && work >= (int64_t)1 << 16;
#else
    (void)work;
    return false;
#endif
}

int conv1d_out_len(int t, int kernel, int stride, int pad) {
    const int span = t + 2 * pad - kernel;
    DSTOK_CHECK(span >= 0, "conv1d: input length %d too short for kernel %d pad %d", t, kernel, pad);
    return span / stride + 1;
}

int convtr1d_out_len(int t, int kernel, int stride, int pad) {
    const int len = (t - 1) * stride - 2 * pad + kernel;
    DSTOK_CHECK(len >= 1, "convtr1d: degenerate output length");
    return len;
}

// ---------------------------------------------------------------------------
// matmul

// one output row; identical accumulation order for serial and parallel paths
static inline void matmul_row(const float * a, const float * b, float * c,
                              int i, int m, int k, int n, bool ta, bool tb, bool acc) {
    float * ci = c + (size_t)i * n;
    if (!acc) {
        for (int j = 0; j < n; ++j) ci[j] = 0.0f;
    }
    if (!tb) {
        // stream rows of b
        for (int p = 0; p < k; ++p) {
            const float aip = ta ? a[(size_t)p * m + i] : a[(size_t)i * k + p];
            const float * bp = b + (size_t)p * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    } else {
        // b holds [n,k]: dot products along contiguous rows
        for (int j = 0; j < n; ++j) {
            const float * bj = b + (size_t)j * k;
            float acc_v = 0.0f;
            if (!ta) {
                const float * ai = a + (size_t)i * k;
                for (int p = 0; p < k; ++p) acc_v += ai[p] * bj[p];
            } else {
                for (int p = 0; p < k; ++p) acc_v += a[(size_t)p * m + i] * bj[p];
            }
            ci[j] += acc_v;
        }
    }
}

void matmul_serial(const float * a, const float * b, float * c, int m, int k, int n,
                   bool ta, bool tb, bool acc) {
    for (int i = 0; i < m; ++i) matmul_row(a, b, c, i, m, k, n, ta, tb, acc);
}

void matmul_parallel(const float * a, const float * b, float * c, int m, int k, int n,
                     bool ta, bool tb, bool acc) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < m; ++i) matmul_row(a, b, c, i, m, k, n, ta, tb, acc);
}

void matmul(const float * a, const float * b, float * c, int m, int k, int n,
            bool ta, bool tb, bool acc) {
    if (use_parallel((int64_t)2 * m * k * n)) {
        matmul_parallel(a, b, c, m, k, n, ta, tb, acc);
    } else {
        matmul_serial(a, b, c, m, k, n, ta, tb, acc);
    }
}

// ---------------------------------------------------------------------------
// conv1d, layout x[t,cin], w[cout,kernel,cin], y[t_out,cout]

static inline void conv1d_frame(const float * x, const float * w, const float * bias, float * y,
                                int to, int t, int cin, int cout, int kernel, int stride, int pad) {
    float * yo = y + (size_t)to * cout;
    const int base = to * stride - pad;
    for (int co = 0; co < cout; ++co) {
        float acc = bias ? bias[co] : 0.0f;
        const float * wc = w + (size_t)co * kernel * cin;
        for (int kk = 0; kk < kernel; ++kk) {
            const int ti = base + kk;
            if (ti < 0 || ti >= t) continue;
            const float * xr = x + (size_t)ti * cin;
            const float * wr = wc + (size_t)kk * cin;
            for (int ci = 0; ci < cin; ++ci) acc += xr[ci] * wr[ci];
        }
        yo[co] = acc;
    }
}

void conv1d_serial(const float * x, const float * w, const float * bias, float * y,
                   int t, int cin, int cout, int kernel, int stride, int pad) {
    const int t_out = conv1d_out_len(t, kernel, stride, pad);
    for (int to = 0; to < t_out; ++to) conv1d_frame(x, w, bias, y, to, t, cin, cout, kernel, stride, pad);
}

void conv1d_parallel(const float * x, const float * w, const float * bias, float * y,
                     int t, int cin, int cout, int kernel, int stride, int pad) {
    const int t_out = conv1d_out_len(t, kernel, stride, pad);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int to = 0; to < t_out; ++to) conv1d_frame(x, w, bias, y, to, t, cin, cout, kernel, stride, pad);
}

void conv1d(const float * x, const float * w, const float * bias, float * y,
            int t, int cin, int cout, int kernel, int stride, int pad) {
    const int t_out = conv1d_out_len(t, kernel, stride, pad);
    if (use_parallel((int64_t)2 * t_out * cout * kernel * cin)) {
        conv1d_parallel(x, w, bias, y, t, cin, cout, kernel, stride, pad);
    } else {
        conv1d_serial(x, w, bias, y, t, cin, cout, kernel, stride, pad);
    }
}

// dx[u,ci] += sum over (to,k) with to*stride - pad + k == u of dy[to,co]·w[co,k,ci]
static inline void conv1d_grad_x_row(const float * dy, const float * w, float * dx,
                                     int u, int t, int cin, int cout, int kernel, int stride, int pad) {
    const int t_out = conv1d_out_len(t, kernel, stride, pad);
    float * dxr = dx + (size_t)u * cin;
    for (int kk = 0; kk < kernel; ++kk) {
        const int num = u + pad - kk;
        if (num < 0 || num % stride != 0) continue;
        const int to = num / stride;
        if (to >= t_out) continue;
        const float * dyr = dy + (size_t)to * cout;
        for (int co = 0; co < cout; ++co) {
            const float g = dyr[co];
            if (g == 0.0f) continue;
            const float * wr = w + ((size_t)co * kernel + kk) * cin;
            for (int ci = 0; ci < cin; ++ci) dxr[ci] += g * wr[ci];
        }
    }
}

void conv1d_grad_x_serial(const float * dy, const float * w, float * dx,
                          int t, int cin, int cout, int kernel, int stride, int pad) {
    for (int u = 0; u < t; ++u) conv1d_grad_x_row(dy, w, dx, u, t, cin, cout, kernel, stride, pad);
}

void conv1d_grad_x_parallel(const float * dy, const float * w, float * dx,
                            int t, int cin, int cout, int kernel, int stride, int pad) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int u = 0; u < t; ++u) conv1d_grad_x_row(dy, w, dx, u, t, cin, cout, kernel, stride, pad);
}

void conv1d_grad_x(const float * dy, const float * w, float * dx,
                   int t, int cin, int cout, int kernel, int stride, int pad) {
    if (use_parallel((int64_t)2 * t * cout * kernel * cin)) {
        conv1d_grad_x_parallel(dy, w, dx, t, cin, cout, kernel, stride, pad);
    } else {
        conv1d_grad_x_serial(dy, w, dx, t, cin, cout, kernel, stride, pad);
    }
}

static inline void conv1d_grad_w_chan(const float * dy, const float * x, float * dw, float * dbias,
                                      int co, int t, int cin, int cout, int kernel, int stride, int pad) {
    const int t_out = conv1d_out_len(t, kernel, stride, pad);
    float db = 0.0f;
    for (int to = 0; to < t_out; ++to) {
        const float g = dy[(size_t)to * cout + co];
        db += g;
        if (g == 0.0f) continue;
        const int base = to * stride - pad;
        for (int kk = 0; kk < kernel; ++kk) {
            const int ti = base + kk;
            if (ti < 0 || ti >= t) continue;
            const float * xr = x + (size_t)ti * cin;
            float * dwr = dw + ((size_t)co * kernel + kk) * cin;
            for (int ci = 0; ci < cin; ++ci) dwr[ci] += g * xr[ci];
        }
    }
    if (dbias) dbias[co] += db;
}

void conv1d_grad_w_serial(const float * dy, const float * x, float * dw, float * dbias,
                          int t, int cin, int cout, int kernel, int stride, int pad) {
    for (int co = 0; co < cout; ++co) conv1d_grad_w_chan(dy, x, dw, dbias, co, t, cin, cout, kernel, stride, pad);
}

void conv1d_grad_w_parallel(const float * dy, const float * x, float * dw, float * dbias,
                            int t, int cin, int cout, int kernel, int stride, int pad) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int co = 0; co < cout; ++co) conv1d_grad_w_chan(dy, x, dw, dbias, co, t, cin, cout, kernel, stride, pad);
}

void conv1d_grad_w(const float * dy, const float * x, float * dw, float * dbias,
                   int t, int cin, int cout, int kernel, int stride, int pad) {
    if (use_parallel((int64_t)2 * t * cout * kernel * cin)) {
        conv1d_grad_w_parallel(dy, x, dw, dbias, t, cin, cout, kernel, stride, pad);
    } else {
        conv1d_grad_w_serial(dy, x, dw, dbias, t, cin, cout, kernel, stride, pad);
    }
}

// ---------------------------------------------------------------------------
// transpose conv, layout x[t,cin], w[cin,kernel,cout], y[t_out,cout]

static inline void convtr1d_frame(const float * x, const float * w, const float * bias, float * y,
                                  int u, int t, int cin, int cout, int kernel, int stride, int pad) {
    float * yu = y + (size_t)u * cout;
    for (int co = 0; co < cout; ++co) yu[co] = bias ? bias[co] : 0.0f;
    for (int kk = 0; kk < kernel; ++kk) {
        const int num = u + pad - kk;
        if (num < 0 || num % stride != 0) continue;
        const int ti = num / stride;
        if (ti >= t) continue;
        const float * xr = x + (size_t)ti * cin;
        for (int ci = 0; ci < cin; ++ci) {
            const float xv = xr[ci];
            if (xv == 0.0f) continue;
            const float * wr = w + ((size_t)ci * kernel + kk) * cout;
            for (int co = 0; co < cout; ++co) yu[co] += xv * wr[co];
        }
    }
}

void convtr1d_serial(const float * x, const float * w, const float * bias, float * y,
                     int t, int cin, int cout, int kernel, int stride, int pad) {
    const int t_out = convtr1d_out_len(t, kernel, stride, pad);
    for (int u = 0; u < t_out; ++u) convtr1d_frame(x, w, bias, y, u, t, cin, cout, kernel, stride, pad);
}

void convtr1d_parallel(const float * x, const float * w, const float * bias, float * y,
                       int t, int cin, int cout, int kernel, int stride, int pad) {
    const int t_out = convtr1d_out_len(t, kernel, stride, pad);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int u = 0; u < t_out; ++u) convtr1d_frame(x, w, bias, y, u, t, cin, cout, kernel, stride, pad);
}

void convtr1d(const float * x, const float * w, const float * bias, float * y,
              int t, int cin, int cout, int kernel, int stride, int pad) {
    const int t_out = convtr1d_out_len(t, kernel, stride, pad);
    if (use_parallel((int64_t)2 * t_out * cin * kernel * cout)) {
        convtr1d_parallel(x, w, bias, y, t, cin, cout, kernel, stride, pad);
    } else {
        convtr1d_serial(x, w, bias, y, t, cin, cout, kernel, stride, pad);
    }
}

// dx[ti,ci] = sum_k sum_co dy[ti*stride - pad + k, co]·w[ci,k,co]
static inline void convtr1d_grad_x_row(const float * dy, const float * w, float * dx,
                                       int ti, int t, int cin, int cout, int kernel, int stride, int pad) {
    const int t_out = convtr1d_out_len(t, kernel, stride, pad);
    float * dxr = dx + (size_t)ti * cin;
    for (int kk = 0; kk < kernel; ++kk) {
        const int u = ti * stride - pad + kk;
        if (u < 0 || u >= t_out) continue;
        const float * dyr = dy + (size_t)u * cout;
        for (int ci = 0; ci < cin; ++ci) {
            const float * wr = w + ((size_t)ci * kernel + kk) * cout;
            float acc = 0.0f;
            for (int co = 0; co < cout; ++co) acc += dyr[co] * wr[co];
            dxr[ci] += acc;
        }
    }
}

void convtr1d_grad_x_serial(const float * dy, const float * w, float * dx,
                            int t, int cin, int cout, int kernel, int stride, int pad) {
    for (int ti = 0; ti < t; ++ti) convtr1d_grad_x_row(dy, w, dx, ti, t, cin, cout, kernel, stride, pad);
}

void convtr1d_grad_x_parallel(const float * dy, const float * w, float * dx,
                              int t, int cin, int cout, int kernel, int stride, int pad) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int ti = 0; ti < t; ++ti) convtr1d_grad_x_row(dy, w, dx, ti, t, cin, cout, kernel, stride, pad);
}

void convtr1d_grad_x(const float * dy, const float * w, float * dx,
                     int t, int cin, int cout, int kernel, int stride, int pad) {
    if (use_parallel((int64_t)2 * t * cin * kernel * cout)) {
        convtr1d_grad_x_parallel(dy, w, dx, t, cin, cout, kernel, stride, pad);
    } else {
        convtr1d_grad_x_serial(dy, w, dx, t, cin, cout, kernel, stride, pad);
    }
}

static inline void convtr1d_grad_w_chan(const float * dy, const float * x, float * dw,
                                        int ci, int t, int cin, int cout, int kernel, int stride, int pad) {
    const int t_out = convtr1d_out_len(t, kernel, stride, pad);
    for (int ti = 0; ti < t; ++ti) {
        const float xv = x[(size_t)ti * cin + ci];
        if (xv == 0.0f) continue;
        for (int kk = 0; kk < kernel; ++kk) {
            const int u = ti * stride - pad + kk;
            if (u < 0 || u >= t_out) continue;
            const float * dyr = dy + (size_t)u * cout;
            float * dwr = dw + ((size_t)ci * kernel + kk) * cout;
            for (int co = 0; co < cout; ++co) dwr[co] += xv * dyr[co];
        }
    }
}

void convtr1d_grad_w_serial(const float * dy, const float * x, float * dw, float * dbias,
                            int t, int cin, int cout, int kernel, int stride, int pad) {
    for (int ci = 0; ci < cin; ++ci) convtr1d_grad_w_chan(dy, x, dw, ci, t, cin, cout, kernel, stride, pad);
    if (dbias) {
        const int t_out = convtr1d_out_len(t, kernel, stride, pad);
        for (int u = 0; u < t_out; ++u) {
            const float * dyr = dy + (size_t)u * cout;
            for (int co = 0; co < cout; ++co) dbias[co] += dyr[co];
        }
    }
}

void convtr1d_grad_w_parallel(const float * dy, const float * x, float * dw, float * dbias,
                              int t, int cin, int cout, int kernel, int stride, int pad) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int ci = 0; ci < cin; ++ci) convtr1d_grad_w_chan(dy, x, dw, ci, t, cin, cout, kernel, stride, pad);
    if (dbias) {
        const int t_out = convtr1d_out_len(t, kernel, stride, pad);
        for (int u = 0; u < t_out; ++u) {
            const float * dyr = dy + (size_t)u * cout;
            for (int co = 0; co < cout; ++co) dbias[co] += dyr[co];
        }
    }
}

void convtr1d_grad_w(const float * dy, const float * x, float * dw, float * dbias,
                     int t, int cin, int cout, int kernel, int stride, int pad) {
    if (use_parallel((int64_t)2 * t * cin * kernel * cout)) {
        convtr1d_grad_w_parallel(dy, x, dw, dbias, t, cin, cout, kernel, stride, pad);
    } else {
        convtr1d_grad_w_serial(dy, x, dw, dbias, t, cin, cout, kernel, stride, pad);
    }
}

// ---------------------------------------------------------------------------
// softmax

static inline void softmax_row(const float * x, float * y, int r, int cols) {
    const float * xr = x + (size_t)r * cols;
    float * yr = y + (size_t)r * cols;
    float mx = xr[0];
    for (int j = 1; j < cols; ++j) mx = xr[j] > mx ? xr[j] : mx;
    double denom = 0.0;
    for (int j = 0; j < cols; ++j) {
        const float e = std::exp(xr[j] - mx);
        yr[j] = e;
        denom += (double)e;
    }
    const float inv = (float)(1.0 / denom);
    for (int j = 0; j < cols; ++j) yr[j] *= inv;
}

void softmax_rows_serial(const float * x, float * y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) softmax_row(x, y, r, cols);
}

void softmax_rows_parallel(const float * x, float * y, int rows, int cols) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int r = 0; r < rows; ++r) softmax_row(x, y, r, cols);
}

void softmax_rows(const float * x, float * y, int rows, int cols) {
    if (use_parallel((int64_t)8 * rows * cols)) {
        softmax_rows_parallel(x, y, rows, cols);
    } else {
        softmax_rows_serial(x, y, rows, cols);
    }
}

} // namespace dstok::kernels
