#pragma once

// Dense compute kernels behind the tensor ops. Every kernel has a serial
// reference and an OpenMP variant that parallelizes only across independent
// output elements, keeping the per-element accumulation order identical, so
// the two produce bit-identical results for any thread count.

#include <cstdint>

namespace dstok::kernels {

enum class mode {
    automatic, // parallel when the op is large enough and OpenMP is compiled in
    serial,
    parallel,
};

void set_mode(mode m);
mode get_mode();
int  max_threads();

// C[m,n] = A·B (+C if acc). ta/tb flag that the buffer holds the transpose.
void matmul(const float * a, const float * b, float * c, int m, int k, int n,
            bool ta, bool tb, bool acc);
void matmul_serial(const float * a, const float * b, float * c, int m, int k, int n,
                   bool ta, bool tb, bool acc);
void matmul_parallel(const float * a, const float * b, float * c, int m, int k, int n,
                     bool ta, bool tb, bool acc);

// x[t,cin], w[cout,kernel,cin], bias[cout] (may be null) -> y[t_out,cout]
// t_out = (t + 2*pad - kernel)/stride + 1
void conv1d(const float * x, const float * w, const float * bias, float * y,
            int t, int cin, int cout, int kernel, int stride, int pad);
void conv1d_serial(const float * x, const float * w, const float * bias, float * y,
                   int t, int cin, int cout, int kernel, int stride, int pad);
void conv1d_parallel(const float * x, const float * w, const float * bias, float * y,
                     int t, int cin, int cout, int kernel, int stride, int pad);

// gradients; dx/dw are accumulated into (caller zeroes)
void conv1d_grad_x(const float * dy, const float * w, float * dx,
                   int t, int cin, int cout, int kernel, int stride, int pad);
void conv1d_grad_x_serial(const float * dy, const float * w, float * dx,
                          int t, int cin, int cout, int kernel, int stride, int pad);
void conv1d_grad_x_parallel(const float * dy, const float * w, float * dx,
                            int t, int cin, int cout, int kernel, int stride, int pad);
void conv1d_grad_w(const float * dy, const float * x, float * dw, float * dbias,
                   int t, int cin, int cout, int kernel, int stride, int pad);
void conv1d_grad_w_serial(const float * dy, const float * x, float * dw, float * dbias,
                          int t, int cin, int cout, int kernel, int stride, int pad);
void conv1d_grad_w_parallel(const float * dy, const float * x, float * dw, float * dbias,
                            int t, int cin, int cout, int kernel, int stride, int pad);

// transpose conv: x[t,cin], w[cin,kernel,cout], bias[cout] (may be null)
// -> y[t_out,cout], t_out = (t-1)*stride - 2*pad + kernel
void convtr1d(const float * x, const float * w, const float * bias, float * y,
              int t, int cin, int cout, int kernel, int stride, int pad);
void convtr1d_serial(const float * x, const float * w, const float * bias, float * y,
                     int t, int cin, int cout, int kernel, int stride, int pad);
void convtr1d_parallel(const float * x, const float * w, const float * bias, float * y,
                       int t, int cin, int cout, int kernel, int stride, int pad);
void convtr1d_grad_x(const float * dy, const float * w, float * dx,
                     int t, int cin, int cout, int kernel, int stride, int pad);
void convtr1d_grad_x_serial(const float * dy, const float * w, float * dx,
                            int t, int cin, int cout, int kernel, int stride, int pad);
void convtr1d_grad_x_parallel(const float * dy, const float * w, float * dx,
                              int t, int cin, int cout, int kernel, int stride, int pad);
void convtr1d_grad_w(const float * dy, const float * x, float * dw, float * dbias,
                     int t, int cin, int cout, int kernel, int stride, int pad);
void convtr1d_grad_w_serial(const float * dy, const float * x, float * dw, float * dbias,
                            int t, int cin, int cout, int kernel, int stride, int pad);
void convtr1d_grad_w_parallel(const float * dy, const float * x, float * dw, float * dbias,
                              int t, int cin, int cout, int kernel, int stride, int pad);

// row-wise softmax over the last dimension
void softmax_rows(const float * x, float * y, int rows, int cols);
void softmax_rows_serial(const float * x, float * y, int rows, int cols);
void softmax_rows_parallel(const float * x, float * y, int rows, int cols);

int conv1d_out_len(int t, int kernel, int stride, int pad);
int convtr1d_out_len(int t, int kernel, int stride, int pad);

} // namespace dstok::kernels
