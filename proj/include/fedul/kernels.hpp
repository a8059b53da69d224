#pragma once

#include <cstddef>

namespace fedul::kernels {

// Numeric kernels behind the model, aggregation and dampening code paths.
//
// Every kernel exists twice: the OpenMP version here and a naive serial
// reference in kernels::serial. Both accumulate each output element in the
// same order, so with FP contraction disabled the two variants are bitwise
// identical for any thread count. Tests and the bench target compare them.

int max_threads();
void set_threads(int n);

// y[n,out] = x[n,in] @ w[in,out] + b[out]
void dense_forward(int n, int in, int out, const double* x, const double* w,
                   const double* b, double* y);

// dx[n,in] = dy[n,out] @ w^T
void dense_backward_data(int n, int in, int out, const double* dy,
                         const double* w, double* dx);

// dw[in,out] = x^T @ dy ; db[out] = colsum(dy)
void dense_backward_params(int n, int in, int out, const double* x,
                           const double* dy, double* dw, double* db);

void tanh_forward(std::size_t m, const double* x, double* y);
// dx = dy * (1 - y^2), y being the forward output
void tanh_backward(std::size_t m, const double* y, const double* dy, double* dx);

// Valid convolution, stride 1. x[n,c,h,w], k[oc,c,kh,kw], y[n,oc,oh,ow].
void conv2d_forward(int n, int c, int h, int w, int oc, int kh, int kw,
                    const double* x, const double* k, const double* b, double* y);
void conv2d_backward_data(int n, int c, int h, int w, int oc, int kh, int kw,
                          const double* dy, const double* k, double* dx);
void conv2d_backward_params(int n, int c, int h, int w, int oc, int kh, int kw,
                            const double* x, const double* dy, double* dk, double* db);

// 2x2 mean pooling, stride 2, floor semantics (odd trailing row/col dropped).
void avgpool2_forward(int n, int c, int h, int w, const double* x, double* y);
void avgpool2_backward(int n, int c, int h, int w, const double* dy, double* dx);

// Row-wise softmax cross-entropy. probs may alias nothing; per_loss[n];
// preds = argmax (lowest index wins ties).
void softmax_xent(int n, int classes, const double* logits, const int* labels,
                  double* probs, double* per_loss, int* preds);

// out = a + scale * b
void axpy(std::size_t m, double scale, const double* b, double* a);

// Contribution-dampening elementwise pass. For each i:
//   ratio = (|phi_all| + eps) / (|phi_forget| + eps)
//   ratio rule:  selected iff ratio < alpha
//   beta rule: selected iff min(lambda*ratio, upper) < alpha*ratio
//   selected: beta = min(lambda*ratio, upper); theta_out = beta * theta
//   else:     theta_out = theta
// beta_out[i] holds beta for selected elements and 1.0 otherwise;
// selected[i] in {0,1}. Report statistics are accumulated by the caller.
void dampen(std::size_t dim, const double* theta, const double* phi_all,
            const double* phi_forget, double lambda, double alpha, double upper,
            double eps, bool beta_rule, double* theta_out, double* beta_out,
            unsigned char* selected);

namespace serial {

void dense_forward(int n, int in, int out, const double* x, const double* w,
                   const double* b, double* y);
void dense_backward_data(int n, int in, int out, const double* dy,
                         const double* w, double* dx);
void dense_backward_params(int n, int in, int out, const double* x,
                           const double* dy, double* dw, double* db);
void tanh_forward(std::size_t m, const double* x, double* y);
void tanh_backward(std::size_t m, const double* y, const double* dy, double* dx);
void conv2d_forward(int n, int c, int h, int w, int oc, int kh, int kw,
                    const double* x, const double* k, const double* b, double* y);
void conv2d_backward_data(int n, int c, int h, int w, int oc, int kh, int kw,
                          const double* dy, const double* k, double* dx);
void conv2d_backward_params(int n, int c, int h, int w, int oc, int kh, int kw,
                            const double* x, const double* dy, double* dk, double* db);
void avgpool2_forward(int n, int c, int h, int w, const double* x, double* y);
void avgpool2_backward(int n, int c, int h, int w, const double* dy, double* dx);
void softmax_xent(int n, int classes, const double* logits, const int* labels,
                  double* probs, double* per_loss, int* preds);
void axpy(std::size_t m, double scale, const double* b, double* a);
void dampen(std::size_t dim, const double* theta, const double* phi_all,
            const double* phi_forget, double lambda, double alpha, double upper,
            double eps, bool beta_rule, double* theta_out, double* beta_out,
            unsigned char* selected);

} // namespace serial

} // namespace fedul::kernels
