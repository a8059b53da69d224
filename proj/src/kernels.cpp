#include "fedul/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <omp.h>

namespace fedul::kernels {

int max_threads() { return omp_get_max_threads(); }

void set_threads(int n) { omp_set_num_threads(n < 1 ? 1 : n); }

// ---------------------------------------------------------------------------
// Serial reference. Naive loops; accumulation order for each output element
// is the contract the OpenMP versions must reproduce exactly.
// ---------------------------------------------------------------------------

namespace serial {

void dense_forward(int n, int in, int out, const double* x, const double* w,
                   const double* b, double* y) {
    for (int s = 0; s < n; ++s) {
        for (int j = 0; j < out; ++j) {
            double acc = b[j];
            for (int i = 0; i < in; ++i) acc += x[s * in + i] * w[i * out + j];
            y[s * out + j] = acc;
        }
    }
}

void dense_backward_data(int n, int in, int out, const double* dy,
                         const double* w, double* dx) {
    for (int s = 0; s < n; ++s) {
        for (int i = 0; i < in; ++i) {
            double acc = 0.0;
            for (int j = 0; j < out; ++j) acc += dy[s * out + j] * w[i * out + j];
            dx[s * in + i] = acc;
        }
    }
}

void dense_backward_params(int n, int in, int out, const double* x,
                           const double* dy, double* dw, double* db) {
    for (int i = 0; i < in; ++i) {
        for (int j = 0; j < out; ++j) {
            double acc = 0.0;
            for (int s = 0; s < n; ++s) acc += x[s * in + i] * dy[s * out + j];
            dw[i * out + j] = acc;
        }
    }
    for (int j = 0; j < out; ++j) {
        double acc = 0.0;
        for (int s = 0; s < n; ++s) acc += dy[s * out + j];
        db[j] = acc;
    }
}

void tanh_forward(std::size_t m, const double* x, double* y) {
    for (std::size_t i = 0; i < m; ++i) y[i] = std::tanh(x[i]);
}

void tanh_backward(std::size_t m, const double* y, const double* dy, double* dx) {
    for (std::size_t i = 0; i < m; ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
}

void conv2d_forward(int n, int c, int h, int w, int oc, int kh, int kw,
                    const double* x, const double* k, const double* b, double* y) {
    const int oh = h - kh + 1;
    const int ow = w - kw + 1;
    for (int s = 0; s < n; ++s) {
        for (int o = 0; o < oc; ++o) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = b[o];
                    for (int ci = 0; ci < c; ++ci)
                        for (int ki = 0; ki < kh; ++ki)
                            for (int kj = 0; kj < kw; ++kj)
                                acc += x[((s * c + ci) * h + oy + ki) * w + ox + kj] *
                                       k[((o * c + ci) * kh + ki) * kw + kj];
                    y[((s * oc + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
}

void conv2d_backward_data(int n, int c, int h, int w, int oc, int kh, int kw,
                          const double* dy, const double* k, double* dx) {
    const int oh = h - kh + 1;
    const int ow = w - kw + 1;
    for (int s = 0; s < n; ++s) {
        for (int ci = 0; ci < c; ++ci) {
            for (int yy = 0; yy < h; ++yy) {
                for (int xx = 0; xx < w; ++xx) {
                    double acc = 0.0;
                    for (int o = 0; o < oc; ++o)
                        for (int ki = 0; ki < kh; ++ki)
                            for (int kj = 0; kj < kw; ++kj) {
                                const int oy = yy - ki;
                                const int ox = xx - kj;
                                if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
                                acc += k[((o * c + ci) * kh + ki) * kw + kj] *
                                       dy[((s * oc + o) * oh + oy) * ow + ox];
                            }
                    dx[((s * c + ci) * h + yy) * w + xx] = acc;
                }
            }
        }
    }
}

void conv2d_backward_params(int n, int c, int h, int w, int oc, int kh, int kw,
                            const double* x, const double* dy, double* dk, double* db) {
    const int oh = h - kh + 1;
    const int ow = w - kw + 1;
    for (int o = 0; o < oc; ++o) {
        for (int ci = 0; ci < c; ++ci) {
            for (int ki = 0; ki < kh; ++ki) {
                for (int kj = 0; kj < kw; ++kj) {
                    double acc = 0.0;
                    for (int s = 0; s < n; ++s)
                        for (int oy = 0; oy < oh; ++oy)
                            for (int ox = 0; ox < ow; ++ox)
                                acc += x[((s * c + ci) * h + oy + ki) * w + ox + kj] *
                                       dy[((s * oc + o) * oh + oy) * ow + ox];
                    dk[((o * c + ci) * kh + ki) * kw + kj] = acc;
                }
            }
        }
    }
    for (int o = 0; o < oc; ++o) {
        double acc = 0.0;
        for (int s = 0; s < n; ++s)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox)
                    acc += dy[((s * oc + o) * oh + oy) * ow + ox];
        db[o] = acc;
    }
}

void avgpool2_forward(int n, int c, int h, int w, const double* x, double* y) {
    const int oh = h / 2;
    const int ow = w / 2;
    for (int s = 0; s < n; ++s)
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const double* base = x + ((s * c + ci) * h + 2 * oy) * w + 2 * ox;
                    y[((s * c + ci) * oh + oy) * ow + ox] =
                        0.25 * (base[0] + base[1] + base[w] + base[w + 1]);
                }
}

void avgpool2_backward(int n, int c, int h, int w, const double* dy, double* dx) {
    const int oh = h / 2;
    const int ow = w / 2;
    std::fill(dx, dx + static_cast<std::size_t>(n) * c * h * w, 0.0);
    for (int s = 0; s < n; ++s)
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const double g = 0.25 * dy[((s * c + ci) * oh + oy) * ow + ox];
                    double* base = dx + ((s * c + ci) * h + 2 * oy) * w + 2 * ox;
                    base[0] += g;
                    base[1] += g;
                    base[w] += g;
                    base[w + 1] += g;
                }
}

void softmax_xent(int n, int classes, const double* logits, const int* labels,
                  double* probs, double* per_loss, int* preds) {
    for (int s = 0; s < n; ++s) {
        const double* row = logits + static_cast<std::size_t>(s) * classes;
        double m = row[0];
        int arg = 0;
        for (int j = 1; j < classes; ++j)
            if (row[j] > m) {
                m = row[j];
                arg = j;
            }
        double z = 0.0;
        for (int j = 0; j < classes; ++j) z += std::exp(row[j] - m);
        const double logz = std::log(z);
        for (int j = 0; j < classes; ++j)
            probs[static_cast<std::size_t>(s) * classes + j] = std::exp(row[j] - m) / z;
        per_loss[s] = -(row[labels[s]] - m - logz);
        preds[s] = arg;
    }
}

void axpy(std::size_t m, double scale, const double* b, double* a) {
    for (std::size_t i = 0; i < m; ++i) a[i] += scale * b[i];
}

void dampen(std::size_t dim, const double* theta, const double* phi_all,
            const double* phi_forget, double lambda, double alpha, double upper,
            double eps, bool beta_rule, double* theta_out, double* beta_out,
            unsigned char* selected) {
    for (std::size_t i = 0; i < dim; ++i) {
        const double ratio = (std::fabs(phi_all[i]) + eps) / (std::fabs(phi_forget[i]) + eps);
        const double beta = std::min(lambda * ratio, upper);
        const bool hit = beta_rule ? (beta < alpha * ratio) : (ratio < alpha);
        if (hit) {
            theta_out[i] = beta * theta[i];
            beta_out[i] = beta;
            selected[i] = 1;
        } else {
            theta_out[i] = theta[i];
            beta_out[i] = 1.0;
            selected[i] = 0;
        }
    }
}

} // namespace serial

// ---------------------------------------------------------------------------
// OpenMP kernels. Each output element is owned by exactly one thread and
// accumulated in the same order as the serial reference; there are no
// cross-thread floating point reductions, so results do not depend on the
// thread count.
// ---------------------------------------------------------------------------

void dense_forward(int n, int in, int out, const double* x, const double* w,
                   const double* b, double* y) {
#pragma omp parallel for schedule(static) if (n > 1)
    for (int s = 0; s < n; ++s) {
        double* yrow = y + static_cast<std::size_t>(s) * out;
        const double* xrow = x + static_cast<std::size_t>(s) * in;
        for (int j = 0; j < out; ++j) yrow[j] = b[j];
        // axpy form: the j loop is unit-stride and has no reduction, while
        // y[s,j] still accumulates over i in ascending order.
        for (int i = 0; i < in; ++i) {
            const double xv = xrow[i];
            const double* wrow = w + static_cast<std::size_t>(i) * out;
            for (int j = 0; j < out; ++j) yrow[j] += xv * wrow[j];
        }
    }
}

void dense_backward_data(int n, int in, int out, const double* dy,
                         const double* w, double* dx) {
#pragma omp parallel for schedule(static) if (n > 1)
    for (int s = 0; s < n; ++s) {
        const double* dyrow = dy + static_cast<std::size_t>(s) * out;
        double* dxrow = dx + static_cast<std::size_t>(s) * in;
        for (int i = 0; i < in; ++i) {
            const double* wrow = w + static_cast<std::size_t>(i) * out;
            double acc = 0.0;
            for (int j = 0; j < out; ++j) acc += dyrow[j] * wrow[j];
            dxrow[i] = acc;
        }
    }
}

void dense_backward_params(int n, int in, int out, const double* x,
                           const double* dy, double* dw, double* db) {
#pragma omp parallel for schedule(static) if (in > 1)
    for (int i = 0; i < in; ++i) {
        double* dwrow = dw + static_cast<std::size_t>(i) * out;
        for (int j = 0; j < out; ++j) dwrow[j] = 0.0;
        // dw[i,j] accumulates over s ascending, matching the reference.
        for (int s = 0; s < n; ++s) {
            const double xv = x[static_cast<std::size_t>(s) * in + i];
            const double* dyrow = dy + static_cast<std::size_t>(s) * out;
            for (int j = 0; j < out; ++j) dwrow[j] += xv * dyrow[j];
        }
    }
#pragma omp parallel for schedule(static) if (out > 8)
    for (int j = 0; j < out; ++j) {
        double acc = 0.0;
        for (int s = 0; s < n; ++s) acc += dy[static_cast<std::size_t>(s) * out + j];
        db[j] = acc;
    }
}

void tanh_forward(std::size_t m, const double* x, double* y) {
#pragma omp parallel for schedule(static) if (m > 4096)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
        y[i] = std::tanh(x[i]);
}

void tanh_backward(std::size_t m, const double* y, const double* dy, double* dx) {
#pragma omp parallel for schedule(static) if (m > 4096)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
        dx[i] = dy[i] * (1.0 - y[i] * y[i]);
}

void conv2d_forward(int n, int c, int h, int w, int oc, int kh, int kw,
                    const double* x, const double* k, const double* b, double* y) {
    const int oh = h - kh + 1;
    const int ow = w - kw + 1;
#pragma omp parallel for collapse(2) schedule(static) if (n * oc > 1)
    for (int s = 0; s < n; ++s) {
        for (int o = 0; o < oc; ++o) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = b[o];
                    for (int ci = 0; ci < c; ++ci)
                        for (int ki = 0; ki < kh; ++ki)
                            for (int kj = 0; kj < kw; ++kj)
                                acc += x[((s * c + ci) * h + oy + ki) * w + ox + kj] *
                                       k[((o * c + ci) * kh + ki) * kw + kj];
                    y[((s * oc + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
}

void conv2d_backward_data(int n, int c, int h, int w, int oc, int kh, int kw,
                          const double* dy, const double* k, double* dx) {
    const int oh = h - kh + 1;
    const int ow = w - kw + 1;
#pragma omp parallel for collapse(2) schedule(static) if (n * c > 1)
    for (int s = 0; s < n; ++s) {
        for (int ci = 0; ci < c; ++ci) {
            for (int yy = 0; yy < h; ++yy) {
                for (int xx = 0; xx < w; ++xx) {
                    double acc = 0.0;
                    for (int o = 0; o < oc; ++o)
                        for (int ki = 0; ki < kh; ++ki)
                            for (int kj = 0; kj < kw; ++kj) {
                                const int oy = yy - ki;
                                const int ox = xx - kj;
                                if (oy < 0 || oy >= oh || ox < 0 || ox >= ow) continue;
                                acc += k[((o * c + ci) * kh + ki) * kw + kj] *
                                       dy[((s * oc + o) * oh + oy) * ow + ox];
                            }
                    dx[((s * c + ci) * h + yy) * w + xx] = acc;
                }
            }
        }
    }
}

void conv2d_backward_params(int n, int c, int h, int w, int oc, int kh, int kw,
                            const double* x, const double* dy, double* dk, double* db) {
    const int oh = h - kh + 1;
    const int ow = w - kw + 1;
#pragma omp parallel for collapse(2) schedule(static) if (oc * c > 1)
    for (int o = 0; o < oc; ++o) {
        for (int ci = 0; ci < c; ++ci) {
            for (int ki = 0; ki < kh; ++ki) {
                for (int kj = 0; kj < kw; ++kj) {
                    double acc = 0.0;
                    for (int s = 0; s < n; ++s)
                        for (int oy = 0; oy < oh; ++oy)
                            for (int ox = 0; ox < ow; ++ox)
                                acc += x[((s * c + ci) * h + oy + ki) * w + ox + kj] *
                                       dy[((s * oc + o) * oh + oy) * ow + ox];
                    dk[((o * c + ci) * kh + ki) * kw + kj] = acc;
                }
            }
        }
    }
#pragma omp parallel for schedule(static) if (oc > 1)
    for (int o = 0; o < oc; ++o) {
        double acc = 0.0;
        for (int s = 0; s < n; ++s)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox)
                    acc += dy[((s * oc + o) * oh + oy) * ow + ox];
        db[o] = acc;
    }
}

void avgpool2_forward(int n, int c, int h, int w, const double* x, double* y) {
    const int oh = h / 2;
    const int ow = w / 2;
#pragma omp parallel for collapse(2) schedule(static) if (n * c > 1)
    for (int s = 0; s < n; ++s)
        for (int ci = 0; ci < c; ++ci)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const double* base = x + ((s * c + ci) * h + 2 * oy) * w + 2 * ox;
                    y[((s * c + ci) * oh + oy) * ow + ox] =
                        0.25 * (base[0] + base[1] + base[w] + base[w + 1]);
                }
}

void avgpool2_backward(int n, int c, int h, int w, const double* dy, double* dx) {
    const int oh = h / 2;
    const int ow = w / 2;
#pragma omp parallel for collapse(2) schedule(static) if (n * c > 1)
    for (int s = 0; s < n; ++s)
        for (int ci = 0; ci < c; ++ci) {
            double* plane = dx + ((s * c + ci) * static_cast<std::size_t>(h)) * w;
            for (int i = 0; i < h * w; ++i) plane[i] = 0.0;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    const double g = 0.25 * dy[((s * c + ci) * oh + oy) * ow + ox];
                    double* base = plane + (2 * oy) * w + 2 * ox;
                    base[0] += g;
                    base[1] += g;
                    base[w] += g;
                    base[w + 1] += g;
                }
        }
}

void softmax_xent(int n, int classes, const double* logits, const int* labels,
                  double* probs, double* per_loss, int* preds) {
#pragma omp parallel for schedule(static) if (n > 1)
    for (int s = 0; s < n; ++s) {
        const double* row = logits + static_cast<std::size_t>(s) * classes;
        double m = row[0];
        int arg = 0;
        for (int j = 1; j < classes; ++j)
            if (row[j] > m) {
                m = row[j];
                arg = j;
            }
        double z = 0.0;
        for (int j = 0; j < classes; ++j) z += std::exp(row[j] - m);
        const double logz = std::log(z);
        for (int j = 0; j < classes; ++j)
            probs[static_cast<std::size_t>(s) * classes + j] = std::exp(row[j] - m) / z;
        per_loss[s] = -(row[labels[s]] - m - logz);
        preds[s] = arg;
    }
}

void axpy(std::size_t m, double scale, const double* b, double* a) {
#pragma omp parallel for schedule(static) if (m > 8192)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i)
        a[i] += scale * b[i];
}

void dampen(std::size_t dim, const double* theta, const double* phi_all,
            const double* phi_forget, double lambda, double alpha, double upper,
            double eps, bool beta_rule, double* theta_out, double* beta_out,
            unsigned char* selected) {
#pragma omp parallel for schedule(static) if (dim > 4096)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(dim); ++i) {
        const double ratio = (std::fabs(phi_all[i]) + eps) / (std::fabs(phi_forget[i]) + eps);
        const double beta = std::min(lambda * ratio, upper);
        const bool hit = beta_rule ? (beta < alpha * ratio) : (ratio < alpha);
        if (hit) {
            theta_out[i] = beta * theta[i];
            beta_out[i] = beta;
            selected[i] = 1;
        } else {
            theta_out[i] = theta[i];
            beta_out[i] = 1.0;
            selected[i] = 0;
        }
    }
}

} // namespace fedul::kernels
