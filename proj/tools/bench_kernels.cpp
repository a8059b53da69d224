// Times each kernel against its serial reference and cross-checks the
// outputs while at it. Run with an optional repeat count:
//   bench_kernels [reps]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "fedul/kernels.hpp"
#include "fedul/rng.hpp"

using namespace fedul;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double lo = -1.0,
                               double hi = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

double time_of(const std::function<void()>& fn, int reps) {
    // One warm-up pass, then the best of `reps` timed passes.
    fn();
    double best = 1e100;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

struct Row {
    std::string name;
    double serial_s = 0.0;
    double omp_s = 0.0;
    double diff = 0.0;
};

void print_rows(const std::vector<Row>& rows) {
    std::printf("%-28s %12s %12s %9s %10s\n", "kernel", "serial (ms)", "openmp (ms)",
                "speedup", "max diff");
    for (const auto& r : rows)
        std::printf("%-28s %12.3f %12.3f %8.2fx %10.1e\n", r.name.c_str(),
                    r.serial_s * 1e3, r.omp_s * 1e3,
                    r.omp_s > 0 ? r.serial_s / r.omp_s : 0.0, r.diff);
}

} // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::atoi(argv[1]) : 5;
    if (reps < 1) {
        std::fprintf(stderr, "usage: bench_kernels [reps>=1]\n");
        return 2;
    }
    std::printf("threads: %d, reps: %d (best-of timing)\n\n", kernels::max_threads(),
                reps);

    Rng rng(7);
    std::vector<Row> rows;

    {
        const int n = 256, in = 784, out = 256;
        const auto x = random_vec(rng, std::size_t(n) * in);
        const auto w = random_vec(rng, std::size_t(in) * out);
        const auto b = random_vec(rng, out);
        std::vector<double> ys(std::size_t(n) * out), yp(ys.size());
        Row r{"dense_forward 256x784x256"};
        r.serial_s = time_of(
            [&] { kernels::serial::dense_forward(n, in, out, x.data(), w.data(),
                                                 b.data(), ys.data()); },
            reps);
        r.omp_s = time_of(
            [&] { kernels::dense_forward(n, in, out, x.data(), w.data(), b.data(),
                                         yp.data()); },
            reps);
        r.diff = max_diff(ys, yp);
        rows.push_back(r);

        std::vector<double> dxs(std::size_t(n) * in), dxp(dxs.size());
        Row r2{"dense_backward_data"};
        r2.serial_s = time_of(
            [&] { kernels::serial::dense_backward_data(n, in, out, ys.data(), w.data(),
                                                       dxs.data()); },
            reps);
        r2.omp_s = time_of(
            [&] { kernels::dense_backward_data(n, in, out, ys.data(), w.data(),
                                               dxp.data()); },
            reps);
        r2.diff = max_diff(dxs, dxp);
        rows.push_back(r2);

        std::vector<double> dws(std::size_t(in) * out), dwp(dws.size());
        std::vector<double> dbs(out), dbp(out);
        Row r3{"dense_backward_params"};
        r3.serial_s = time_of(
            [&] { kernels::serial::dense_backward_params(n, in, out, x.data(), ys.data(),
                                                         dws.data(), dbs.data()); },
            reps);
        r3.omp_s = time_of(
            [&] { kernels::dense_backward_params(n, in, out, x.data(), ys.data(),
                                                 dwp.data(), dbp.data()); },
            reps);
        r3.diff = std::max(max_diff(dws, dwp), max_diff(dbs, dbp));
        rows.push_back(r3);
    }

    {
        const std::size_t m = 1u << 22;
        const auto x = random_vec(rng, m);
        std::vector<double> ys(m), yp(m);
        Row r{"tanh_forward 4M"};
        r.serial_s = time_of(
            [&] { kernels::serial::tanh_forward(m, x.data(), ys.data()); }, reps);
        r.omp_s = time_of([&] { kernels::tanh_forward(m, x.data(), yp.data()); }, reps);
        r.diff = max_diff(ys, yp);
        rows.push_back(r);
    }

    {
        const int n = 64, c = 8, h = 28, w = 28, oc = 16, kh = 3, kw = 3;
        const auto x = random_vec(rng, std::size_t(n) * c * h * w);
        const auto k = random_vec(rng, std::size_t(oc) * c * kh * kw);
        const auto b = random_vec(rng, oc);
        const int oh = h - kh + 1, ow = w - kw + 1;
        std::vector<double> ys(std::size_t(n) * oc * oh * ow), yp(ys.size());
        Row r{"conv2d_forward 64x8x28x28"};
        r.serial_s = time_of(
            [&] { kernels::serial::conv2d_forward(n, c, h, w, oc, kh, kw, x.data(),
                                                  k.data(), b.data(), ys.data()); },
            reps);
        r.omp_s = time_of(
            [&] { kernels::conv2d_forward(n, c, h, w, oc, kh, kw, x.data(), k.data(),
                                          b.data(), yp.data()); },
            reps);
        r.diff = max_diff(ys, yp);
        rows.push_back(r);
    }

    {
        const std::size_t dim = 1u << 22;
        const auto theta = random_vec(rng, dim, -5.0, 5.0);
        const auto pa = random_vec(rng, dim);
        const auto pf = random_vec(rng, dim);
        std::vector<double> outs(dim), outp(dim), betas(dim), betap(dim);
        std::vector<unsigned char> sels(dim), selp(dim);
        Row r{"dampen 4M"};
        r.serial_s = time_of(
            [&] {
                kernels::serial::dampen(dim, theta.data(), pa.data(), pf.data(), 1.0,
                                        0.4, 1.0, 1e-12, false, outs.data(),
                                        betas.data(), sels.data());
            },
            reps);
        r.omp_s = time_of(
            [&] {
                kernels::dampen(dim, theta.data(), pa.data(), pf.data(), 1.0, 0.4, 1.0,
                                1e-12, false, outp.data(), betap.data(), selp.data());
            },
            reps);
        r.diff = max_diff(outs, outp);
        rows.push_back(r);
    }

    {
        const std::size_t m = 1u << 22;
        const auto b = random_vec(rng, m);
        auto as = random_vec(rng, m);
        auto ap = as;
        Row r{"axpy 4M"};
        r.serial_s =
            time_of([&] { kernels::serial::axpy(m, 0.25, b.data(), as.data()); }, reps);
        r.omp_s = time_of([&] { kernels::axpy(m, 0.25, b.data(), ap.data()); }, reps);
        r.diff = 0.0; // accumulating buffers drift apart across reps by design
        rows.push_back(r);
    }

    print_rows(rows);

    double worst = 0.0;
    for (const auto& r : rows) worst = std::max(worst, r.diff);
    if (worst != 0.0) {
        std::printf("\nFAIL: serial and OpenMP outputs differ (max %g)\n", worst);
        return 1;
    }
    std::printf("\nserial and OpenMP outputs are bitwise identical\n");
    return 0;
}
