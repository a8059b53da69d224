#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "fedul/kernels.hpp"
#include "fedul/rng.hpp"

using namespace fedul;
namespace k = fedul::kernels;

namespace {

std::vector<double> randvec(Rng& rng, std::size_t m, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(m);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) return false;
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

TEST_CASE("dense forward hand example") {
    // 1 sample, in=2, out=2
    const double x[] = {1.0, 2.0};
    const double w[] = {3.0, 4.0, 5.0, 6.0}; // w[i*out+j]
    const double b[] = {0.5, -0.5};
    double y[2];
    k::serial::dense_forward(1, 2, 2, x, w, b, y);
    CHECK(y[0] == doctest::Approx(13.5));
    CHECK(y[1] == doctest::Approx(15.5));
}

TEST_CASE("dense backward hand examples") {
    const double w[] = {3.0, 4.0, 5.0, 6.0};
    const double dy[] = {1.0, 2.0};
    double dx[2];
    k::serial::dense_backward_data(1, 2, 2, dy, w, dx);
    CHECK(dx[0] == doctest::Approx(11.0));
    CHECK(dx[1] == doctest::Approx(17.0));

    const double x[] = {1.0, 2.0};
    const double dy2[] = {0.5, -1.0};
    double dw[4] = {}, db[2] = {};
    k::serial::dense_backward_params(1, 2, 2, x, dy2, dw, db);
    CHECK(dw[0] == doctest::Approx(0.5));
    CHECK(dw[1] == doctest::Approx(-1.0));
    CHECK(dw[2] == doctest::Approx(1.0));
    CHECK(dw[3] == doctest::Approx(-2.0));
    CHECK(db[0] == doctest::Approx(0.5));
    CHECK(db[1] == doctest::Approx(-1.0));
}

TEST_CASE("softmax cross-entropy basics") {
    // Uniform logits: probs 1/C, loss ln C, tie resolves to index 0.
    const int C = 5;
    std::vector<double> logits(C, 0.7);
    std::vector<int> labels = {3};
    std::vector<double> probs(C), loss(1);
    std::vector<int> preds(1);
    k::serial::softmax_xent(1, C, logits.data(), labels.data(), probs.data(),
                            loss.data(), preds.data());
    for (int j = 0; j < C; ++j) CHECK(probs[j] == doctest::Approx(0.2));
    CHECK(loss[0] == doctest::Approx(std::log(5.0)));
    CHECK(preds[0] == 0);

    // Two-class example computed by hand.
    const double l2[] = {1.0, 2.0};
    const int y2[] = {1};
    double p2[2], per2[1];
    int pr2[1];
    k::serial::softmax_xent(1, 2, l2, y2, p2, per2, pr2);
    CHECK(p2[0] == doctest::Approx(0.2689414213699951));
    CHECK(p2[1] == doctest::Approx(0.7310585786300049));
    CHECK(per2[0] == doctest::Approx(0.31326168751822286));
    CHECK(pr2[0] == 1);
}

TEST_CASE("softmax is shift invariant and loss stays finite for huge logits") {
    Rng rng(11);
    const int n = 4, C = 7;
    auto logits = randvec(rng, n * C, -3.0, 3.0);
    std::vector<int> labels(n);
    for (int s = 0; s < n; ++s) labels[s] = static_cast<int>(rng.below(C));
    std::vector<double> p1(n * C), l1(n), p2(n * C), l2(n);
    std::vector<int> pr1(n), pr2(n);
    k::serial::softmax_xent(n, C, logits.data(), labels.data(), p1.data(), l1.data(), pr1.data());
    auto shifted = logits;
    for (int s = 0; s < n; ++s)
        for (int j = 0; j < C; ++j) shifted[s * C + j] += 100.0 * (s + 1);
    k::serial::softmax_xent(n, C, shifted.data(), labels.data(), p2.data(), l2.data(), pr2.data());
    for (int i = 0; i < n * C; ++i) CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-9));
    for (int s = 0; s < n; ++s) CHECK(l1[s] == doctest::Approx(l2[s]).epsilon(1e-9));

    const double huge[] = {800.0, -800.0};
    const int y[] = {1};
    double p[2], per[1];
    int pr[1];
    k::serial::softmax_xent(1, 2, huge, y, p, per, pr);
    CHECK(std::isfinite(per[0]));
    CHECK(per[0] > 100.0);
    CHECK(pr[0] == 0);
}

TEST_CASE("avgpool hand examples") {
    const double x[] = {1.0, 2.0, 3.0, 4.0};
    double y[1];
    k::serial::avgpool2_forward(1, 1, 2, 2, x, y);
    CHECK(y[0] == doctest::Approx(2.5));

    double dx[4];
    const double dy[] = {1.0};
    k::serial::avgpool2_backward(1, 1, 2, 2, dy, dx);
    for (int i = 0; i < 4; ++i) CHECK(dx[i] == doctest::Approx(0.25));

    // Odd trailing row/col is dropped in forward and gets zero gradient.
    const double x3[] = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    double y3[1];
    k::serial::avgpool2_forward(1, 1, 3, 3, x3, y3);
    CHECK(y3[0] == doctest::Approx(3.0));
    double dx3[9];
    k::serial::avgpool2_backward(1, 1, 3, 3, dy, dx3);
    CHECK(dx3[0] == doctest::Approx(0.25));
    CHECK(dx3[2] == doctest::Approx(0.0));
    CHECK(dx3[8] == doctest::Approx(0.0));
}

TEST_CASE("conv hand examples") {
    const double x[] = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<double> kones(9, 1.0);
    const double b[] = {0.5};
    double y[1];
    k::serial::conv2d_forward(1, 1, 3, 3, 1, 3, 3, x, kones.data(), b, y);
    CHECK(y[0] == doctest::Approx(45.5));

    const double kk[] = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    const double dy[] = {2.0};
    double dx[9];
    k::serial::conv2d_backward_data(1, 1, 3, 3, 1, 3, 3, dy, kk, dx);
    for (int i = 0; i < 9; ++i) CHECK(dx[i] == doctest::Approx(2.0 * kk[i]));

    double dk[9] = {}, db[1] = {};
    k::serial::conv2d_backward_params(1, 1, 3, 3, 1, 3, 3, x, dy, dk, db);
    for (int i = 0; i < 9; ++i) CHECK(dk[i] == doctest::Approx(2.0 * x[i]));
    CHECK(db[0] == doctest::Approx(2.0));
}

TEST_CASE("tanh and axpy") {
    const double x[] = {-2.0, 0.0, 0.5};
    double y[3];
    k::serial::tanh_forward(3, x, y);
    for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(std::tanh(x[i])));
    const double dy[] = {1.0, 1.0, 2.0};
    double dx[3];
    k::serial::tanh_backward(3, y, dy, dx);
    for (int i = 0; i < 3; ++i)
        CHECK(dx[i] == doctest::Approx(dy[i] * (1.0 - y[i] * y[i])));

    double a[] = {1.0, 2.0};
    const double bb[] = {3.0, 4.0};
    k::serial::axpy(2, -0.5, bb, a);
    CHECK(a[0] == doctest::Approx(-0.5));
    CHECK(a[1] == doctest::Approx(0.0));
}

TEST_CASE("dampen hand example") {
    const double theta[] = {10.0, 10.0};
    const double phi_all[] = {2.0, 1.0};
    const double phi_forget[] = {1.0, 4.0};
    double out[2], beta[2];
    unsigned char sel[2];
    k::serial::dampen(2, theta, phi_all, phi_forget, 1.0, 0.5, 1.0, 1e-12, false,
                      out, beta, sel);
    CHECK(sel[0] == 0);
    CHECK(sel[1] == 1);
    CHECK(out[0] == 10.0); // untouched bits
    CHECK(out[1] == doctest::Approx(2.5).epsilon(1e-9));
    CHECK(beta[0] == 1.0);
    CHECK(beta[1] == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("dampen uses magnitudes and the two selection rules differ") {
    // Signs must not matter for the ratio.
    const double theta[] = {3.0};
    const double pa[] = {-2.0};
    const double pf[] = {4.0};
    double out[1], beta[1];
    unsigned char sel[1];
    k::serial::dampen(1, theta, pa, pf, 1.0, 0.6, 10.0, 1e-12, false, out, beta, sel);
    CHECK(sel[0] == 1);
    CHECK(beta[0] == doctest::Approx(0.5).epsilon(1e-9));

    // ratio 0.25, lambda=10: the ratio rule selects and scales up by min(2.5, 10);
    // the algorithm-style rule compares beta against alpha*ratio and skips.
    const double th[] = {10.0};
    const double a2[] = {1.0};
    const double f2[] = {4.0};
    k::serial::dampen(1, th, a2, f2, 10.0, 0.5, 10.0, 1e-12, false, out, beta, sel);
    CHECK(sel[0] == 1);
    CHECK(out[0] == doctest::Approx(25.0).epsilon(1e-9));
    k::serial::dampen(1, th, a2, f2, 10.0, 0.5, 10.0, 1e-12, true, out, beta, sel);
    CHECK(sel[0] == 0);
    CHECK(out[0] == 10.0);
}

TEST_CASE("dampen clamps beta at the upper bound") {
    const double theta[] = {4.0};
    const double pa[] = {1.0};
    const double pf[] = {4.0};
    double out[1], beta[1];
    unsigned char sel[1];
    k::serial::dampen(1, theta, pa, pf, 100.0, 0.5, 2.0, 1e-12, false, out, beta, sel);
    CHECK(sel[0] == 1);
    CHECK(beta[0] == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(out[0] == doctest::Approx(8.0).epsilon(1e-9));
}

TEST_CASE("parallel kernels match serial bitwise across thread counts") {
    Rng rng(20260814);
    const int saved = k::max_threads();
    for (int threads : {1, 2, 3, 5}) {
        k::set_threads(threads);
        CAPTURE(threads);

        {
            const int n = 17, in = 23, out = 11;
            auto x = randvec(rng, n * in);
            auto w = randvec(rng, in * out);
            auto b = randvec(rng, out);
            std::vector<double> y1(n * out), y2(n * out);
            k::serial::dense_forward(n, in, out, x.data(), w.data(), b.data(), y1.data());
            k::dense_forward(n, in, out, x.data(), w.data(), b.data(), y2.data());
            CHECK(bitwise_equal(y1, y2));

            auto dy = randvec(rng, n * out);
            std::vector<double> dx1(n * in), dx2(n * in);
            k::serial::dense_backward_data(n, in, out, dy.data(), w.data(), dx1.data());
            k::dense_backward_data(n, in, out, dy.data(), w.data(), dx2.data());
            CHECK(bitwise_equal(dx1, dx2));

            std::vector<double> dw1(in * out), dw2(in * out), db1(out), db2(out);
            k::serial::dense_backward_params(n, in, out, x.data(), dy.data(), dw1.data(), db1.data());
            k::dense_backward_params(n, in, out, x.data(), dy.data(), dw2.data(), db2.data());
            CHECK(bitwise_equal(dw1, dw2));
            CHECK(bitwise_equal(db1, db2));
        }

        {
            const int n = 3, c = 2, h = 9, w = 8, oc = 4;
            auto x = randvec(rng, n * c * h * w);
            auto kk = randvec(rng, oc * c * 9);
            auto b = randvec(rng, oc);
            const int oh = h - 2, ow = w - 2;
            std::vector<double> y1(n * oc * oh * ow), y2(y1.size());
            k::serial::conv2d_forward(n, c, h, w, oc, 3, 3, x.data(), kk.data(), b.data(), y1.data());
            k::conv2d_forward(n, c, h, w, oc, 3, 3, x.data(), kk.data(), b.data(), y2.data());
            CHECK(bitwise_equal(y1, y2));

            auto dy = randvec(rng, y1.size());
            std::vector<double> dx1(x.size()), dx2(x.size());
            k::serial::conv2d_backward_data(n, c, h, w, oc, 3, 3, dy.data(), kk.data(), dx1.data());
            k::conv2d_backward_data(n, c, h, w, oc, 3, 3, dy.data(), kk.data(), dx2.data());
            CHECK(bitwise_equal(dx1, dx2));

            std::vector<double> dk1(kk.size()), dk2(kk.size()), db1(oc), db2(oc);
            k::serial::conv2d_backward_params(n, c, h, w, oc, 3, 3, x.data(), dy.data(), dk1.data(), db1.data());
            k::conv2d_backward_params(n, c, h, w, oc, 3, 3, x.data(), dy.data(), dk2.data(), db2.data());
            CHECK(bitwise_equal(dk1, dk2));
            CHECK(bitwise_equal(db1, db2));

            std::vector<double> p1(n * c * (h / 2) * (w / 2)), p2(p1.size());
            k::serial::avgpool2_forward(n, c, h, w, x.data(), p1.data());
            k::avgpool2_forward(n, c, h, w, x.data(), p2.data());
            CHECK(bitwise_equal(p1, p2));
            auto pg = randvec(rng, p1.size());
            std::vector<double> pdx1(x.size()), pdx2(x.size());
            k::serial::avgpool2_backward(n, c, h, w, pg.data(), pdx1.data());
            k::avgpool2_backward(n, c, h, w, pg.data(), pdx2.data());
            CHECK(bitwise_equal(pdx1, pdx2));
        }

        {
            // Large enough to cross every parallel-dispatch threshold.
            const std::size_t m = 20000;
            auto x = randvec(rng, m, -2.0, 2.0);
            std::vector<double> t1(m), t2(m);
            k::serial::tanh_forward(m, x.data(), t1.data());
            k::tanh_forward(m, x.data(), t2.data());
            CHECK(bitwise_equal(t1, t2));
            auto dy = randvec(rng, m);
            std::vector<double> g1(m), g2(m);
            k::serial::tanh_backward(m, t1.data(), dy.data(), g1.data());
            k::tanh_backward(m, t1.data(), dy.data(), g2.data());
            CHECK(bitwise_equal(g1, g2));

            auto a1 = randvec(rng, m);
            auto a2 = a1;
            auto b = randvec(rng, m);
            k::serial::axpy(m, 0.3, b.data(), a1.data());
            k::axpy(m, 0.3, b.data(), a2.data());
            CHECK(bitwise_equal(a1, a2));

            auto theta = randvec(rng, m, -5.0, 5.0);
            auto pa = randvec(rng, m, -1.0, 1.0);
            auto pf = randvec(rng, m, -1.0, 1.0);
            std::vector<double> o1(m), o2(m), be1(m), be2(m);
            std::vector<unsigned char> s1(m), s2(m);
            k::serial::dampen(m, theta.data(), pa.data(), pf.data(), 0.8, 1.2, 3.0,
                              1e-12, false, o1.data(), be1.data(), s1.data());
            k::dampen(m, theta.data(), pa.data(), pf.data(), 0.8, 1.2, 3.0,
                      1e-12, false, o2.data(), be2.data(), s2.data());
            CHECK(bitwise_equal(o1, o2));
            CHECK(bitwise_equal(be1, be2));
            CHECK(std::memcmp(s1.data(), s2.data(), m) == 0);
        }

        {
            const int n = 9, C = 10;
            auto logits = randvec(rng, n * C, -4.0, 4.0);
            std::vector<int> labels(n);
            for (int s = 0; s < n; ++s) labels[s] = static_cast<int>(rng.below(C));
            std::vector<double> p1(n * C), p2(n * C), l1(n), l2(n);
            std::vector<int> pr1(n), pr2(n);
            k::serial::softmax_xent(n, C, logits.data(), labels.data(), p1.data(), l1.data(), pr1.data());
            k::softmax_xent(n, C, logits.data(), labels.data(), p2.data(), l2.data(), pr2.data());
            CHECK(bitwise_equal(p1, p2));
            CHECK(bitwise_equal(l1, l2));
            CHECK(pr1 == pr2);
        }
    }
    k::set_threads(saved);
}
