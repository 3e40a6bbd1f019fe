#include <doctest.h>

#include <cmath>
#include <vector>

#include "clonelm/kernels.hpp"
#include "clonelm/util.hpp"

using namespace clonelm;
namespace k = clonelm::kernels;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

struct ParallelGuard {
    ParallelGuard() { k::set_parallel_enabled(true); }
    ~ParallelGuard() { k::set_parallel_enabled(true); }
};

}  // namespace

TEST_CASE("matmul variants match a hand example") {
    // A = [[1,2],[3,4]], B = [[5,6],[7,8]]
    std::vector<double> a = {1, 2, 3, 4}, b = {5, 6, 7, 8}, c(4);
    k::serial::matmul_nn(a, b, c, 2, 2, 2);
    CHECK(c == std::vector<double>{19, 22, 43, 50});
    k::serial::matmul_nt(a, b, c, 2, 2, 2);
    CHECK(c == std::vector<double>{17, 23, 39, 53});
    k::serial::matmul_tn(a, b, c, 2, 2, 2);
    CHECK(c == std::vector<double>{26, 30, 38, 44});

    k::serial::matmul_nn(a, b, c, 2, 2, 2, true);  // accumulate on top of tn result
    CHECK(c == std::vector<double>{45, 52, 81, 94});
}

TEST_CASE("openmp kernels are bitwise identical to the serial reference") {
    ParallelGuard guard;
    // sizes straddle the parallel threshold on purpose
    const std::size_t shapes[][3] = {{3, 5, 4}, {64, 128, 96}, {130, 70, 210}};
    for (const auto& s : shapes) {
        std::size_t m = s[0], kk = s[1], n = s[2];
        std::vector<double> a = random_values(m * kk, 1);
        std::vector<double> bt = random_values(n * kk, 2);
        std::vector<double> bn = random_values(kk * n, 3);
        std::vector<double> am = random_values(m * n, 4);
        std::vector<double> bm = random_values(m * kk, 5);

        std::vector<double> c_ref(m * n), c_omp(m * n);
        k::serial::matmul_nt(a, bt, c_ref, m, kk, n);
        k::matmul_nt(a, bt, c_omp, m, kk, n);
        CHECK(c_ref == c_omp);

        k::serial::matmul_nn(a, bn, c_ref, m, kk, n);
        k::matmul_nn(a, bn, c_omp, m, kk, n);
        CHECK(c_ref == c_omp);

        std::vector<double> d_ref(n * kk, 0.5), d_omp(n * kk, 0.5);
        k::serial::matmul_tn(am, bm, d_ref, m, n, kk, true);
        k::matmul_tn(am, bm, d_omp, m, n, kk, true);
        CHECK(d_ref == d_omp);
    }
}

TEST_CASE("softmax rows are normalized and positive") {
    ParallelGuard guard;
    std::vector<double> x = random_values(40 * 700, 9);
    std::vector<double> y = x;
    k::serial::softmax_rows(x, 40, 700);
    k::softmax_rows(y, 40, 700);
    CHECK(x == y);
    for (std::size_t i = 0; i < 40; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 700; ++j) {
            CHECK(x[i * 700 + j] > 0.0);
            sum += x[i * 700 + j];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("causal softmax zeroes the future") {
    std::vector<double> s = random_values(6 * 6, 13);
    k::serial::causal_softmax_rows(s, 6);
    for (std::size_t i = 0; i < 6; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            if (j > i) CHECK(s[i * 6 + j] == 0.0);
            sum += s[i * 6 + j];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("layer norm forward/backward agree across paths and differencing") {
    ParallelGuard guard;
    const std::size_t rows = 70, cols = 300;  // above threshold
    std::vector<double> x = random_values(rows * cols, 21);
    std::vector<double> gain = random_values(cols, 22);
    std::vector<double> bias = random_values(cols, 23);

    std::vector<double> y1(rows * cols), y2(rows * cols);
    std::vector<double> m1(rows), r1(rows), m2(rows), r2(rows);
    k::serial::layer_norm_rows(x, gain, bias, y1, m1, r1, rows, cols);
    k::layer_norm_rows(x, gain, bias, y2, m2, r2, rows, cols);
    CHECK(y1 == y2);
    CHECK(r1 == r2);

    std::vector<double> dy = random_values(rows * cols, 24);
    std::vector<double> dx1(rows * cols, 0.0), dg1(cols, 0.0), db1(cols, 0.0);
    std::vector<double> dx2(rows * cols, 0.0), dg2(cols, 0.0), db2(cols, 0.0);
    k::serial::layer_norm_backward_rows(dy, x, gain, m1, r1, dx1, dg1, db1, rows, cols);
    k::layer_norm_backward_rows(dy, x, gain, m2, r2, dx2, dg2, db2, rows, cols);
    CHECK(dx1 == dx2);
    CHECK(dg1 == dg2);
    CHECK(db1 == db2);

    // finite differences on a small instance: d/dx of sum(dy . y)
    const std::size_t n = 7;
    std::vector<double> xs = random_values(n, 30), g = random_values(n, 31),
                        b = random_values(n, 32), dys = random_values(n, 33);
    std::vector<double> dxs(n, 0.0), dgs(n, 0.0), dbs(n, 0.0), ys(n), mean(1), rstd(1);
    k::serial::layer_norm_rows(xs, g, b, ys, mean, rstd, 1, n);
    k::serial::layer_norm_backward_rows(dys, xs, g, mean, rstd, dxs, dgs, dbs, 1, n);
    const double h = 1e-6;
    for (std::size_t j = 0; j < n; ++j) {
        auto value = [&](double delta) {
            std::vector<double> xp = xs;
            xp[j] += delta;
            std::vector<double> yp(n), mp(1), rp(1);
            k::serial::layer_norm_rows(xp, g, b, yp, mp, rp, 1, n);
            double s = 0.0;
            for (std::size_t t = 0; t < n; ++t) s += dys[t] * yp[t];
            return s;
        };
        double fd = (value(h) - value(-h)) / (2 * h);
        CHECK(fd == doctest::Approx(dxs[j]).epsilon(1e-5));
    }
}

TEST_CASE("gelu matches its derivative by central differences") {
    std::vector<double> x = {-3.0, -1.0, -0.1, 0.0, 0.1, 1.0, 3.0};
    std::vector<double> dy(x.size(), 1.0), dx(x.size(), 0.0), y(x.size());
    k::serial::gelu(x, y);
    k::serial::gelu_backward(x, dy, dx);
    const double h = 1e-6;
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::vector<double> xp = x, xm = x, yp(x.size()), ym(x.size());
        xp[i] += h;
        xm[i] -= h;
        k::serial::gelu(xp, yp);
        k::serial::gelu(xm, ym);
        double fd = (yp[i] - ym[i]) / (2 * h);
        CHECK(fd == doctest::Approx(dx[i]).epsilon(1e-6));
    }
}

TEST_CASE("disabling parallelism routes everything through the reference") {
    k::set_parallel_enabled(false);
    CHECK_FALSE(k::parallel_enabled());
    std::vector<double> a = random_values(200 * 200, 40), b = random_values(200 * 200, 41);
    std::vector<double> c1(200 * 200), c2(200 * 200);
    k::matmul_nt(a, b, c1, 200, 200, 200);
    k::serial::matmul_nt(a, b, c2, 200, 200, 200);
    CHECK(c1 == c2);
    k::set_parallel_enabled(true);
}
