#include "clonelm/kernels.hpp"

#include <atomic>
#include <cassert>
#include <cmath>

namespace clonelm::kernels {

namespace {

std::atomic<bool> g_parallel{true};

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelThreshold = 16384;

constexpr double kLnEps = 1e-5;
constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / 3.141592653589793);

inline double gelu_one(double x) {
    double u = kSqrt2OverPi * (x + kGeluCoeff * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_grad_one(double x) {
    double u = kSqrt2OverPi * (x + kGeluCoeff * x * x * x);
    double t = std::tanh(u);
    double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

inline void softmax_row(double* row, std::size_t n) {
    double max = row[0];
    for (std::size_t j = 1; j < n; ++j) max = row[j] > max ? row[j] : max;
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        row[j] = std::exp(row[j] - max);
        sum += row[j];
    }
    double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
}

inline void layer_norm_row(const double* x, const double* gain, const double* bias,
                           double* y, double* mean, double* rstd, std::size_t n) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double d = x[j] - mu;
        var += d * d;
    }
    var /= static_cast<double>(n);
    double rs = 1.0 / std::sqrt(var + kLnEps);
    for (std::size_t j = 0; j < n; ++j) y[j] = gain[j] * ((x[j] - mu) * rs) + bias[j];
    *mean = mu;
    *rstd = rs;
}

inline void layer_norm_backward_row(const double* dy, const double* x,
                                    const double* gain, double mean, double rstd,
                                    double* dx, std::size_t n) {
    double mean_dxhat = 0.0;
    double mean_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double xhat = (x[j] - mean) * rstd;
        double dxhat = dy[j] * gain[j];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat;
    }
    mean_dxhat /= static_cast<double>(n);
    mean_dxhat_xhat /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
        double xhat = (x[j] - mean) * rstd;
        double dxhat = dy[j] * gain[j];
        dx[j] += rstd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
    }
}

}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel_enabled(bool enabled) {
    g_parallel.store(enabled, std::memory_order_relaxed);
}

// --- serial reference --------------------------------------------------------

namespace serial {

void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
    assert(a.size() == m * k && b.size() == k * n && c.size() == m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[p * n + j];
            c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
        }
    }
}

void matmul_nt(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
    assert(a.size() == m * k && b.size() == n * k && c.size() == m * n);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[j * k + p];
            c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
        }
    }
}

void matmul_tn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate) {
    assert(a.size() == m * n && b.size() == m * k && c.size() == n * k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            double sum = 0.0;
            for (std::size_t p = 0; p < m; ++p) sum += a[p * n + i] * b[p * k + j];
            c[i * k + j] = accumulate ? c[i * k + j] + sum : sum;
        }
    }
}

void add_bias_rows(std::span<double> y, std::span<const double> bias,
                   std::size_t rows, std::size_t cols) {
    assert(y.size() == rows * cols && bias.size() == cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] += bias[j];
}

void column_sums(std::span<const double> dy, std::span<double> db,
                 std::size_t rows, std::size_t cols) {
    assert(dy.size() == rows * cols && db.size() == cols);
    for (std::size_t j = 0; j < cols; ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < rows; ++i) sum += dy[i * cols + j];
        db[j] += sum;
    }
}

void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols) {
    assert(x.size() == rows * cols);
    for (std::size_t i = 0; i < rows; ++i) softmax_row(x.data() + i * cols, cols);
}

void causal_softmax_rows(std::span<double> scores, std::size_t rows) {
    assert(scores.size() == rows * rows);
    for (std::size_t i = 0; i < rows; ++i) {
        double* row = scores.data() + i * rows;
        softmax_row(row, i + 1);
        for (std::size_t j = i + 1; j < rows; ++j) row[j] = 0.0;
    }
}

void layer_norm_rows(std::span<const double> x, std::span<const double> gain,
                     std::span<const double> bias, std::span<double> y,
                     std::span<double> mean, std::span<double> rstd,
                     std::size_t rows, std::size_t cols) {
    assert(x.size() == rows * cols && y.size() == rows * cols);
    assert(gain.size() == cols && bias.size() == cols);
    assert(mean.size() == rows && rstd.size() == rows);
    for (std::size_t i = 0; i < rows; ++i)
        layer_norm_row(x.data() + i * cols, gain.data(), bias.data(),
                       y.data() + i * cols, &mean[i], &rstd[i], cols);
}

void layer_norm_backward_rows(std::span<const double> dy, std::span<const double> x,
                              std::span<const double> gain,
                              std::span<const double> mean, std::span<const double> rstd,
                              std::span<double> dx, std::span<double> dgain,
                              std::span<double> dbias, std::size_t rows,
                              std::size_t cols) {
    for (std::size_t i = 0; i < rows; ++i)
        layer_norm_backward_row(dy.data() + i * cols, x.data() + i * cols, gain.data(),
                                mean[i], rstd[i], dx.data() + i * cols, cols);
    for (std::size_t j = 0; j < cols; ++j) {
        double dg = 0.0, db = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            double xhat = (x[i * cols + j] - mean[i]) * rstd[i];
            dg += dy[i * cols + j] * xhat;
            db += dy[i * cols + j];
        }
        dgain[j] += dg;
        dbias[j] += db;
    }
}

void gelu(std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu_one(x[i]);
}

void gelu_backward(std::span<const double> x, std::span<const double> dy,
                   std::span<double> dx) {
    assert(x.size() == dy.size() && x.size() == dx.size());
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] += dy[i] * gelu_grad_one(x[i]);
}

}  // namespace serial

// --- OpenMP kernels -----------------------------------------------------------
//
// Each output element is owned by exactly one thread and its inner summation
// runs in the same ascending order as the serial reference, so the two paths
// produce bit-identical results.

void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
    if (!parallel_enabled() || m * k * n < kParallelThreshold) {
        serial::matmul_nn(a, b, c, m, k, n, accumulate);
        return;
    }
    assert(a.size() == m * k && b.size() == k * n && c.size() == m * n);
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (std::size_t p = 0; p < k; ++p) sum += ap[i * k + p] * bp[p * n + j];
            cp[i * n + j] = accumulate ? cp[i * n + j] + sum : sum;
        }
    }
}

void matmul_nt(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate) {
    if (!parallel_enabled() || m * k * n < kParallelThreshold) {
        serial::matmul_nt(a, b, c, m, k, n, accumulate);
        return;
    }
    assert(a.size() == m * k && b.size() == n * k && c.size() == m * n);
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double sum = 0.0;
            for (std::size_t p = 0; p < k; ++p) sum += ap[i * k + p] * bp[j * k + p];
            cp[i * n + j] = accumulate ? cp[i * n + j] + sum : sum;
        }
    }
}

void matmul_tn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate) {
    if (!parallel_enabled() || m * k * n < kParallelThreshold) {
        serial::matmul_tn(a, b, c, m, n, k, accumulate);
        return;
    }
    assert(a.size() == m * n && b.size() == m * k && c.size() == n * k);
    const double* ap = a.data();
    const double* bp = b.data();
    double* cp = c.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            double sum = 0.0;
            for (std::size_t p = 0; p < m; ++p) sum += ap[p * n + i] * bp[p * k + j];
            cp[i * k + j] = accumulate ? cp[i * k + j] + sum : sum;
        }
    }
}

void add_bias_rows(std::span<double> y, std::span<const double> bias,
                   std::size_t rows, std::size_t cols) {
    if (!parallel_enabled() || rows * cols < kParallelThreshold) {
        serial::add_bias_rows(y, bias, rows, cols);
        return;
    }
    double* yp = y.data();
    const double* bp = bias.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i)
        for (std::size_t j = 0; j < cols; ++j) yp[i * cols + j] += bp[j];
}

void column_sums(std::span<const double> dy, std::span<double> db,
                 std::size_t rows, std::size_t cols) {
    if (!parallel_enabled() || rows * cols < kParallelThreshold) {
        serial::column_sums(dy, db, rows, cols);
        return;
    }
    const double* dyp = dy.data();
    double* dbp = db.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(cols); ++j) {
        double sum = 0.0;
        for (std::size_t i = 0; i < rows; ++i) sum += dyp[i * cols + j];
        dbp[j] += sum;
    }
}

void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols) {
    if (!parallel_enabled() || rows * cols < kParallelThreshold) {
        serial::softmax_rows(x, rows, cols);
        return;
    }
    double* xp = x.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i)
        softmax_row(xp + i * cols, cols);
}

void causal_softmax_rows(std::span<double> scores, std::size_t rows) {
    if (!parallel_enabled() || rows * rows < kParallelThreshold) {
        serial::causal_softmax_rows(scores, rows);
        return;
    }
    double* sp = scores.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i) {
        double* row = sp + i * rows;
        softmax_row(row, static_cast<std::size_t>(i) + 1);
        for (std::size_t j = static_cast<std::size_t>(i) + 1; j < rows; ++j) row[j] = 0.0;
    }
}

void layer_norm_rows(std::span<const double> x, std::span<const double> gain,
                     std::span<const double> bias, std::span<double> y,
                     std::span<double> mean, std::span<double> rstd,
                     std::size_t rows, std::size_t cols) {
    if (!parallel_enabled() || rows * cols < kParallelThreshold) {
        serial::layer_norm_rows(x, gain, bias, y, mean, rstd, rows, cols);
        return;
    }
    const double* xp = x.data();
    double* yp = y.data();
    double* mp = mean.data();
    double* rp = rstd.data();
    const double* gp = gain.data();
    const double* bp = bias.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i)
        layer_norm_row(xp + i * cols, gp, bp, yp + i * cols, mp + i, rp + i, cols);
}

void layer_norm_backward_rows(std::span<const double> dy, std::span<const double> x,
                              std::span<const double> gain,
                              std::span<const double> mean, std::span<const double> rstd,
                              std::span<double> dx, std::span<double> dgain,
                              std::span<double> dbias, std::size_t rows,
                              std::size_t cols) {
    if (!parallel_enabled() || rows * cols < kParallelThreshold) {
        serial::layer_norm_backward_rows(dy, x, gain, mean, rstd, dx, dgain, dbias,
                                         rows, cols);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i)
        layer_norm_backward_row(dy.data() + i * cols, x.data() + i * cols, gain.data(),
                                mean[static_cast<std::size_t>(i)],
                                rstd[static_cast<std::size_t>(i)],
                                dx.data() + i * cols, cols);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(cols); ++j) {
        double dg = 0.0, db = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            double xhat = (x[i * cols + j] - mean[i]) * rstd[i];
            dg += dy[i * cols + j] * xhat;
            db += dy[i * cols + j];
        }
        dgain[static_cast<std::size_t>(j)] += dg;
        dbias[static_cast<std::size_t>(j)] += db;
    }
}

void gelu(std::span<const double> x, std::span<double> y) {
    if (!parallel_enabled() || x.size() < kParallelThreshold) {
        serial::gelu(x, y);
        return;
    }
    const double* xp = x.data();
    double* yp = y.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(x.size()); ++i)
        yp[i] = gelu_one(xp[i]);
}

void gelu_backward(std::span<const double> x, std::span<const double> dy,
                   std::span<double> dx) {
    if (!parallel_enabled() || x.size() < kParallelThreshold) {
        serial::gelu_backward(x, dy, dx);
        return;
    }
    const double* xp = x.data();
    const double* dyp = dy.data();
    double* dxp = dx.data();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(x.size()); ++i)
        dxp[i] += dyp[i] * gelu_grad_one(xp[i]);
}

}  // namespace clonelm::kernels
