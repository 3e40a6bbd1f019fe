#pragma once

#include <cstddef>
#include <span>

namespace clonelm::kernels {

// Global switch for the OpenMP paths. Parallelization is per output element
// with a fixed inner summation order, so results are bitwise identical to the
// serial reference either way; the switch exists for --deterministic and for
// the benchmark.
bool parallel_enabled();
void set_parallel_enabled(bool enabled);

// Serial reference implementations. Kept deliberately naive; the OpenMP
// kernels are tested for exact equality against these.
namespace serial {

// C[m,n] = A[m,k] * B[k,n]   (+= when accumulate)
void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate = false);

// C[m,n] = A[m,k] * B[n,k]^T
void matmul_nt(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate = false);

// C[n,k] = A[m,n]^T * B[m,k]
void matmul_tn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate = false);

void add_bias_rows(std::span<double> y, std::span<const double> bias,
                   std::size_t rows, std::size_t cols);

// db[j] += sum_i dY[i,j]
void column_sums(std::span<const double> dy, std::span<double> db,
                 std::size_t rows, std::size_t cols);

void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols);

// Row i is a softmax over columns [0, i]; columns past i are zeroed.
void causal_softmax_rows(std::span<double> scores, std::size_t rows);

void layer_norm_rows(std::span<const double> x, std::span<const double> gain,
                     std::span<const double> bias, std::span<double> y,
                     std::span<double> mean, std::span<double> rstd,
                     std::size_t rows, std::size_t cols);

void layer_norm_backward_rows(std::span<const double> dy, std::span<const double> x,
                              std::span<const double> gain,
                              std::span<const double> mean, std::span<const double> rstd,
                              std::span<double> dx, std::span<double> dgain,
                              std::span<double> dbias, std::size_t rows,
                              std::size_t cols);

void gelu(std::span<const double> x, std::span<double> y);
void gelu_backward(std::span<const double> x, std::span<const double> dy,
                   std::span<double> dx);

}  // namespace serial

// OpenMP-parallel entry points; fall back to the serial reference when
// parallelism is disabled or the problem is too small to be worth threads.
void matmul_nn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate = false);
void matmul_nt(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t k, std::size_t n,
               bool accumulate = false);
void matmul_tn(std::span<const double> a, std::span<const double> b,
               std::span<double> c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate = false);
void add_bias_rows(std::span<double> y, std::span<const double> bias,
                   std::size_t rows, std::size_t cols);
void column_sums(std::span<const double> dy, std::span<double> db,
                 std::size_t rows, std::size_t cols);
void softmax_rows(std::span<double> x, std::size_t rows, std::size_t cols);
void causal_softmax_rows(std::span<double> scores, std::size_t rows);
void layer_norm_rows(std::span<const double> x, std::span<const double> gain,
                     std::span<const double> bias, std::span<double> y,
                     std::span<double> mean, std::span<double> rstd,
                     std::size_t rows, std::size_t cols);
void layer_norm_backward_rows(std::span<const double> dy, std::span<const double> x,
                              std::span<const double> gain,
                              std::span<const double> mean, std::span<const double> rstd,
                              std::span<double> dx, std::span<double> dgain,
                              std::span<double> dbias, std::size_t rows,
                              std::size_t cols);
void gelu(std::span<const double> x, std::span<double> y);
void gelu_backward(std::span<const double> x, std::span<const double> dy,
                   std::span<double> dx);

}  // namespace clonelm::kernels
