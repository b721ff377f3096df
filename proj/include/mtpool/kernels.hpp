#ifndef MTPOOL_KERNELS_HPP
#define MTPOOL_KERNELS_HPP

// Raw numeric kernels. Every kernel has a serial reference in
// `kernels::serial` and an OpenMP version in `kernels::parallel` with the same
// signature; the parallel versions split work only along independent output
// rows/pairs, so both produce bit-identical results. Library code calls the
// parallel versions; tests and the benchmark compare the two.

#include <cstddef>
#include <span>

namespace mtpool::kernels {

enum class DistanceKind { euclidean, absolute, dtw };

/// Sakoe-Chiba half-width used for series of length `T`; 0 means unconstrained.
/// Exact DTW up to 512 steps, band of T/10 above that.
std::size_t default_dtw_window(std::size_t T);

/// DTW with |a_i - b_j| local cost. `window == 0` runs the full O(T^2) table.
double dtw(std::span<const double> a, std::span<const double> b, std::size_t window = 0);

double distance(std::span<const double> a, std::span<const double> b, DistanceKind kind,
                std::size_t dtw_window);

namespace serial {

/// C(m x n) = op(A) * op(B) (+ C when accumulate). op transposes when the flag is set;
/// A is stored m x k (or k x m when trans_a), B is k x n (or n x k when trans_b).
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool trans_a, bool trans_b, bool accumulate);

/// out[v][ch][t] = bias[ch] + sum_j x[v][t + j] * w[ch][j], t in [0, T - ks].
void conv1d_valid(const double* x, std::size_t rows, std::size_t T, const double* w,
                  std::size_t channels, std::size_t ks, const double* bias, double* out);

/// out (n x n) of distances between rows of x (n x T); symmetric with zero diagonal.
void pairwise_distance(const double* x, std::size_t n, std::size_t T, DistanceKind kind,
                       std::size_t dtw_window, double* out);

}  // namespace serial

namespace parallel {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool trans_a, bool trans_b, bool accumulate);

void conv1d_valid(const double* x, std::size_t rows, std::size_t T, const double* w,
                  std::size_t channels, std::size_t ks, const double* bias, double* out);

void pairwise_distance(const double* x, std::size_t n, std::size_t T, DistanceKind kind,
                       std::size_t dtw_window, double* out);

}  // namespace parallel

}  // namespace mtpool::kernels

#endif  // MTPOOL_KERNELS_HPP
