#include "mtpool/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace mtpool::kernels {

namespace {

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

inline void gemm_row(const double* a, const double* b, double* c, std::size_t i, std::size_t m,
                     std::size_t k, std::size_t n, bool trans_a, bool trans_b, bool accumulate) {
    double* crow = c + i * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    if (!trans_b) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = trans_a ? a[p * m + i] : a[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    } else {
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            if (!trans_a) {
                const double* arow = a + i * k;
                for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            } else {
                for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * brow[p];
            }
            crow[j] += s;
        }
    }
}

inline void conv_row(const double* x, std::size_t v, std::size_t T, const double* w,
                     std::size_t channels, std::size_t ks, const double* bias, double* out) {
    const std::size_t len = T - ks + 1;
    const double* xv = x + v * T;
    for (std::size_t ch = 0; ch < channels; ++ch) {
        const double* wc = w + ch * ks;
        double* o = out + (v * channels + ch) * len;
        for (std::size_t t = 0; t < len; ++t) {
            double s = bias[ch];
            for (std::size_t j = 0; j < ks; ++j) s += xv[t + j] * wc[j];
            o[t] = s;
        }
    }
}

}  // namespace

std::size_t default_dtw_window(std::size_t T) { return T > 512 ? std::max<std::size_t>(1, T / 10) : 0; }

double dtw(std::span<const double> a, std::span<const double> b, std::size_t window) {
    const std::size_t la = a.size();
    const std::size_t lb = b.size();
    if (la == 0 || lb == 0) return (la == lb) ? 0.0 : std::numeric_limits<double>::infinity();
    constexpr double inf = std::numeric_limits<double>::infinity();
    // A band narrower than the length difference cannot reach the corner.
    std::size_t w = window == 0 ? std::max(la, lb) : std::max(window, la > lb ? la - lb : lb - la);

    std::vector<double> prev(lb + 1, inf), cur(lb + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= la; ++i) {
        std::fill(cur.begin(), cur.end(), inf);
        const std::size_t jlo = i > w ? i - w : 1;
        const std::size_t jhi = std::min(lb, i + w);
        for (std::size_t j = jlo; j <= jhi; ++j) {
            const double best = std::min({prev[j - 1], prev[j], cur[j - 1]});
            cur[j] = best + std::abs(a[i - 1] - b[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[lb];
}

double distance(std::span<const double> a, std::span<const double> b, DistanceKind kind,
                std::size_t dtw_window) {
    switch (kind) {
        case DistanceKind::euclidean: {
            double s = 0.0;
            for (std::size_t t = 0; t < a.size(); ++t) s += (a[t] - b[t]) * (a[t] - b[t]);
            return std::sqrt(s);
        }
        case DistanceKind::absolute: {
            double s = 0.0;
            for (std::size_t t = 0; t < a.size(); ++t) s += std::abs(a[t] - b[t]);
            return s;
        }
        case DistanceKind::dtw:
            return dtw(a, b, dtw_window);
    }
    return 0.0;
}

namespace serial {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool trans_a, bool trans_b, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) gemm_row(a, b, c, i, m, k, n, trans_a, trans_b, accumulate);
}

void conv1d_valid(const double* x, std::size_t rows, std::size_t T, const double* w,
                  std::size_t channels, std::size_t ks, const double* bias, double* out) {
    for (std::size_t v = 0; v < rows; ++v) conv_row(x, v, T, w, channels, ks, bias, out);
}

void pairwise_distance(const double* x, std::size_t n, std::size_t T, DistanceKind kind,
                       std::size_t dtw_window, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        out[i * n + i] = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = distance({x + i * T, T}, {x + j * T, T}, kind, dtw_window);
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
}

}  // namespace serial

namespace parallel {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n,
          bool trans_a, bool trans_b, bool accumulate) {
    const bool big = m > 1 && m * k * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (std::size_t i = 0; i < m; ++i) gemm_row(a, b, c, i, m, k, n, trans_a, trans_b, accumulate);
}

void conv1d_valid(const double* x, std::size_t rows, std::size_t T, const double* w,
                  std::size_t channels, std::size_t ks, const double* bias, double* out) {
    const bool big = rows > 1 && rows * channels * T * ks >= kParallelWork;
#pragma omp parallel for schedule(static) if (big)
    for (std::size_t v = 0; v < rows; ++v) conv_row(x, v, T, w, channels, ks, bias, out);
}

void pairwise_distance(const double* x, std::size_t n, std::size_t T, DistanceKind kind,
                       std::size_t dtw_window, double* out) {
    const std::size_t pairs = n * (n - 1) / 2;
    const std::size_t cost = kind == DistanceKind::dtw ? T * (dtw_window ? 2 * dtw_window + 1 : T) : T;
    const bool big = pairs > 1 && pairs * cost >= kParallelWork;
    for (std::size_t i = 0; i < n; ++i) out[i * n + i] = 0.0;
    // Flattened upper triangle so the dynamic schedule balances long DTW rows.
#pragma omp parallel for schedule(dynamic, 4) if (big)
    for (std::size_t p = 0; p < pairs; ++p) {
        std::size_t i = 0, rem = p;
        while (rem >= n - 1 - i) {
            rem -= n - 1 - i;
            ++i;
        }
        const std::size_t j = i + 1 + rem;
        const double d = distance({x + i * T, T}, {x + j * T, T}, kind, dtw_window);
        out[i * n + j] = d;
        out[j * n + i] = d;
    }
}

}  // namespace parallel

}  // namespace mtpool::kernels
