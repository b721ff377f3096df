#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "doctest.h"
#include "mtpool/kernels.hpp"
#include "oracles.hpp"

namespace k = mtpool::kernels;
using mtpool::testing::dtw_brute_force;

namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

}  // namespace

TEST_CASE("dtw examples") {
    CHECK(k::dtw(std::vector<double>{1, 2, 3}, std::vector<double>{2, 3, 4}) == 2.0);
    std::vector<double> x{0.5, -1, 2};
    CHECK(k::dtw(x, x) == 0.0);
    CHECK(k::distance(std::vector<double>{0, 0}, std::vector<double>{3, 4}, k::DistanceKind::euclidean, 0) == 5.0);
    CHECK(k::distance(std::vector<double>{0, 0}, std::vector<double>{3, -4}, k::DistanceKind::absolute, 0) == 7.0);
}

TEST_CASE("dtw equals the exhaustive monotone-path minimum on small integer series") {
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> len(1, 6), val(-5, 5);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> a(len(rng)), b(len(rng));
        for (auto& v : a) v = val(rng);
        for (auto& v : b) v = val(rng);
        CHECK(k::dtw(a, b) == dtw_brute_force(a, b));
    }
}

TEST_CASE("dtw window") {
    CHECK(k::default_dtw_window(512) == 0);
    CHECK(k::default_dtw_window(640) == 64);
    std::mt19937_64 rng(8);
    auto a = random_values(40, rng), b = random_values(40, rng);
    // A band at least as wide as the series is the full table.
    CHECK(k::dtw(a, b, 40) == k::dtw(a, b, 0));
    // Narrow bands can only restrict the path set.
    CHECK(k::dtw(a, b, 2) >= k::dtw(a, b, 0));
    // The diagonal alignment lies inside every band.
    double diag = 0.0;
    for (std::size_t i = 0; i < 40; ++i) diag += std::abs(a[i] - b[i]);
    CHECK(k::dtw(a, b, 1) <= diag);
}

TEST_CASE("serial and parallel gemm agree bitwise for every transpose combination") {
    std::mt19937_64 rng(1);
    for (auto [m, kk, n] : {std::tuple{1, 1, 1}, {3, 5, 2}, {17, 9, 31}, {128, 64, 96}, {200, 300, 7}}) {
        for (int flags = 0; flags < 8; ++flags) {
            const bool ta = flags & 1, tb = flags & 2, acc = flags & 4;
            auto a = random_values(m * kk, rng), b = random_values(kk * n, rng);
            auto cs = random_values(m * n, rng);
            auto cp = cs;
            k::serial::gemm(a.data(), b.data(), cs.data(), m, kk, n, ta, tb, acc);
            k::parallel::gemm(a.data(), b.data(), cp.data(), m, kk, n, ta, tb, acc);
            CHECK(cs == cp);
        }
    }
}

TEST_CASE("gemm matches a naive triple loop") {
    std::mt19937_64 rng(2);
    const std::size_t m = 4, kk = 3, n = 5;
    auto a = random_values(m * kk, rng), b = random_values(kk * n, rng);
    std::vector<double> c(m * n);
    k::serial::gemm(a.data(), b.data(), c.data(), m, kk, n, false, false, false);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < kk; ++p) s += a[i * kk + p] * b[p * n + j];
            CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-14));
        }
    // A^T stored k x m, B^T stored n x k
    std::vector<double> at(kk * m), bt(n * kk), c2(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < kk; ++p) at[p * m + i] = a[i * kk + p];
    for (std::size_t p = 0; p < kk; ++p)
        for (std::size_t j = 0; j < n; ++j) bt[j * kk + p] = b[p * n + j];
    k::serial::gemm(at.data(), bt.data(), c2.data(), m, kk, n, true, true, false);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c2[i] == doctest::Approx(c[i]).epsilon(1e-14));
}

TEST_CASE("serial and parallel conv1d agree bitwise") {
    std::mt19937_64 rng(3);
    for (auto [rows, T, ch, ks] : {std::tuple{1, 5, 1, 3}, {4, 64, 10, 7}, {64, 512, 10, 5}}) {
        auto x = random_values(rows * T, rng), w = random_values(ch * ks, rng), bias = random_values(ch, rng);
        std::vector<double> os(rows * ch * (T - ks + 1)), op(os.size());
        k::serial::conv1d_valid(x.data(), rows, T, w.data(), ch, ks, bias.data(), os.data());
        k::parallel::conv1d_valid(x.data(), rows, T, w.data(), ch, ks, bias.data(), op.data());
        CHECK(os == op);
    }
}

TEST_CASE("serial and parallel pairwise distances agree bitwise and are metric-shaped") {
    std::mt19937_64 rng(4);
    for (auto kind : {k::DistanceKind::euclidean, k::DistanceKind::absolute, k::DistanceKind::dtw}) {
        for (auto [n, T] : {std::pair{1, 4}, {5, 9}, {24, 80}}) {
            auto x = random_values(n * T, rng);
            std::vector<double> ds(n * n), dp(n * n);
            k::serial::pairwise_distance(x.data(), n, T, kind, 0, ds.data());
            k::parallel::pairwise_distance(x.data(), n, T, kind, 0, dp.data());
            CHECK(ds == dp);
            for (int i = 0; i < n; ++i) {
                CHECK(ds[i * n + i] == 0.0);
                for (int j = 0; j < n; ++j) {
                    CHECK(ds[i * n + j] >= 0.0);
                    CHECK(ds[i * n + j] == ds[j * n + i]);
                }
            }
        }
    }
}
