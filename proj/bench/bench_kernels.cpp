// Serial versus OpenMP timings for the numeric kernels and for dataset evaluation.
// Usage: bench_kernels [repeats]

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <vector>

#include "mtpool/kernels.hpp"
#include "mtpool/model.hpp"
#include "mtpool/train.hpp"

namespace k = mtpool::kernels;

namespace {

double best_ms(int repeats, const std::function<void()>& fn) {
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    return best;
}

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

void report(const char* name, double serial_ms, double parallel_ms, bool identical) {
    std::printf("%-28s serial %9.3f ms  parallel %9.3f ms  speedup %5.2fx  %s\n", name, serial_ms, parallel_ms,
                serial_ms / parallel_ms, identical ? "identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
    const int repeats = argc > 1 ? std::max(1, std::atoi(argv[1])) : 5;
    std::printf("threads: %d\n", omp_get_max_threads());
    std::mt19937_64 rng(1);

    {
        const std::size_t m = 256, kk = 256, n = 256;
        auto a = random_values(m * kk, rng), b = random_values(kk * n, rng);
        std::vector<double> cs(m * n), cp(m * n);
        const double s = best_ms(repeats, [&] { k::serial::gemm(a.data(), b.data(), cs.data(), m, kk, n, false, false, false); });
        const double p = best_ms(repeats, [&] { k::parallel::gemm(a.data(), b.data(), cp.data(), m, kk, n, false, false, false); });
        report("gemm 256x256x256", s, p, cs == cp);
    }
    {
        const std::size_t rows = 64, T = 512, ch = 10, ks = 7;
        auto x = random_values(rows * T, rng), w = random_values(ch * ks, rng), bias = random_values(ch, rng);
        std::vector<double> os(rows * ch * (T - ks + 1)), op(os.size());
        const double s = best_ms(repeats, [&] { k::serial::conv1d_valid(x.data(), rows, T, w.data(), ch, ks, bias.data(), os.data()); });
        const double p = best_ms(repeats, [&] { k::parallel::conv1d_valid(x.data(), rows, T, w.data(), ch, ks, bias.data(), op.data()); });
        report("conv1d 64x512 ks7 c10", s, p, os == op);
    }
    {
        const std::size_t n = 24, T = 256;
        auto x = random_values(n * T, rng);
        std::vector<double> ds(n * n), dp(n * n);
        const double s = best_ms(repeats, [&] { k::serial::pairwise_distance(x.data(), n, T, k::DistanceKind::dtw, 0, ds.data()); });
        const double p = best_ms(repeats, [&] { k::parallel::pairwise_distance(x.data(), n, T, k::DistanceKind::dtw, 0, dp.data()); });
        report("pairwise dtw 24x256", s, p, ds == dp);
    }
    {
        mtpool::data::SyntheticSpec spec;
        auto ds = mtpool::data::make_synthetic(spec);
        mtpool::MtpoolModel model(mtpool::fit_to(mtpool::ModelConfig{}, ds.meta));
        mtpool::Metrics ms, mp;
        const double s = best_ms(repeats, [&] { ms = mtpool::evaluate_serial(model, ds); });
        const double p = best_ms(repeats, [&] { mp = mtpool::evaluate(model, ds); });
        report("evaluate synthetic 90", s, p, ms.predictions == mp.predictions && ms.mean_loss == mp.mean_loss);
    }
    return 0;
}
