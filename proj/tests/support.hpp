#ifndef MTPOOL_TESTS_SUPPORT_HPP
#define MTPOOL_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mtpool/autodiff.hpp"
#include "mtpool/params.hpp"

namespace mtpool::testing {

/// sum(x * w) for a fixed random weight tensor; gives every output entry a
/// distinct gradient so checks are not fooled by symmetric losses.
inline ad::Var weighted_sum(ad::Var x, const Tensor& w) { return ad::sum(ad::hadamard(x, x.tape().constant(w))); }

struct GradReport {
    double max_rel = 0.0;  ///< worst per-tensor L2 relative error
    std::string worst;
};

/// Compares tape gradients with central differences for every entry of every
/// tensor in `params`. The relative error of a tensor is
/// ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-12).
inline GradReport grad_check(const std::vector<std::pair<std::string, Tensor*>>& params,
                             const std::function<ad::Var(ad::Tape&)>& loss, double h = 1e-5) {
    for (auto& [_, t] : params) t->zero_grad();
    {
        ad::Tape tape;
        tape.backward(loss(tape));
    }
    auto eval = [&] {
        ad::Tape tape;
        return loss(tape).item();
    };
    GradReport report;
    for (auto& [name, t] : params) {
        const std::vector<double> analytic = *t->grad;
        double diff = 0.0, na = 0.0, nn = 0.0;
        for (std::size_t k = 0; k < t->size(); ++k) {
            const double saved = t->values[k];
            t->values[k] = saved + h;
            const double up = eval();
            t->values[k] = saved - h;
            const double down = eval();
            t->values[k] = saved;
            const double numeric = (up - down) / (2.0 * h);
            diff += (analytic[k] - numeric) * (analytic[k] - numeric);
            na += analytic[k] * analytic[k];
            nn += numeric * numeric;
        }
        const double rel = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
        if (rel >= report.max_rel) {
            report.max_rel = rel;
            report.worst = name;
        }
    }
    return report;
}

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    return rng.uniform_tensor(std::move(shape), lo, hi, true);
}

}  // namespace mtpool::testing

#endif  // MTPOOL_TESTS_SUPPORT_HPP
