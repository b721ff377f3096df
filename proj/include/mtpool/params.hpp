#ifndef MTPOOL_PARAMS_HPP
#define MTPOOL_PARAMS_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mtpool/tensor.hpp"

namespace mtpool {

struct NamedParam {
    std::string name;
    Tensor* tensor;
};

/// Non-trainable state (batch-norm running statistics).
struct NamedBuffer {
    std::string name;
    std::vector<double>* values;
};

using ParamList = std::vector<NamedParam>;
using BufferList = std::vector<NamedBuffer>;

/// Seeded source for all parameter initialization and shuffling.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }

    Tensor uniform_tensor(Shape shape, double lo, double hi, bool requires_grad = true) {
        std::vector<double> v(numel(shape));
        for (auto& e : v) e = uniform(lo, hi);
        return Tensor(std::move(shape), std::move(v), requires_grad);
    }

    /// Glorot/Xavier uniform for a fan_in x fan_out matrix.
    Tensor glorot(std::size_t fan_in, std::size_t fan_out) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        return uniform_tensor({fan_in, fan_out}, -limit, limit);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

inline Tensor trainable(Tensor t) {
    t.requires_grad = true;
    return t;
}

}  // namespace mtpool

#endif  // MTPOOL_PARAMS_HPP
