#include "mtpool/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace mtpool {

std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> v, bool rg)
    : shape(std::move(s)), values(std::move(v)), requires_grad(rg) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
    for (auto d : shape)
        if (d == 0) throw DimensionError("tensor shape " + shape_str(shape) + " has a zero extent");
    if (numel(shape) != values.size())
        throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                             std::to_string(values.size()) + " values");
}

Tensor Tensor::zeros(Shape s) { return filled(std::move(s), 0.0); }

Tensor Tensor::filled(Shape s, double value) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<double>(n, value));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged rows in matrix literal");
        v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(v));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::rows() const {
    if (shape.size() != 2) throw DimensionError("expected a matrix, got " + shape_str(shape));
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (shape.size() != 2) throw DimensionError("expected a matrix, got " + shape_str(shape));
    return shape[1];
}

void Tensor::zero_grad() {
    if (grad)
        std::fill(grad->begin(), grad->end(), 0.0);
    else
        grad.emplace(values.size(), 0.0);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape)
        throw DimensionError("cannot compare " + shape_str(a.shape) + " with " + shape_str(b.shape));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
    return m;
}

bool all_finite(std::span<const double> values) {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace mtpool
