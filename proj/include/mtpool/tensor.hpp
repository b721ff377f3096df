#ifndef MTPOOL_TENSOR_HPP
#define MTPOOL_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtpool {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when operand shapes do not fit together.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a configuration value is out of range or inconsistent.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an API is used outside its contract (e.g. backward twice).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Dense row-major array of doubles with an optional gradient slot.
struct Tensor {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::optional<std::vector<double>> grad;

    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape);
    static Tensor filled(Shape shape, double value);
    static Tensor identity(std::size_t n);
    /// Builds a 2-D tensor from nested rows; all rows must have equal length.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);

    std::size_t size() const { return values.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }

    /// Allocates (or clears) the gradient slot to zeros.
    void zero_grad();
};

/// Max absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(std::span<const double> values);

}  // namespace mtpool

#endif  // MTPOOL_TENSOR_HPP
