#ifndef MTPOOL_AUTODIFF_HPP
#define MTPOOL_AUTODIFF_HPP

// Define-by-run reverse-mode differentiation over dense double tensors.
//
// A Tape is rebuilt for every forward pass. Leaves are either constants or
// parameters; a parameter leaf aliases an external Tensor and backward()
// accumulates straight into that tensor's grad slot, so gradients from several
// tapes (one per sample) add up until the caller clears them.

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "mtpool/tensor.hpp"

namespace mtpool::ad {

enum class Activation { identity, relu, sigmoid, tanh };
enum class Mode { train, eval };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation fn);

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Shape& shape() const;
    std::span<const double> values() const;
    Tensor tensor() const;
    /// Value of a single-element node.
    double item() const;

    std::size_t id() const { return id_; }
    Tape& tape() const { return *tape_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor t);
    /// Leaf aliasing `t`; gradients land in `t.grad` when `t.requires_grad`.
    Var parameter(Tensor& t);

    /// Appends an operation result. The backward rule is kept only when some
    /// input needs a gradient.
    Var record(Shape shape, std::vector<double> values, std::initializer_list<Var> inputs,
               Backward backward);
    Var record(Shape shape, std::vector<double> values, std::span<const Var> inputs,
               Backward backward);

    std::span<const double> value(std::size_t id) const;
    const Shape& shape(std::size_t id) const;
    bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
    /// Gradient accumulator for node `id`; empty when the node needs none.
    std::span<double> grad(std::size_t id);

    /// Propagates d(loss)/d(node) to every parameter leaf. One call per tape.
    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Shape shape;
        std::vector<double> owned;
        Tensor* param = nullptr;
        std::vector<double> grad;
        bool needs_grad = false;
        Backward backward;

        std::span<const double> data() const;
    };

    std::deque<Node> nodes_;
    bool backward_done_ = false;
};

// --- operations -----------------------------------------------------------

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
/// x (m x n) plus a length-n bias (shape [n] or [1 x n]) on every row.
Var add_row_bias(Var x, Var bias);
Var scale(Var x, double s);
Var add_scalar(Var x, double s);
/// Multiplies every entry of x by the single-element node s.
Var scale_by(Var s, Var x);

Var activate(Var x, Activation fn);
inline Var relu(Var x) { return activate(x, Activation::relu); }
inline Var sigmoid(Var x) { return activate(x, Activation::sigmoid); }
inline Var tanh(Var x) { return activate(x, Activation::tanh); }

Var softmax_rows(Var x);
Var conv1d_valid(Var x, Var kernel, Var bias);

struct BatchNormState {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-5;
    /// Normalize with the input's own statistics in eval mode too. Running
    /// statistics are still tracked in train mode.
    bool batch_stats_in_eval = false;

    explicit BatchNormState(std::size_t width = 0)
        : running_mean(width, 0.0), running_var(width, 1.0) {}
};

/// Column-wise normalization over the rows of x (n x d). Train mode uses the
/// batch statistics and folds them into the running statistics; eval mode uses
/// the running statistics unless `state.batch_stats_in_eval` is set.
Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state, Mode mode);

Var concat(std::span<const Var> parts, std::size_t axis);
Var reshape(Var x, Shape shape);
Var transpose(Var x);
/// Reductions keep the reduced axis with extent 1.
Var reduce_sum(Var x, std::size_t axis);
Var reduce_mean(Var x, std::size_t axis);
Var reduce_max(Var x, std::size_t axis);
/// Sum of all entries as a [1] tensor.
Var sum(Var x);
/// Divides each row by its sum; rows summing to exactly 0 pass through.
Var row_normalize(Var x);
/// out[i][j] = cos(a_i, b_j); zero when either row is the zero vector.
Var cosine_rows(Var a, Var b);
/// Entries below `threshold` become 0; gradient passes only through kept entries.
Var threshold_mask(Var x, double threshold);
/// Sub-tensor at `index` along the leading axis.
Var slice_first(Var x, std::size_t index);
/// -log(max(p[label], floor)) for a probability row of shape [1 x M] or [M].
Var nll(Var probs, std::size_t label, double floor = 1e-12);

// --- tape-free forward helpers shared with precomputation paths -------------

double activate(double v, Activation fn);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor softmax_rows(const Tensor& x);
Tensor row_normalize(const Tensor& x);
Tensor cosine_rows(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

}  // namespace mtpool::ad

#endif  // MTPOOL_AUTODIFF_HPP
