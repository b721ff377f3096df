#ifndef MTPOOL_GNN_HPP
#define MTPOOL_GNN_HPP

#include <vector>

#include "mtpool/autodiff.hpp"
#include "mtpool/graphlearn.hpp"
#include "mtpool/params.hpp"

namespace mtpool::gnn {

/// k-GNN layer: act(BN(Z W1 + A Z W2)). The W1 term is the only self path;
/// A is used with its edge weights.
class GnnLayer {
public:
    GnnLayer(std::size_t d_in, std::size_t d_out, Rng& rng, bool batch_norm = true,
             ad::Activation activation = ad::Activation::relu);

    std::size_t input_width() const { return w_self_.shape[0]; }
    std::size_t output_width() const { return w_self_.shape[1]; }
    bool uses_batch_norm() const { return batch_norm_; }

    Tensor& w_self() { return w_self_; }
    Tensor& w_neighbor() { return w_neighbor_; }
    Tensor& gamma() { return gamma_; }
    Tensor& beta() { return beta_; }
    ad::BatchNormState& norm_state() { return norm_; }

    void collect(const std::string& prefix, ParamList& params, BufferList& buffers);

private:
    friend ad::Var kgnn_forward(const graph::GraphState& state, GnnLayer& layer, ad::Mode mode);

    Tensor w_self_;
    Tensor w_neighbor_;
    Tensor gamma_;
    Tensor beta_;
    ad::BatchNormState norm_;
    bool batch_norm_;
    ad::Activation activation_;
};

ad::Var kgnn_forward(const graph::GraphState& state, GnnLayer& layer, ad::Mode mode);

class GnnStack {
public:
    GnnStack() = default;
    /// One layer per entry of `widths`, chained from `d_in`.
    GnnStack(std::size_t d_in, const std::vector<std::size_t>& widths, Rng& rng, bool batch_norm = true);

    std::vector<GnnLayer>& layers() { return layers_; }
    std::size_t output_width(std::size_t d_in) const;

    void collect(const std::string& prefix, ParamList& params, BufferList& buffers);

private:
    std::vector<GnnLayer> layers_;
};

/// Applies every layer in order; the adjacency is threaded through unchanged.
graph::GraphState encode(const graph::GraphState& state, GnnStack& stack, ad::Mode mode);

}  // namespace mtpool::gnn

#endif  // MTPOOL_GNN_HPP
