#ifndef MTPOOL_POOLING_HPP
#define MTPOOL_POOLING_HPP

// Hierarchical graph coarsening down to a single node.
//
// A pooling layer projects n input nodes onto n_pool clusters with an
// assignment matrix S (n_pool x n):
//
//     X_pool = relu(S X W_pool)        A_pool = relu(S A S^T)
//
// S mixes h heads of cosine similarities between cluster centroids K_p and the
// node embeddings, each head row-normalized. In the variational layer the
// centroids are decoded from an attention readout of the input graph, so they
// move with the input yet ignore node order; the memory layer keeps K as a
// free parameter shared by all inputs.

#include <string_view>
#include <vector>

#include "mtpool/autodiff.hpp"
#include "mtpool/graphlearn.hpp"
#include "mtpool/params.hpp"

namespace mtpool::pool {

enum class PoolKind { variational, memory, mean };

PoolKind parse_pool_kind(std::string_view name);
std::string_view pool_kind_name(PoolKind kind);

/// Cluster counts per layer: n_pool = max(1, floor(prev / r)) until it reaches 1.
std::vector<std::size_t> cluster_schedule(std::size_t num_nodes, std::size_t reduction);

/// Attention readout X_g (1 x d): sum_i sigmoid(z_i . x_avg) z_i, x_avg = tanh(mean(Z) W_avg).
ad::Var encode_graph_vector(ad::Var nodes, ad::Var w_avg);

/// Decoder perceptron d -> d (tanh) -> h * n_pool * d, reshaped to h x n_pool x d.
struct Decoder {
    Tensor w_hidden;
    Tensor b_hidden;
    Tensor w_out;
    Tensor b_out;

    Decoder(std::size_t width, std::size_t heads, std::size_t clusters, Rng& rng);
};

ad::Var decode_centroids(ad::Var graph_vector, Decoder& decoder, std::size_t heads, std::size_t clusters);

struct Assignment {
    ad::Var mixed;               ///< S = sum_p phi_p S_p
    std::vector<ad::Var> heads;  ///< row-normalized S_p per head
};

Assignment assignment_matrix(ad::Var centroids, ad::Var nodes, ad::Var phi);

/// Coarsened graph produced by one pooling layer.
struct PoolResult {
    graph::GraphState state;
    ad::Var assignment;
    ad::Var centroids;
};

/// Applies a fixed assignment: X_pool = relu(S X W), A_pool = relu(S A S^T).
graph::GraphState coarsen(const graph::GraphState& state, ad::Var assignment, ad::Var w_pool,
                          bool renormalize_adjacency = false);

class PoolLayer {
public:
    /// `kind` must be variational or memory.
    PoolLayer(PoolKind kind, std::size_t d_in, std::size_t d_out, std::size_t heads, std::size_t clusters, Rng& rng);

    PoolKind kind() const { return kind_; }
    std::size_t heads() const { return heads_; }
    std::size_t clusters() const { return clusters_; }
    std::size_t input_width() const { return w_pool_.shape[0]; }
    std::size_t output_width() const { return w_pool_.shape[1]; }

    /// K (h x n_pool x d) for this input graph.
    ad::Var centroids(ad::Var nodes);

    Tensor& w_avg() { return w_avg_; }
    Decoder& decoder() { return decoder_; }
    Tensor& memory() { return memory_; }
    Tensor& w_pool() { return w_pool_; }
    Tensor& phi() { return phi_; }

    void collect(const std::string& prefix, ParamList& params);

private:
    PoolKind kind_;
    std::size_t heads_;
    std::size_t clusters_;
    Tensor w_avg_;
    Decoder decoder_;
    Tensor memory_;
    Tensor w_pool_;
    Tensor phi_;
};

PoolResult pool_once(const graph::GraphState& state, PoolLayer& layer, bool renormalize_adjacency = false);
/// Same as pool_once; named for the input-independent centroid baseline.
PoolResult memory_pool_once(const graph::GraphState& state, PoolLayer& layer, bool renormalize_adjacency = false);

/// Column mean of node features (1 x d).
ad::Var mean_pool(const graph::GraphState& state);

struct PoolStackConfig {
    PoolKind kind = PoolKind::variational;
    std::size_t heads = 2;
    std::size_t reduction = 2;
    /// Explicit cluster counts; empty means cluster_schedule(n, reduction).
    std::vector<std::size_t> clusters;
    std::size_t output_width = 0;  ///< 0 keeps the input width
    bool renormalize_adjacency = false;
};

class PoolStack {
public:
    PoolStack(PoolStackConfig config, std::size_t num_nodes, std::size_t d_in, Rng& rng);

    struct Output {
        ad::Var x_final;
        std::vector<PoolResult> layers;
    };

    Output forward(const graph::GraphState& state);

    const PoolStackConfig& config() const { return config_; }
    std::vector<PoolLayer>& layers() { return layers_; }
    const std::vector<std::size_t>& schedule() const { return schedule_; }
    std::size_t output_width() const { return output_width_; }

    void collect(const std::string& prefix, ParamList& params);

private:
    PoolStackConfig config_;
    std::vector<std::size_t> schedule_;
    std::vector<PoolLayer> layers_;
    std::size_t output_width_;
};

/// Convenience: x_final of a stack.
ad::Var pool_to_single(const graph::GraphState& state, PoolStack& stack);

}  // namespace mtpool::pool

#endif  // MTPOOL_POOLING_HPP
