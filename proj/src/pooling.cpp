#include "mtpool/pooling.hpp"

#include <cmath>
#include <string>

namespace mtpool::pool {

PoolKind parse_pool_kind(std::string_view name) {
    if (name == "variational") return PoolKind::variational;
    if (name == "memory") return PoolKind::memory;
    if (name == "mean") return PoolKind::mean;
    throw ConfigError("unknown pooling '" + std::string(name) + "' (expected variational, memory or mean)");
}

std::string_view pool_kind_name(PoolKind kind) {
    switch (kind) {
        case PoolKind::variational: return "variational";
        case PoolKind::memory: return "memory";
        case PoolKind::mean: return "mean";
    }
    return "variational";
}

std::vector<std::size_t> cluster_schedule(std::size_t num_nodes, std::size_t reduction) {
    if (num_nodes == 0) throw ConfigError("cluster schedule needs at least one node");
    if (reduction < 2) throw ConfigError("reduction factor must be >= 2, got " + std::to_string(reduction));
    std::vector<std::size_t> out;
    std::size_t cur = num_nodes;
    do {
        cur = std::max<std::size_t>(1, cur / reduction);
        out.push_back(cur);
    } while (cur > 1);
    return out;
}

ad::Var encode_graph_vector(ad::Var nodes, ad::Var w_avg) {
    auto x_avg = ad::tanh(ad::matmul(ad::reduce_mean(nodes, 0), w_avg));
    auto weights = ad::sigmoid(ad::matmul(nodes, ad::transpose(x_avg)));
    return ad::matmul(ad::transpose(weights), nodes);
}

Decoder::Decoder(std::size_t width, std::size_t heads, std::size_t clusters, Rng& rng)
    : w_hidden(rng.glorot(width, width)),
      b_hidden(trainable(Tensor::zeros({width}))),
      w_out(rng.glorot(width, heads * clusters * width)),
      b_out(trainable(Tensor::zeros({heads * clusters * width}))) {}

ad::Var decode_centroids(ad::Var graph_vector, Decoder& decoder, std::size_t heads, std::size_t clusters) {
    auto& tape = graph_vector.tape();
    const std::size_t d = decoder.w_hidden.shape[0];
    auto hidden = ad::tanh(ad::add_row_bias(ad::matmul(graph_vector, tape.parameter(decoder.w_hidden)),
                                            tape.parameter(decoder.b_hidden)));
    auto out = ad::add_row_bias(ad::matmul(hidden, tape.parameter(decoder.w_out)), tape.parameter(decoder.b_out));
    return ad::reshape(out, {heads, clusters, d});
}

Assignment assignment_matrix(ad::Var centroids, ad::Var nodes, ad::Var phi) {
    const auto& ks = centroids.shape();
    if (ks.size() != 3) throw DimensionError("assignment_matrix: centroids must be h x n_pool x d, got " + shape_str(ks));
    if (nodes.shape().size() != 2 || nodes.shape()[1] != ks[2])
        throw DimensionError("assignment_matrix: centroids " + shape_str(ks) + " do not match nodes " +
                             shape_str(nodes.shape()));
    if (numel(phi.shape()) != ks[0])
        throw DimensionError("assignment_matrix: phi has " + std::to_string(numel(phi.shape())) +
                             " weights for " + std::to_string(ks[0]) + " heads");
    Assignment out;
    for (std::size_t p = 0; p < ks[0]; ++p) {
        auto head = ad::row_normalize(ad::cosine_rows(ad::slice_first(centroids, p), nodes));
        out.heads.push_back(head);
        auto weighted = ad::scale_by(ad::slice_first(phi, p), head);
        out.mixed = p == 0 ? weighted : ad::add(out.mixed, weighted);
    }
    return out;
}

graph::GraphState coarsen(const graph::GraphState& state, ad::Var assignment, ad::Var w_pool,
                          bool renormalize_adjacency) {
    const auto& ss = assignment.shape();
    const auto& fs = state.features.shape();
    if (ss.size() != 2 || ss[1] != fs[0])
        throw DimensionError("pool: assignment " + shape_str(ss) + " does not match " + std::to_string(fs[0]) + " nodes");
    if (w_pool.shape()[0] != fs[1])
        throw DimensionError("pool: features " + shape_str(fs) + " do not match W_pool " + shape_str(w_pool.shape()));
    graph::GraphState out;
    out.features = ad::relu(ad::matmul(ad::matmul(assignment, state.features), w_pool));
    out.adjacency = ad::relu(ad::matmul(ad::matmul(assignment, state.adjacency), ad::transpose(assignment)));
    if (renormalize_adjacency) out.adjacency = ad::row_normalize(out.adjacency);
    return out;
}

PoolLayer::PoolLayer(PoolKind kind, std::size_t d_in, std::size_t d_out, std::size_t heads, std::size_t clusters,
                     Rng& rng)
    : kind_(kind),
      heads_(heads),
      clusters_(clusters),
      w_avg_(rng.glorot(d_in, d_in)),
      decoder_(kind == PoolKind::variational ? Decoder(d_in, heads, clusters, rng) : Decoder(1, 1, 1, rng)),
      memory_(kind == PoolKind::memory
                  ? rng.uniform_tensor({heads, clusters, d_in}, -1.0, 1.0)
                  : Tensor::zeros({1})),
      w_pool_(rng.glorot(d_in, d_out)),
      phi_(trainable(Tensor::filled({heads}, 1.0 / static_cast<double>(heads ? heads : 1)))) {
    if (kind == PoolKind::mean) throw ConfigError("mean pooling has no pool layers");
    if (heads == 0 || clusters == 0 || d_in == 0 || d_out == 0)
        throw ConfigError("pool layer dimensions must be positive");
}

ad::Var PoolLayer::centroids(ad::Var nodes) {
    auto& tape = nodes.tape();
    if (kind_ == PoolKind::memory) return tape.parameter(memory_);
    return decode_centroids(encode_graph_vector(nodes, tape.parameter(w_avg_)), decoder_, heads_, clusters_);
}

void PoolLayer::collect(const std::string& prefix, ParamList& params) {
    if (kind_ == PoolKind::variational) {
        params.push_back({prefix + "w_avg", &w_avg_});
        params.push_back({prefix + "decoder.w_hidden", &decoder_.w_hidden});
        params.push_back({prefix + "decoder.b_hidden", &decoder_.b_hidden});
        params.push_back({prefix + "decoder.w_out", &decoder_.w_out});
        params.push_back({prefix + "decoder.b_out", &decoder_.b_out});
    } else {
        params.push_back({prefix + "centroids", &memory_});
    }
    params.push_back({prefix + "w_pool", &w_pool_});
    params.push_back({prefix + "phi", &phi_});
}

PoolResult pool_once(const graph::GraphState& state, PoolLayer& layer, bool renormalize_adjacency) {
    const auto& fs = state.features.shape();
    if (fs.size() != 2 || fs[1] != layer.input_width())
        throw DimensionError("pool_once: features " + shape_str(fs) + " do not match layer input width " +
                             std::to_string(layer.input_width()));
    auto& tape = state.features.tape();
    PoolResult r;
    r.centroids = layer.centroids(state.features);
    r.assignment = assignment_matrix(r.centroids, state.features, tape.parameter(layer.phi())).mixed;
    r.state = coarsen(state, r.assignment, tape.parameter(layer.w_pool()), renormalize_adjacency);
    return r;
}

PoolResult memory_pool_once(const graph::GraphState& state, PoolLayer& layer, bool renormalize_adjacency) {
    if (layer.kind() != PoolKind::memory) throw ConfigError("memory_pool_once needs a memory pool layer");
    return pool_once(state, layer, renormalize_adjacency);
}

ad::Var mean_pool(const graph::GraphState& state) { return ad::reduce_mean(state.features, 0); }

PoolStack::PoolStack(PoolStackConfig config, std::size_t num_nodes, std::size_t d_in, Rng& rng)
    : config_(std::move(config)) {
    const std::size_t d_out = config_.output_width ? config_.output_width : d_in;
    if (config_.kind == PoolKind::mean) {
        output_width_ = d_in;
        return;
    }
    schedule_ = config_.clusters.empty() ? cluster_schedule(num_nodes, config_.reduction) : config_.clusters;
    if (schedule_.back() != 1) throw ConfigError("the last pooling layer must have exactly one cluster");
    for (std::size_t i = 1; i < schedule_.size(); ++i)
        if (schedule_[i] >= schedule_[i - 1]) throw ConfigError("cluster counts must strictly decrease");
    std::size_t d = d_in;
    for (auto clusters : schedule_) {
        layers_.emplace_back(config_.kind, d, d_out, config_.heads, clusters, rng);
        d = d_out;
    }
    output_width_ = d;
}

PoolStack::Output PoolStack::forward(const graph::GraphState& state) {
    Output out;
    if (config_.kind == PoolKind::mean) {
        out.x_final = mean_pool(state);
        return out;
    }
    graph::GraphState cur = state;
    for (auto& layer : layers_) {
        out.layers.push_back(pool_once(cur, layer, config_.renormalize_adjacency));
        cur = out.layers.back().state;
    }
    out.x_final = cur.features;
    return out;
}

void PoolStack::collect(const std::string& prefix, ParamList& params) {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(prefix + std::to_string(i) + ".", params);
}

ad::Var pool_to_single(const graph::GraphState& state, PoolStack& stack) { return stack.forward(state).x_final; }

}  // namespace mtpool::pool
